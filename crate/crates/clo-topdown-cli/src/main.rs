//! Command-line front end: calibrate an index MISD, map it to bespoke deals,
//! run bump-remap-reprice risk sweeps, and generate synthetic PV matrices.
//!
//! Outputs are written atomically (staged to a temporary file, renamed on
//! success) so a failed run leaves no partial files. Exit codes: 0 success,
//! 2 validation error, 3 solver error. Identical flags and input files
//! produce byte-identical outputs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clo_topdown::deal;
use clo_topdown::entropy::{Misd, SolveError};
use clo_topdown::pricing::{
    calibrate_index, map_bespoke_with_prior, price_tranches, BespokeSpec, PricingError,
};
use clo_topdown::report::{
    deltas_csv, misd_csv, tranche01_csv, ConfigRecord, QuoteBumpRecord, RiskRecord, RunReport,
    TranchePriceRecord,
};
use clo_topdown::risk::{
    loan_price_delta, tranche01, BasisMode, BumpConfig, BumpScheme, RiskConstraintMode,
    RiskError, RiskReport,
};
use clo_topdown::synth::{build_pv_matrix, SynthError, SyntheticDealSpec};
use clo_topdown::SolverSettings;

#[derive(Parser)]
#[command(
    name = "clo-topdown",
    about = "Top-down cash-CLO analytics: MISD calibration, bespoke mapping, risk",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SolverFlags {
    /// Maximum absolute constraint violation in scaled units.
    #[arg(long, default_value_t = 1e-8)]
    residual_tol: f64,
    /// Newton iteration budget.
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    /// Divisor applied to constraint coefficients (points to fractions).
    #[arg(long, default_value_t = 100.0)]
    scale: f64,
}

impl SolverFlags {
    fn settings(&self) -> SolverSettings {
        SolverSettings {
            residual_tol: self.residual_tol,
            max_iterations: self.max_iterations,
            scale: self.scale,
            ..SolverSettings::default()
        }
    }

    fn echo(&self, config: &mut ConfigRecord) {
        config.residual_tol = self.residual_tol;
        config.max_iterations = self.max_iterations;
        config.scale = self.scale;
    }
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the index MISD to quoted tranche prices.
    Calibrate {
        /// Scenario CSV (cadr,capr,crr in percent).
        #[arg(long)]
        scenarios: PathBuf,
        /// Tranche PV matrix CSV keyed by CADR percent.
        #[arg(long)]
        pv: PathBuf,
        /// Quotes CSV (tranche,price plus !metadata lines).
        #[arg(long)]
        quotes: PathBuf,
        /// JSON report output path.
        #[arg(long)]
        out: PathBuf,
        /// MISD CSV output path (default: <out>.misd.csv).
        #[arg(long)]
        misd_out: Option<PathBuf>,
        /// Quote bump(s) TRANCHE=DELTA applied before calibrating, e.g. B=+5.
        #[arg(long = "bump", value_name = "TRANCHE=DELTA")]
        bumps: Vec<String>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Map a calibrated index MISD onto a bespoke deal.
    Map {
        /// Calibration report produced by `calibrate`.
        #[arg(long)]
        index_report: PathBuf,
        /// Bespoke tranche PV matrix CSV on the same scenario grid.
        #[arg(long)]
        pv: PathBuf,
        /// JSON report output path.
        #[arg(long)]
        out: PathBuf,
        /// MISD CSV output path (default: <out>.misd.csv).
        #[arg(long)]
        misd_out: Option<PathBuf>,
        /// Average market price of the bespoke loans (enables the loan
        /// constraint at index basis + this price + manager adjustment).
        #[arg(long)]
        loan_price: Option<f64>,
        /// Manager quality adjustment in points.
        #[arg(long, default_value_t = 0.0)]
        manager_adj: f64,
        /// Pinned tranche price(s) NAME=PRICE, e.g. A=89.35.
        #[arg(long = "pin", value_name = "NAME=PRICE")]
        pins: Vec<String>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Bump-remap-reprice risk: loan-price deltas or the tranche01 matrix.
    Risk {
        /// delta | tranche01
        #[arg(long)]
        mode: String,
        #[arg(long)]
        scenarios: PathBuf,
        /// Index tranche PV matrix CSV.
        #[arg(long)]
        pv: PathBuf,
        /// Index quotes CSV.
        #[arg(long)]
        quotes: PathBuf,
        /// Bespoke tranche PV matrix CSV.
        #[arg(long)]
        bespoke_pv: PathBuf,
        /// JSON report output path.
        #[arg(long)]
        out: PathBuf,
        /// Risk numbers as CSV (default: <out>.csv).
        #[arg(long)]
        csv_out: Option<PathBuf>,
        /// Average market price of the bespoke loans.
        #[arg(long)]
        loan_price: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        manager_adj: f64,
        /// Pinned tranche price(s) NAME=PRICE.
        #[arg(long = "pin", value_name = "NAME=PRICE")]
        pins: Vec<String>,
        /// Bump size in points.
        #[arg(long = "bump", default_value_t = 1.0)]
        bump_size: f64,
        /// forward | central
        #[arg(long, default_value = "forward")]
        scheme: String,
        /// hard | soft:WEIGHT | co-bump
        #[arg(long, default_value = "hard")]
        constraint_mode: String,
        /// reimplied | fixed — basis treatment under quote bumps.
        #[arg(long, default_value = "reimplied")]
        basis_mode: String,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Generate a synthetic-index PV matrix over a scenario grid.
    Synth {
        /// Synthetic deal spec (TOML).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        /// PV matrix CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failures carry the exit code mandated for their class.
enum CliError {
    Validation(String),
    Solver(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Solver(m) => m,
        }
    }
}

impl From<deal::DataError> for CliError {
    fn from(e: deal::DataError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<PricingError> for CliError {
    fn from(e: PricingError) -> Self {
        match e {
            PricingError::Solver(inner) => CliError::Solver(inner.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<RiskError> for CliError {
    fn from(e: RiskError) -> Self {
        match e {
            RiskError::Pricing(inner) => inner.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Validation(e.to_string())
    }
}

/// Collects outputs and writes them atomically: everything is staged next to
/// its destination and renamed only after every stage succeeded.
struct StagedOutputs {
    files: Vec<(PathBuf, String)>,
}

impl StagedOutputs {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn add(&mut self, path: PathBuf, contents: String) {
        self.files.push((path, contents));
    }

    fn commit(self) -> Result<(), CliError> {
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
        for (path, contents) in &self.files {
            let mut tmp = path.clone().into_os_string();
            tmp.push(".tmp");
            let tmp = PathBuf::from(tmp);
            if let Err(e) = std::fs::write(&tmp, contents) {
                for (t, _) in &staged {
                    let _ = std::fs::remove_file(t);
                }
                return Err(CliError::Validation(format!(
                    "cannot write {}: {e}",
                    tmp.display()
                )));
            }
            staged.push((tmp, path.clone()));
        }
        for (tmp, path) in &staged {
            if let Err(e) = std::fs::rename(tmp, path) {
                for (t, _) in &staged {
                    let _ = std::fs::remove_file(t);
                }
                return Err(CliError::Validation(format!(
                    "cannot move output into place at {}: {e}",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

fn default_sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn parse_assignment(raw: &str, what: &str) -> Result<(String, f64), CliError> {
    let (name, value) = raw.split_once('=').ok_or_else(|| {
        CliError::Validation(format!("{what} must look like NAME=VALUE, got {raw:?}"))
    })?;
    let value: f64 = value.trim().parse().map_err(|_| {
        CliError::Validation(format!("cannot parse {what} value in {raw:?}"))
    })?;
    if name.trim().is_empty() {
        return Err(CliError::Validation(format!("empty name in {what} {raw:?}")));
    }
    Ok((name.trim().to_string(), value))
}

fn parse_scheme(raw: &str) -> Result<BumpScheme, CliError> {
    match raw {
        "forward" => Ok(BumpScheme::Forward),
        "central" => Ok(BumpScheme::Central),
        other => Err(CliError::Validation(format!(
            "unknown scheme {other:?} (expected forward or central)"
        ))),
    }
}

fn parse_constraint_mode(raw: &str) -> Result<RiskConstraintMode, CliError> {
    match raw {
        "hard" => Ok(RiskConstraintMode::Hard),
        "co-bump" => Ok(RiskConstraintMode::CoBump),
        other => {
            if let Some(weight) = other.strip_prefix("soft:") {
                let weight: f64 = weight.parse().map_err(|_| {
                    CliError::Validation(format!("cannot parse soft weight in {raw:?}"))
                })?;
                if !(weight > 0.0) {
                    return Err(CliError::Validation("soft weight must be > 0".into()));
                }
                Ok(RiskConstraintMode::Soft { weight })
            } else {
                Err(CliError::Validation(format!(
                    "unknown constraint mode {other:?} (expected hard, soft:WEIGHT, or co-bump)"
                )))
            }
        }
    }
}

fn parse_basis_mode(raw: &str) -> Result<BasisMode, CliError> {
    match raw {
        "reimplied" => Ok(BasisMode::Reimplied),
        "fixed" => Ok(BasisMode::Fixed),
        other => Err(CliError::Validation(format!(
            "unknown basis mode {other:?} (expected reimplied or fixed)"
        ))),
    }
}

fn named_prices(names: &[String], prices: &[f64]) -> Vec<(String, f64)> {
    names.iter().cloned().zip(prices.iter().copied()).collect()
}

fn run_calibrate(
    scenarios_path: &Path,
    pv_path: &Path,
    quotes_path: &Path,
    out: &Path,
    misd_out: Option<&Path>,
    bumps: &[String],
    solver: &SolverFlags,
) -> Result<StagedOutputs, CliError> {
    let scenarios = deal::load_scenarios(scenarios_path)?;
    let pv = deal::load_pv_matrix(pv_path, &scenarios)?;
    let mut quotes = deal::load_quotes(quotes_path)?;
    let mut bump_records = Vec::new();
    for raw in bumps {
        let (tranche, bump) = parse_assignment(raw, "--bump")?;
        quotes = quotes.with_bumped_price(&tranche, bump)?;
        bump_records.push(QuoteBumpRecord { tranche, bump });
    }
    let settings = solver.settings();
    let index = calibrate_index(&scenarios, &pv, &quotes, &settings)?;
    let prices = price_tranches(&index.misd, &pv)?;

    let mut config = ConfigRecord {
        scenarios: Some(scenarios_path.display().to_string()),
        pv: Some(pv_path.display().to_string()),
        quotes: Some(quotes_path.display().to_string()),
        quote_bumps: (!bump_records.is_empty()).then_some(bump_records),
        ..ConfigRecord::default()
    };
    solver.echo(&mut config);
    let report = RunReport::new(
        "calibrate",
        config,
        &scenarios,
        &index.misd,
        named_prices(pv.tranche_names(), &prices),
        &index.implied,
        quotes.market_loan_price,
        index.basis,
        &index.diagnostics,
        None,
    );

    let mut outputs = StagedOutputs::new();
    outputs.add(out.to_path_buf(), report.to_json());
    let misd_path = misd_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_sibling(out, "misd.csv"));
    outputs.add(misd_path, misd_csv(&index.misd, &scenarios));
    Ok(outputs)
}

#[allow(clippy::too_many_arguments)]
fn run_map(
    index_report_path: &Path,
    pv_path: &Path,
    out: &Path,
    misd_out: Option<&Path>,
    loan_price: Option<f64>,
    manager_adj: f64,
    pins: &[String],
    solver: &SolverFlags,
) -> Result<StagedOutputs, CliError> {
    let text = std::fs::read_to_string(index_report_path).map_err(|e| {
        CliError::Validation(format!("cannot read {}: {e}", index_report_path.display()))
    })?;
    let index_report = RunReport::from_json(&text).map_err(|e| {
        CliError::Validation(format!(
            "cannot parse index report {}: {e}",
            index_report_path.display()
        ))
    })?;
    let scenarios = index_report.scenario_set()?;
    let prior: Misd = index_report.misd()?;
    let pv = deal::load_pv_matrix(pv_path, &scenarios)?;
    let pinned: Result<Vec<(String, f64)>, CliError> = pins
        .iter()
        .map(|raw| parse_assignment(raw, "--pin"))
        .collect();
    let bespoke = BespokeSpec {
        pv: pv.clone(),
        market_loan_price: loan_price,
        manager_adjustment: manager_adj,
        pinned_tranches: pinned?,
    };
    let settings = solver.settings();
    let mapped =
        map_bespoke_with_prior(&scenarios, &prior, index_report.basis, &bespoke, &settings)?;

    let mut config = ConfigRecord {
        index_report: Some(index_report_path.display().to_string()),
        pv: Some(pv_path.display().to_string()),
        loan_price,
        manager_adjustment: Some(manager_adj),
        pins: (!bespoke.pinned_tranches.is_empty()).then(|| {
            bespoke
                .pinned_tranches
                .iter()
                .map(|(tranche, price)| TranchePriceRecord {
                    tranche: tranche.clone(),
                    price: *price,
                })
                .collect()
        }),
        ..ConfigRecord::default()
    };
    solver.echo(&mut config);
    let report = RunReport::new(
        "map",
        config,
        &scenarios,
        &mapped.misd,
        named_prices(pv.tranche_names(), &mapped.prices),
        &mapped.implied,
        loan_price,
        index_report.basis,
        &mapped.diagnostics,
        None,
    );

    let mut outputs = StagedOutputs::new();
    outputs.add(out.to_path_buf(), report.to_json());
    let misd_path = misd_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_sibling(out, "misd.csv"));
    outputs.add(misd_path, misd_csv(&mapped.misd, &scenarios));
    Ok(outputs)
}

#[allow(clippy::too_many_arguments)]
fn run_risk(
    mode: &str,
    scenarios_path: &Path,
    pv_path: &Path,
    quotes_path: &Path,
    bespoke_pv_path: &Path,
    out: &Path,
    csv_out: Option<&Path>,
    loan_price: Option<f64>,
    manager_adj: f64,
    pins: &[String],
    bump_size: f64,
    scheme: &str,
    constraint_mode: &str,
    basis_mode: &str,
    solver: &SolverFlags,
) -> Result<StagedOutputs, CliError> {
    let scenarios = deal::load_scenarios(scenarios_path)?;
    let pv = deal::load_pv_matrix(pv_path, &scenarios)?;
    let quotes = deal::load_quotes(quotes_path)?;
    let bespoke_pv = deal::load_pv_matrix(bespoke_pv_path, &scenarios)?;
    let pinned: Result<Vec<(String, f64)>, CliError> = pins
        .iter()
        .map(|raw| parse_assignment(raw, "--pin"))
        .collect();
    let bespoke = BespokeSpec {
        pv: bespoke_pv,
        market_loan_price: loan_price,
        manager_adjustment: manager_adj,
        pinned_tranches: pinned?,
    };
    let config = BumpConfig {
        bump_size,
        scheme: parse_scheme(scheme)?,
        constraint_mode: parse_constraint_mode(constraint_mode)?,
        basis_mode: parse_basis_mode(basis_mode)?,
    };
    let settings = solver.settings();
    let index = calibrate_index(&scenarios, &pv, &quotes, &settings)?;
    let index_prices = price_tranches(&index.misd, &pv)?;

    let (risk_report, csv) = match mode {
        "delta" => {
            let deltas = loan_price_delta(&index, &bespoke, &config, &settings)?;
            let names = bespoke.pv.tranche_names().to_vec();
            let csv = deltas_csv(&names, &deltas);
            (
                RiskReport {
                    config,
                    bespoke_tranches: names,
                    index_tranches: vec![],
                    deltas: Some(deltas),
                    tranche01: None,
                    failures: vec![],
                },
                csv,
            )
        }
        "tranche01" => {
            let outcome = tranche01(&scenarios, &pv, &quotes, &settings, &bespoke, &config)?;
            let csv = tranche01_csv(
                &outcome.bespoke_tranches,
                &outcome.index_tranches,
                &outcome.matrix,
            );
            (
                RiskReport {
                    config,
                    bespoke_tranches: outcome.bespoke_tranches,
                    index_tranches: outcome.index_tranches,
                    deltas: None,
                    tranche01: Some(outcome.matrix),
                    failures: outcome.failures,
                },
                csv,
            )
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown risk mode {other:?} (expected delta or tranche01)"
            )))
        }
    };
    for (tranche, message) in &risk_report.failures {
        eprintln!("warning: bump column {tranche} unavailable: {message}");
    }

    let mut config_record = ConfigRecord {
        scenarios: Some(scenarios_path.display().to_string()),
        pv: Some(pv_path.display().to_string()),
        quotes: Some(quotes_path.display().to_string()),
        bespoke_pv: Some(bespoke_pv_path.display().to_string()),
        loan_price,
        manager_adjustment: Some(manager_adj),
        mode: Some(mode.to_string()),
        pins: (!bespoke.pinned_tranches.is_empty()).then(|| {
            bespoke
                .pinned_tranches
                .iter()
                .map(|(tranche, price)| TranchePriceRecord {
                    tranche: tranche.clone(),
                    price: *price,
                })
                .collect()
        }),
        ..ConfigRecord::default()
    };
    solver.echo(&mut config_record);
    let report = RunReport::new(
        "risk",
        config_record,
        &scenarios,
        &index.misd,
        named_prices(pv.tranche_names(), &index_prices),
        &index.implied,
        quotes.market_loan_price,
        index.basis,
        &index.diagnostics,
        Some(RiskRecord::from(&risk_report)),
    );

    let mut outputs = StagedOutputs::new();
    outputs.add(out.to_path_buf(), report.to_json());
    let csv_path = csv_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_sibling(out, "csv"));
    outputs.add(csv_path, csv);
    Ok(outputs)
}

fn run_synth(
    spec_path: &Path,
    scenarios_path: &Path,
    out: &Path,
) -> Result<StagedOutputs, CliError> {
    let spec = SyntheticDealSpec::load(spec_path)?;
    let scenarios = deal::load_scenarios(scenarios_path)?;
    let matrix = build_pv_matrix(&spec, &scenarios, spec.periods())?;
    let mut outputs = StagedOutputs::new();
    outputs.add(out.to_path_buf(), deal::render_pv_matrix(&matrix, &scenarios)?);
    Ok(outputs)
}

fn run(cli: Cli) -> Result<StagedOutputs, CliError> {
    match &cli.command {
        Command::Calibrate {
            scenarios,
            pv,
            quotes,
            out,
            misd_out,
            bumps,
            solver,
        } => run_calibrate(scenarios, pv, quotes, out, misd_out.as_deref(), bumps, solver),
        Command::Map {
            index_report,
            pv,
            out,
            misd_out,
            loan_price,
            manager_adj,
            pins,
            solver,
        } => run_map(
            index_report,
            pv,
            out,
            misd_out.as_deref(),
            *loan_price,
            *manager_adj,
            pins,
            solver,
        ),
        Command::Risk {
            mode,
            scenarios,
            pv,
            quotes,
            bespoke_pv,
            out,
            csv_out,
            loan_price,
            manager_adj,
            pins,
            bump_size,
            scheme,
            constraint_mode,
            basis_mode,
            solver,
        } => run_risk(
            mode,
            scenarios,
            pv,
            quotes,
            bespoke_pv,
            out,
            csv_out.as_deref(),
            *loan_price,
            *manager_adj,
            pins,
            *bump_size,
            scheme,
            constraint_mode,
            basis_mode,
            solver,
        ),
        Command::Synth {
            spec,
            scenarios,
            out,
        } => run_synth(spec, scenarios, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).and_then(StagedOutputs::commit) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
