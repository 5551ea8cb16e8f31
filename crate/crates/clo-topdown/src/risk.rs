//! Bump-remap-reprice risk measures: loan-price deltas, the tranche01 matrix,
//! and quote-bump recalibration experiments.
//!
//! Loan-price deltas bump the bespoke market loan price with the index basis
//! held fixed (re-deriving it would cancel the bump), remap, and reprice.
//! Tranche01 bumps one index quote at a time, recalibrates the index MISD,
//! recomputes the basis per [`BasisMode`] with the index market loan price
//! held fixed, remaps the bespoke, and differences its prices.
//!
//! [`RiskConstraintMode`] controls the bespoke constraints during bumped
//! remaps. `Hard` re-enforces pinned prices, so a pinned tranche shows zero
//! sensitivity by construction. `CoBump` shifts a pinned target by the bump
//! when the bumped index tranche has the same name (AAA tracking AAA); it
//! only differs from `Hard` for tranche01, since a loan-price bump bumps no
//! index tranche. `Soft` relaxes all bespoke constraints to quadratic
//! penalties of the given weight, letting pinned tranches co-move with the
//! market; small weights approach pure repricing under the recalibrated
//! prior, which is the regime where the tranche01 matrix shows the cleanest
//! same-rating diagonal.
//!
//! Bump runs are independent and execute in parallel under the `parallel`
//! feature; results are assembled in tranche order either way, and every
//! number is reproducible bit-identically on rerun.

use thiserror::Error;

use crate::deal::{DealQuotes, ScenarioSet, TranchePvMatrix};
use crate::entropy::{solve_min_cross_entropy, ConstraintMode, SolverSettings};
use crate::exec;
use crate::pricing::{
    bespoke_constraints, calibrate_index, price_tranches, BespokeSpec, CalibratedIndex,
    PricingError,
};

#[derive(Debug, Error)]
pub enum RiskError {
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error("bespoke market loan price is required for loan-price deltas")]
    MissingLoanPrice,
    #[error("bump size must be positive")]
    InvalidBump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BumpScheme {
    Forward,
    Central,
}

/// Treatment of the bespoke constraints in bumped remaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskConstraintMode {
    Hard,
    Soft { weight: f64 },
    CoBump,
}

/// Whether the index basis fed to the bespoke loan constraint is recomputed
/// from each bumped recalibration (index market loan price held fixed) or
/// frozen at its baseline value. Only tranche01 is affected; loan-price
/// deltas always hold the basis fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisMode {
    Reimplied,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpConfig {
    /// Bump size in points.
    pub bump_size: f64,
    pub scheme: BumpScheme,
    pub constraint_mode: RiskConstraintMode,
    pub basis_mode: BasisMode,
}

impl Default for BumpConfig {
    fn default() -> Self {
        Self {
            bump_size: 1.0,
            scheme: BumpScheme::Forward,
            constraint_mode: RiskConstraintMode::Hard,
            basis_mode: BasisMode::Reimplied,
        }
    }
}

/// Assembled risk numbers plus the configuration they were produced under.
/// `deltas` align with `bespoke_tranches`; the tranche01 matrix is indexed
/// `[bespoke tranche][index tranche]` with `None` marking entries whose
/// bumped solve failed.
#[derive(Debug, Clone)]
pub struct RiskReport {
    pub config: BumpConfig,
    pub bespoke_tranches: Vec<String>,
    pub index_tranches: Vec<String>,
    pub deltas: Option<Vec<f64>>,
    pub tranche01: Option<Vec<Vec<Option<f64>>>>,
    /// Per-column failure messages for unavailable tranche01 entries.
    pub failures: Vec<(String, String)>,
}

fn effective_settings(settings: &SolverSettings, mode: RiskConstraintMode) -> SolverSettings {
    let mut s = settings.clone();
    s.mode = match mode {
        RiskConstraintMode::Soft { weight } => ConstraintMode::Soft { weight },
        RiskConstraintMode::Hard | RiskConstraintMode::CoBump => ConstraintMode::Hard,
    };
    s
}

fn remap_prices(
    prior: &crate::entropy::Misd,
    basis: Option<f64>,
    bespoke: &BespokeSpec,
    pins: &[(String, f64)],
    settings: &SolverSettings,
) -> Result<Vec<f64>, PricingError> {
    let constraints = bespoke_constraints(bespoke, basis, pins)?;
    let (misd, _) = solve_min_cross_entropy(prior, &constraints, settings)?;
    price_tranches(&misd, &bespoke.pv)
}

/// Sensitivity of every bespoke tranche price to a one-point move in the
/// bespoke average loan price, in points per point.
pub fn loan_price_delta(
    index: &CalibratedIndex,
    bespoke: &BespokeSpec,
    config: &BumpConfig,
    settings: &SolverSettings,
) -> Result<Vec<f64>, RiskError> {
    if !(config.bump_size > 0.0) {
        return Err(RiskError::InvalidBump);
    }
    let loan = bespoke
        .market_loan_price
        .ok_or(RiskError::MissingLoanPrice)?;
    let s_eff = effective_settings(settings, config.constraint_mode);
    let h = config.bump_size;

    let priced_at = |loan_price: f64| -> Result<Vec<f64>, PricingError> {
        let mut shifted = bespoke.clone();
        shifted.market_loan_price = Some(loan_price);
        remap_prices(
            &index.misd,
            index.basis,
            &shifted,
            &bespoke.pinned_tranches,
            &s_eff,
        )
    };

    // Baseline also validates feasibility for the central scheme.
    let base = priced_at(loan)?;
    let bumps: Vec<f64> = match config.scheme {
        BumpScheme::Forward => vec![loan + h],
        BumpScheme::Central => vec![loan + h, loan - h],
    };
    let mut results = exec::map_indexed(bumps.len(), |i| priced_at(bumps[i]));
    let up = results.remove(0)?;
    let deltas = match config.scheme {
        BumpScheme::Forward => up.iter().zip(&base).map(|(u, b)| (u - b) / h).collect(),
        BumpScheme::Central => {
            let down = results.remove(0)?;
            up.iter()
                .zip(&down)
                .map(|(u, d)| (u - d) / (2.0 * h))
                .collect()
        }
    };
    Ok(deltas)
}

/// Outcome of a tranche01 sweep: matrix rows follow the bespoke PV tranche
/// order, columns the quoted index tranches in PV order.
#[derive(Debug, Clone)]
pub struct Tranche01Outcome {
    pub bespoke_tranches: Vec<String>,
    pub index_tranches: Vec<String>,
    pub matrix: Vec<Vec<Option<f64>>>,
    pub failures: Vec<(String, String)>,
}

/// Sensitivity of every bespoke tranche price to a one-point move in each
/// index tranche quote, via bump, recalibrate, remap, reprice.
pub fn tranche01(
    scenarios: &ScenarioSet,
    pv: &TranchePvMatrix,
    quotes: &DealQuotes,
    settings: &SolverSettings,
    bespoke: &BespokeSpec,
    config: &BumpConfig,
) -> Result<Tranche01Outcome, RiskError> {
    if !(config.bump_size > 0.0) {
        return Err(RiskError::InvalidBump);
    }
    let h = config.bump_size;
    let baseline = calibrate_index(scenarios, pv, quotes, settings)?;
    let s_eff = effective_settings(settings, config.constraint_mode);
    let base_prices = remap_prices(
        &baseline.misd,
        baseline.basis,
        bespoke,
        &bespoke.pinned_tranches,
        &s_eff,
    )?;
    let index_tranches = baseline.quoted_tranches();

    let bumped_prices = |tranche: &str, bump: f64| -> Result<Vec<f64>, PricingError> {
        let bumped_quotes = quotes.with_bumped_price(tranche, bump)?;
        let recal = calibrate_index(scenarios, pv, &bumped_quotes, settings)?;
        let basis = match config.basis_mode {
            BasisMode::Reimplied => recal.basis,
            BasisMode::Fixed => baseline.basis,
        };
        let pins: Vec<(String, f64)> = bespoke
            .pinned_tranches
            .iter()
            .map(|(name, target)| {
                let shifted = if config.constraint_mode == RiskConstraintMode::CoBump
                    && name == tranche
                {
                    target + bump
                } else {
                    *target
                };
                (name.clone(), shifted)
            })
            .collect();
        remap_prices(&recal.misd, basis, bespoke, &pins, &s_eff)
    };

    let columns = exec::map_indexed(index_tranches.len(), |j| {
        let name = &index_tranches[j];
        let column: Result<Vec<f64>, PricingError> = match config.scheme {
            BumpScheme::Forward => bumped_prices(name, h)
                .map(|up| up.iter().zip(&base_prices).map(|(u, b)| (u - b) / h).collect()),
            BumpScheme::Central => bumped_prices(name, h).and_then(|up| {
                let down = bumped_prices(name, -h)?;
                Ok(up
                    .iter()
                    .zip(&down)
                    .map(|(u, d)| (u - d) / (2.0 * h))
                    .collect())
            }),
        };
        column
    });

    let n_rows = bespoke.pv.n_tranches();
    let mut matrix = vec![vec![None; index_tranches.len()]; n_rows];
    let mut failures = Vec::new();
    for (j, column) in columns.into_iter().enumerate() {
        match column {
            Ok(values) => {
                for (b, v) in values.into_iter().enumerate() {
                    matrix[b][j] = Some(v);
                }
            }
            Err(e) => failures.push((index_tranches[j].clone(), e.to_string())),
        }
    }
    Ok(Tranche01Outcome {
        bespoke_tranches: bespoke.pv.tranche_names().to_vec(),
        index_tranches,
        matrix,
        failures,
    })
}

/// Recalibrate against the quotes with one named price shifted by `bump`.
/// Probing prices an ingest would reject (for example deep negative bumps) is
/// allowed; such targets surface as solver infeasibility, never as a silent
/// bad distribution.
pub fn quote_bump_recalibration(
    scenarios: &ScenarioSet,
    pv: &TranchePvMatrix,
    quotes: &DealQuotes,
    tranche: &str,
    bump: f64,
    settings: &SolverSettings,
) -> Result<CalibratedIndex, PricingError> {
    let bumped = quotes.with_bumped_price(tranche, bump)?;
    calibrate_index(scenarios, pv, &bumped, settings)
}
