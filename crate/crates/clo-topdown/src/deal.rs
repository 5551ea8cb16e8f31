//! Domain types, file ingestion, and validation for scenarios, PV matrices,
//! and deal quotes.
//!
//! File conventions: CSV, UTF-8, comma separated, `.` decimal, mandatory
//! header row. Rates and prices are percent/points in files; scenario rates
//! are stored as fractions in memory, prices stay in points. All types are
//! immutable after construction and safe to share across threads.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Ingestion and validation errors. Loading is total: a malformed file yields
/// an error, never a partially populated object.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: bad header, expected {expected}")]
    Header { path: PathBuf, expected: String },
    #[error("{path}: no data rows")]
    Empty { path: PathBuf },
    #[error("{what} is {value}, outside [0, 100] percent")]
    OutOfRange { what: String, value: f64 },
    #[error("duplicate scenario key cadr={key}")]
    DuplicateScenarioKey { key: f64 },
    #[error("duplicate tranche {name}")]
    DuplicateTranche { name: String },
    #[error("negative {what}: {value}")]
    Negative { what: String, value: f64 },
    #[error("scenario alignment: {0}")]
    ScenarioMismatch(String),
    #[error("unknown tranche {name}")]
    UnknownTranche { name: String },
    #[error("{0}")]
    Invalid(String),
}

/// One loan-market state: constant annualized default, prepayment, and
/// recovery rates, all as fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub id: usize,
    pub cadr: f64,
    pub capr: f64,
    pub crr: f64,
}

/// The ordered collection of all market scenarios. Non-empty, ids strictly
/// increasing. Scenarios are keyed externally by their CADR percent value.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn new(scenarios: Vec<Scenario>) -> Result<Self, DataError> {
        if scenarios.is_empty() {
            return Err(DataError::Invalid("scenario set is empty".into()));
        }
        for s in &scenarios {
            for (what, v) in [("cadr", s.cadr), ("capr", s.capr), ("crr", s.crr)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(DataError::OutOfRange {
                        what: format!("scenario {} {what}", s.id),
                        value: v * 100.0,
                    });
                }
            }
        }
        if !scenarios.windows(2).all(|w| w[0].id < w[1].id) {
            return Err(DataError::Invalid(
                "scenario ids must be strictly increasing".into(),
            ));
        }
        Ok(Self { scenarios })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn get(&self, i: usize) -> &Scenario {
        &self.scenarios[i]
    }

    /// CADR keys in percent, the external row identifiers of PV files.
    pub fn cadr_keys(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.cadr * 100.0).collect()
    }

    pub fn cadr_column(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.cadr).collect()
    }

    pub fn capr_column(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.capr).collect()
    }

    pub fn crr_column(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.crr).collect()
    }

    fn index_of_key(&self, key_percent: f64) -> Option<usize> {
        self.scenarios
            .iter()
            .position(|s| (s.cadr * 100.0 - key_percent).abs() <= 1e-9)
    }
}

/// Per-scenario, per-tranche risk-free-discounted PVs in points, plus the
/// collateral price column. Rows are aligned to a [`ScenarioSet`]; columns are
/// stored per tranche.
#[derive(Debug, Clone, PartialEq)]
pub struct TranchePvMatrix {
    scenario_ids: Vec<usize>,
    tranche_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    collateral: Vec<f64>,
}

impl TranchePvMatrix {
    /// `columns[j][i]` is the PV of tranche `j` under scenario `i`.
    pub fn new(
        scenario_ids: Vec<usize>,
        tranche_names: Vec<String>,
        columns: Vec<Vec<f64>>,
        collateral: Vec<f64>,
    ) -> Result<Self, DataError> {
        let n = scenario_ids.len();
        if n == 0 {
            return Err(DataError::Invalid("PV matrix has no rows".into()));
        }
        if tranche_names.len() != columns.len() {
            return Err(DataError::Invalid(
                "tranche name and column counts differ".into(),
            ));
        }
        for (j, name) in tranche_names.iter().enumerate() {
            if tranche_names[..j].contains(name) {
                return Err(DataError::DuplicateTranche { name: name.clone() });
            }
        }
        if collateral.len() != n || columns.iter().any(|c| c.len() != n) {
            return Err(DataError::Invalid(
                "column length does not match scenario count".into(),
            ));
        }
        for (name, col) in tranche_names.iter().zip(&columns) {
            if let Some(&v) = col.iter().find(|v| **v < 0.0) {
                return Err(DataError::Negative {
                    what: format!("PV for tranche {name}"),
                    value: v,
                });
            }
        }
        if let Some(&v) = collateral.iter().find(|v| **v < 0.0) {
            return Err(DataError::Negative {
                what: "collateral price".into(),
                value: v,
            });
        }
        Ok(Self {
            scenario_ids,
            tranche_names,
            columns,
            collateral,
        })
    }

    pub fn n_scenarios(&self) -> usize {
        self.scenario_ids.len()
    }

    pub fn n_tranches(&self) -> usize {
        self.tranche_names.len()
    }

    pub fn scenario_ids(&self) -> &[usize] {
        &self.scenario_ids
    }

    pub fn tranche_names(&self) -> &[String] {
        &self.tranche_names
    }

    pub fn collateral(&self) -> &[f64] {
        &self.collateral
    }

    pub fn column_at(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn column(&self, tranche: &str) -> Result<&[f64], DataError> {
        self.tranche_names
            .iter()
            .position(|n| n == tranche)
            .map(|j| self.columns[j].as_slice())
            .ok_or_else(|| DataError::UnknownTranche {
                name: tranche.to_string(),
            })
    }

    pub fn value(&self, scenario: usize, tranche: usize) -> f64 {
        self.columns[tranche][scenario]
    }
}

/// A key/value metadata line from a quotes file. Carried verbatim; never used
/// by pricing math.
#[derive(Debug, Clone, PartialEq)]
pub struct MetadataEntry {
    pub key: String,
    pub tranche: Option<String>,
    pub value: String,
}

/// Observed market prices per tranche plus deal metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DealQuotes {
    prices: Vec<(String, f64)>,
    pub market_loan_price: Option<f64>,
    pub metadata: Vec<MetadataEntry>,
}

impl DealQuotes {
    pub fn new(
        prices: Vec<(String, f64)>,
        market_loan_price: Option<f64>,
        metadata: Vec<MetadataEntry>,
    ) -> Result<Self, DataError> {
        if prices.is_empty() {
            return Err(DataError::Invalid("no tranche prices".into()));
        }
        for (j, (name, price)) in prices.iter().enumerate() {
            if prices[..j].iter().any(|(n, _)| n == name) {
                return Err(DataError::DuplicateTranche { name: name.clone() });
            }
            if *price < 0.0 {
                return Err(DataError::Negative {
                    what: format!("price for tranche {name}"),
                    value: *price,
                });
            }
        }
        Ok(Self {
            prices,
            market_loan_price,
            metadata,
        })
    }

    pub fn prices(&self) -> &[(String, f64)] {
        &self.prices
    }

    pub fn price(&self, tranche: &str) -> Option<f64> {
        self.prices
            .iter()
            .find(|(n, _)| n == tranche)
            .map(|(_, p)| *p)
    }

    /// Clone with one tranche price shifted. Used by bump experiments, which
    /// may legitimately probe prices a file loader would reject; infeasible
    /// bumped targets surface as solver errors downstream.
    pub fn with_bumped_price(&self, tranche: &str, bump: f64) -> Result<Self, DataError> {
        let mut prices = self.prices.clone();
        let slot = prices
            .iter_mut()
            .find(|(n, _)| n == tranche)
            .ok_or_else(|| DataError::UnknownTranche {
                name: tranche.to_string(),
            })?;
        slot.1 += bump;
        Ok(Self {
            prices,
            market_loan_price: self.market_loan_price,
            metadata: self.metadata.clone(),
        })
    }
}

fn read_to_string(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_percent(raw: &str, what: &str, path: &Path, line: usize) -> Result<f64, DataError> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| DataError::Malformed {
            path: path.to_path_buf(),
            line,
            msg: format!("cannot parse {what} value {raw:?}"),
        })?;
    if !v.is_finite() || !(0.0..=100.0).contains(&v) {
        return Err(DataError::OutOfRange {
            what: what.to_string(),
            value: v,
        });
    }
    Ok(v)
}

fn parse_number(raw: &str, what: &str, path: &Path, line: usize) -> Result<f64, DataError> {
    let v: f64 = raw.trim().parse().map_err(|_| DataError::Malformed {
        path: path.to_path_buf(),
        line,
        msg: format!("cannot parse {what} value {raw:?}"),
    })?;
    if !v.is_finite() {
        return Err(DataError::Malformed {
            path: path.to_path_buf(),
            line,
            msg: format!("{what} is not finite"),
        });
    }
    Ok(v)
}

/// Load a scenario file: header `cadr,capr,crr`, one row per scenario, values
/// in percent. Ids are assigned by row order; fractions are percent/100.
pub fn load_scenarios(path: impl AsRef<Path>) -> Result<ScenarioSet, DataError> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l,
            None => return Err(DataError::Empty { path: path.into() }),
        }
    };
    let cols: Vec<_> = header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    if cols != ["cadr", "capr", "crr"] {
        return Err(DataError::Header {
            path: path.into(),
            expected: "cadr,capr,crr".into(),
        });
    }
    let mut scenarios = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<_> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(DataError::Malformed {
                path: path.into(),
                line: ln + 1,
                msg: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let cadr = parse_percent(fields[0], "cadr", path, ln + 1)?;
        let capr = parse_percent(fields[1], "capr", path, ln + 1)?;
        let crr = parse_percent(fields[2], "crr", path, ln + 1)?;
        scenarios.push(Scenario {
            id: scenarios.len(),
            cadr: cadr / 100.0,
            capr: capr / 100.0,
            crr: crr / 100.0,
        });
    }
    if scenarios.is_empty() {
        return Err(DataError::Empty { path: path.into() });
    }
    ScenarioSet::new(scenarios)
}

/// Load a PV matrix: first column the scenario CADR key in percent, then one
/// column per tranche, final column `COL` (the collateral price). Rows may
/// appear in any order; the result is aligned to `scenarios`, and every
/// scenario must be present exactly once.
pub fn load_pv_matrix(
    path: impl AsRef<Path>,
    scenarios: &ScenarioSet,
) -> Result<TranchePvMatrix, DataError> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l,
            None => return Err(DataError::Empty { path: path.into() }),
        }
    };
    let cols: Vec<_> = header.split(',').map(|c| c.trim().to_string()).collect();
    if cols.len() < 3 || !cols[0].eq_ignore_ascii_case("cadr") || cols.last().unwrap() != "COL" {
        return Err(DataError::Header {
            path: path.into(),
            expected: "cadr,<tranche...>,COL".into(),
        });
    }
    let tranche_names: Vec<String> = cols[1..cols.len() - 1].to_vec();
    for (j, name) in tranche_names.iter().enumerate() {
        if name.is_empty() {
            return Err(DataError::Header {
                path: path.into(),
                expected: "non-empty tranche names".into(),
            });
        }
        if tranche_names[..j].contains(name) {
            return Err(DataError::DuplicateTranche { name: name.clone() });
        }
    }
    let n = scenarios.len();
    let n_tranches = tranche_names.len();
    let mut columns = vec![vec![0.0; n]; n_tranches];
    let mut collateral = vec![0.0; n];
    let mut seen = vec![false; n];
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<_> = line.split(',').collect();
        if fields.len() != n_tranches + 2 {
            return Err(DataError::Malformed {
                path: path.into(),
                line: ln + 1,
                msg: format!(
                    "expected {} fields, found {}",
                    n_tranches + 2,
                    fields.len()
                ),
            });
        }
        let key = parse_number(fields[0], "cadr key", path, ln + 1)?;
        let row = scenarios
            .index_of_key(key)
            .ok_or_else(|| DataError::ScenarioMismatch(format!("unknown cadr key {key}")))?;
        if seen[row] {
            return Err(DataError::DuplicateScenarioKey { key });
        }
        seen[row] = true;
        for (j, name) in tranche_names.iter().enumerate() {
            let v = parse_number(fields[j + 1], name, path, ln + 1)?;
            if v < 0.0 {
                return Err(DataError::Negative {
                    what: format!("PV for tranche {name}"),
                    value: v,
                });
            }
            columns[j][row] = v;
        }
        let c = parse_number(fields[n_tranches + 1], "COL", path, ln + 1)?;
        if c < 0.0 {
            return Err(DataError::Negative {
                what: "collateral price".into(),
                value: c,
            });
        }
        collateral[row] = c;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        let count = seen.iter().filter(|s| !**s).count();
        return Err(DataError::ScenarioMismatch(format!(
            "{count} scenario(s) missing from PV file, first missing cadr key {}",
            scenarios.get(missing).cadr * 100.0
        )));
    }
    TranchePvMatrix::new((0..n).collect(), tranche_names, columns, collateral)
}

/// Load a quotes file: header `tranche,price`, one row per quoted tranche in
/// points, plus optional `!key,value` or `!key,tranche,value` metadata lines.
/// The reserved key `market_loan_price` populates the matching field.
pub fn load_quotes(path: impl AsRef<Path>) -> Result<DealQuotes, DataError> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l,
            None => return Err(DataError::Empty { path: path.into() }),
        }
    };
    let cols: Vec<_> = header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    if cols != ["tranche", "price"] {
        return Err(DataError::Header {
            path: path.into(),
            expected: "tranche,price".into(),
        });
    }
    let mut prices: Vec<(String, f64)> = Vec::new();
    let mut market_loan_price = None;
    let mut metadata = Vec::new();
    for (ln, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(meta) = trimmed.strip_prefix('!') {
            let fields: Vec<_> = meta.split(',').map(str::trim).collect();
            match fields.as_slice() {
                ["market_loan_price", raw] => {
                    let v = parse_number(raw, "market_loan_price", path, ln + 1)?;
                    if v < 0.0 {
                        return Err(DataError::Negative {
                            what: "market_loan_price".into(),
                            value: v,
                        });
                    }
                    market_loan_price = Some(v);
                }
                [key, value] => metadata.push(MetadataEntry {
                    key: key.to_string(),
                    tranche: None,
                    value: value.to_string(),
                }),
                [key, tranche, value] => metadata.push(MetadataEntry {
                    key: key.to_string(),
                    tranche: Some(tranche.to_string()),
                    value: value.to_string(),
                }),
                _ => {
                    return Err(DataError::Malformed {
                        path: path.into(),
                        line: ln + 1,
                        msg: "metadata line must be !key,value or !key,tranche,value".into(),
                    })
                }
            }
            continue;
        }
        let fields: Vec<_> = trimmed.split(',').collect();
        if fields.len() != 2 {
            return Err(DataError::Malformed {
                path: path.into(),
                line: ln + 1,
                msg: format!("expected 2 fields, found {}", fields.len()),
            });
        }
        let name = fields[0].trim().to_string();
        if name.is_empty() {
            return Err(DataError::Malformed {
                path: path.into(),
                line: ln + 1,
                msg: "empty tranche name".into(),
            });
        }
        let price = parse_number(fields[1], &name, path, ln + 1)?;
        prices.push((name, price));
    }
    DealQuotes::new(prices, market_loan_price, metadata)
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn write_file(path: &Path, contents: &str) -> Result<(), DataError> {
    std::fs::write(path, contents).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write a scenario set back to the file format accepted by
/// [`load_scenarios`]. Loading the written file reproduces the set exactly.
pub fn write_scenarios(set: &ScenarioSet, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut out = String::from("cadr,capr,crr\n");
    for s in set.scenarios() {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_num(s.cadr * 100.0),
            fmt_num(s.capr * 100.0),
            fmt_num(s.crr * 100.0)
        );
    }
    write_file(path.as_ref(), &out)
}

/// Render a PV matrix in the format accepted by [`load_pv_matrix`]. Rows
/// carry the CADR percent keys of `scenarios`.
pub fn render_pv_matrix(
    matrix: &TranchePvMatrix,
    scenarios: &ScenarioSet,
) -> Result<String, DataError> {
    if matrix.n_scenarios() != scenarios.len() {
        return Err(DataError::ScenarioMismatch(
            "matrix and scenario set sizes differ".into(),
        ));
    }
    let mut out = String::from("cadr");
    for name in matrix.tranche_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",COL\n");
    for (i, s) in scenarios.scenarios().iter().enumerate() {
        out.push_str(&fmt_num(s.cadr * 100.0));
        for j in 0..matrix.n_tranches() {
            out.push(',');
            out.push_str(&fmt_num(matrix.value(i, j)));
        }
        out.push(',');
        out.push_str(&fmt_num(matrix.collateral()[i]));
        out.push('\n');
    }
    Ok(out)
}

/// Write a PV matrix via [`render_pv_matrix`].
pub fn write_pv_matrix(
    matrix: &TranchePvMatrix,
    scenarios: &ScenarioSet,
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let out = render_pv_matrix(matrix, scenarios)?;
    write_file(path.as_ref(), &out)
}

/// Write quotes in the format accepted by [`load_quotes`].
pub fn write_quotes(quotes: &DealQuotes, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut out = String::from("tranche,price\n");
    for (name, price) in quotes.prices() {
        let _ = writeln!(out, "{name},{}", fmt_num(*price));
    }
    if let Some(m) = quotes.market_loan_price {
        let _ = writeln!(out, "!market_loan_price,{}", fmt_num(m));
    }
    for meta in &quotes.metadata {
        match &meta.tranche {
            Some(t) => {
                let _ = writeln!(out, "!{},{},{}", meta.key, t, meta.value);
            }
            None => {
                let _ = writeln!(out, "!{},{}", meta.key, meta.value);
            }
        }
    }
    write_file(path.as_ref(), &out)
}
