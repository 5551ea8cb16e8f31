//! Machine-readable run reports and CSV emitters.
//!
//! Reports serialize to JSON with declaration-order keys and every float
//! rounded to 12 significant digits at construction time, so identical inputs
//! produce byte-identical files and the serialized numbers equal the
//! in-memory report fields exactly. A calibration report carries everything a
//! later mapping run needs: the scenario set, the MISD, and the basis.

use serde::{Deserialize, Serialize};

use crate::deal::{Scenario, ScenarioSet};
use crate::entropy::{Misd, SolveDiagnostics, SolveError};
use crate::pricing::ImpliedQuantities;
use crate::risk::{BasisMode, BumpConfig, BumpScheme, RiskConstraintMode, RiskReport};

/// Round to 12 significant digits. Applied to every float that enters a
/// report or CSV so serialized and in-memory values agree exactly.
pub fn round_sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exponent = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(11 - exponent);
    (x * factor).round() / factor
}

fn round_vec(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| round_sig12(*v)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioRecord {
    pub id: usize,
    pub cadr: f64,
    pub capr: f64,
    pub crr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TranchePriceRecord {
    pub tranche: String,
    pub price: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ImpliedRecord {
    pub cadr: f64,
    pub capr: f64,
    pub crr: f64,
    pub collateral_price: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiagnosticsRecord {
    pub multipliers: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub objective: f64,
    pub feasible: bool,
    pub rank_deficient: bool,
}

impl From<&SolveDiagnostics> for DiagnosticsRecord {
    fn from(d: &SolveDiagnostics) -> Self {
        Self {
            multipliers: round_vec(&d.multipliers),
            residuals: round_vec(&d.residuals),
            iterations: d.iterations,
            objective: round_sig12(d.objective),
            feasible: d.feasible,
            rank_deficient: d.rank_deficient,
        }
    }
}

/// Flag echo for reproducibility; unused fields stay `None` and are omitted.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ConfigRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quotes: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index_report: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bespoke_pv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quote_bumps: Option<Vec<QuoteBumpRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loan_price: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manager_adjustment: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pins: Option<Vec<TranchePriceRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub residual_tol: f64,
    pub max_iterations: usize,
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QuoteBumpRecord {
    pub tranche: String,
    pub bump: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BumpConfigRecord {
    pub bump_size: f64,
    pub scheme: String,
    pub constraint_mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soft_weight: Option<f64>,
    pub basis_mode: String,
}

impl From<&BumpConfig> for BumpConfigRecord {
    fn from(c: &BumpConfig) -> Self {
        let (constraint_mode, soft_weight) = match c.constraint_mode {
            RiskConstraintMode::Hard => ("hard".to_string(), None),
            RiskConstraintMode::CoBump => ("co-bump".to_string(), None),
            RiskConstraintMode::Soft { weight } => ("soft".to_string(), Some(round_sig12(weight))),
        };
        Self {
            bump_size: round_sig12(c.bump_size),
            scheme: match c.scheme {
                BumpScheme::Forward => "forward".into(),
                BumpScheme::Central => "central".into(),
            },
            constraint_mode,
            soft_weight,
            basis_mode: match c.basis_mode {
                BasisMode::Reimplied => "reimplied".into(),
                BasisMode::Fixed => "fixed".into(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RiskRecord {
    pub config: BumpConfigRecord,
    pub bespoke_tranches: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub index_tranches: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tranche01: Option<Vec<Vec<Option<f64>>>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub failures: Vec<String>,
}

impl From<&RiskReport> for RiskRecord {
    fn from(r: &RiskReport) -> Self {
        Self {
            config: (&r.config).into(),
            bespoke_tranches: r.bespoke_tranches.clone(),
            index_tranches: r.index_tranches.clone(),
            deltas: r.deltas.as_ref().map(|d| round_vec(d)),
            tranche01: r.tranche01.as_ref().map(|m| {
                m.iter()
                    .map(|row| row.iter().map(|e| e.map(round_sig12)).collect())
                    .collect()
            }),
            failures: r
                .failures
                .iter()
                .map(|(name, msg)| format!("{name}: {msg}"))
                .collect(),
        }
    }
}

/// One run's outputs: command echo, inputs, the MISD, prices, implied
/// quantities, basis, diagnostics, and optional risk numbers.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub config: ConfigRecord,
    pub scenarios: Vec<ScenarioRecord>,
    pub misd: Vec<f64>,
    pub tranche_prices: Vec<TranchePriceRecord>,
    pub implied: ImpliedRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub market_loan_price: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<f64>,
    pub diagnostics: DiagnosticsRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub risk: Option<RiskRecord>,
}

impl RunReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        command: &str,
        config: ConfigRecord,
        scenarios: &ScenarioSet,
        misd: &Misd,
        tranche_prices: Vec<(String, f64)>,
        implied: &ImpliedQuantities,
        market_loan_price: Option<f64>,
        basis: Option<f64>,
        diagnostics: &SolveDiagnostics,
        risk: Option<RiskRecord>,
    ) -> Self {
        Self {
            command: command.to_string(),
            config,
            scenarios: scenarios
                .scenarios()
                .iter()
                .map(|s| ScenarioRecord {
                    id: s.id,
                    cadr: round_sig12(s.cadr),
                    capr: round_sig12(s.capr),
                    crr: round_sig12(s.crr),
                })
                .collect(),
            misd: round_vec(misd.weights()),
            tranche_prices: tranche_prices
                .into_iter()
                .map(|(tranche, price)| TranchePriceRecord {
                    tranche,
                    price: round_sig12(price),
                })
                .collect(),
            implied: ImpliedRecord {
                cadr: round_sig12(implied.cadr),
                capr: round_sig12(implied.capr),
                crr: round_sig12(implied.crr),
                collateral_price: round_sig12(implied.collateral_price),
            },
            market_loan_price: market_loan_price.map(round_sig12),
            basis: basis.map(round_sig12),
            diagnostics: diagnostics.into(),
            risk,
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serialization");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Rebuild the scenario set embedded in the report.
    pub fn scenario_set(&self) -> Result<ScenarioSet, crate::deal::DataError> {
        ScenarioSet::new(
            self.scenarios
                .iter()
                .map(|s| Scenario {
                    id: s.id,
                    cadr: s.cadr,
                    capr: s.capr,
                    crr: s.crr,
                })
                .collect(),
        )
    }

    /// Rebuild the MISD embedded in the report. Weights were rounded to 12
    /// significant digits on write, so renormalize the residual rounding dust.
    pub fn misd(&self) -> Result<Misd, SolveError> {
        let total: f64 = self.misd.iter().sum();
        if total <= 0.0 {
            return Err(SolveError::InvalidInput("report MISD sums to zero".into()));
        }
        Misd::new(self.misd.iter().map(|w| w / total).collect())
    }
}

/// Two-column CSV of the MISD keyed by scenario CADR in percent, the format
/// used for distribution plots.
pub fn misd_csv(misd: &Misd, scenarios: &ScenarioSet) -> String {
    let mut out = String::from("cadr,weight\n");
    for (s, w) in scenarios.scenarios().iter().zip(misd.weights()) {
        out.push_str(&format!(
            "{},{}\n",
            round_sig12(s.cadr * 100.0),
            round_sig12(*w)
        ));
    }
    out
}

/// Deltas as a two-column CSV.
pub fn deltas_csv(tranches: &[String], deltas: &[f64]) -> String {
    let mut out = String::from("tranche,delta\n");
    for (name, d) in tranches.iter().zip(deltas) {
        out.push_str(&format!("{name},{}\n", round_sig12(*d)));
    }
    out
}

/// The tranche01 matrix as CSV, one row per bespoke tranche, one column per
/// index tranche. Unavailable entries are left empty.
pub fn tranche01_csv(
    bespoke_tranches: &[String],
    index_tranches: &[String],
    matrix: &[Vec<Option<f64>>],
) -> String {
    let mut out = String::from("bespoke_tranche");
    for name in index_tranches {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (name, row) in bespoke_tranches.iter().zip(matrix) {
        out.push_str(name);
        for entry in row {
            out.push(',');
            if let Some(v) = entry {
                out.push_str(&format!("{}", round_sig12(*v)));
            }
        }
        out.push('\n');
    }
    out
}
