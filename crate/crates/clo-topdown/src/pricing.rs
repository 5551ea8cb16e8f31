//! Index calibration, implied quantities, basis, bespoke mapping, and tranche
//! repricing.
//!
//! Calibration finds the maximum-entropy MISD repricing every quoted index
//! tranche; mapping perturbs that MISD by minimum cross-entropy subject to
//! the bespoke deal's loan-price constraint (the index basis is assumed to
//! carry over, plus an optional manager-quality adjustment) and any pinned
//! tranche prices, normally the AAA.

use thiserror::Error;

use crate::deal::{DealQuotes, ScenarioSet, TranchePvMatrix};
use crate::entropy::{
    solve_min_cross_entropy, ConstraintSpec, Misd, SolveDiagnostics, SolveError, SolverSettings,
};

#[derive(Debug, Error)]
pub enum PricingError {
    #[error(transparent)]
    Solver(#[from] SolveError),
    #[error(transparent)]
    Data(#[from] crate::deal::DataError),
    #[error("quoted tranche {name} has no PV column")]
    UnknownTranche { name: String },
    #[error("pinned tranche {name} has no PV column")]
    PinnedTrancheUnknown { name: String },
    #[error("market loan price is required to compute the basis")]
    MissingMarketLoanPrice,
    #[error("scenario alignment: expected {expected} scenarios, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Expected scenario attributes and collateral price under a MISD. Rates are
/// fractions; the collateral price is in points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpliedQuantities {
    pub cadr: f64,
    pub capr: f64,
    pub crr: f64,
    pub collateral_price: f64,
}

/// Result of calibrating the MISD to an index deal's quotes. Owns copies of
/// its inputs so downstream mapping and risk runs are self-contained.
#[derive(Debug, Clone)]
pub struct CalibratedIndex {
    pub scenarios: ScenarioSet,
    pub misd: Misd,
    pub quotes: DealQuotes,
    pub pv: TranchePvMatrix,
    pub implied: ImpliedQuantities,
    /// Tranche-implied collateral price minus the observed average market
    /// loan price (`None` when the quotes carry no market loan price).
    pub basis: Option<f64>,
    pub diagnostics: SolveDiagnostics,
}

impl CalibratedIndex {
    /// The basis, or an error when the quotes had no market loan price.
    pub fn basis(&self) -> Result<f64, PricingError> {
        self.basis.ok_or(PricingError::MissingMarketLoanPrice)
    }

    /// Quoted tranche names in PV-matrix column order, the constraint order
    /// used by the calibration.
    pub fn quoted_tranches(&self) -> Vec<String> {
        quoted_in_pv_order(&self.pv, &self.quotes)
    }

    pub fn map_bespoke(
        &self,
        bespoke: &BespokeSpec,
        settings: &SolverSettings,
    ) -> Result<MappedBespoke, PricingError> {
        map_bespoke(self, bespoke, settings)
    }
}

/// A bespoke deal to price off a calibrated index: its PV matrix, the average
/// market price of its loans (`None` drops the loan constraint), a manager
/// quality adjustment in points, and tranche prices to pin (normally the AAA).
#[derive(Debug, Clone)]
pub struct BespokeSpec {
    pub pv: TranchePvMatrix,
    pub market_loan_price: Option<f64>,
    pub manager_adjustment: f64,
    pub pinned_tranches: Vec<(String, f64)>,
}

/// A mapped bespoke deal: the perturbed MISD, model prices for every tranche
/// in PV-column order, implied quantities, and solver diagnostics.
#[derive(Debug, Clone)]
pub struct MappedBespoke {
    pub misd: Misd,
    pub prices: Vec<f64>,
    pub implied: ImpliedQuantities,
    pub diagnostics: SolveDiagnostics,
}

fn quoted_in_pv_order(pv: &TranchePvMatrix, quotes: &DealQuotes) -> Vec<String> {
    pv.tranche_names()
        .iter()
        .filter(|n| quotes.price(n).is_some())
        .cloned()
        .collect()
}

/// Calibrate the maximum-entropy MISD to the quoted tranche prices.
///
/// One constraint per quoted tranche, ordered by PV-matrix column. Implied
/// quantities are always populated; the basis only when the quotes carry a
/// market loan price.
pub fn calibrate_index(
    scenarios: &ScenarioSet,
    pv: &TranchePvMatrix,
    quotes: &DealQuotes,
    settings: &SolverSettings,
) -> Result<CalibratedIndex, PricingError> {
    check_alignment(scenarios, pv)?;
    for (name, _) in quotes.prices() {
        if pv.column(name).is_err() {
            return Err(PricingError::UnknownTranche { name: name.clone() });
        }
    }
    let constraints: Vec<ConstraintSpec> = quoted_in_pv_order(pv, quotes)
        .iter()
        .map(|name| {
            ConstraintSpec::new(
                pv.column(name).expect("checked above").to_vec(),
                quotes.price(name).expect("quoted"),
            )
        })
        .collect();
    let (misd, diagnostics) =
        crate::entropy::solve_maxent(&constraints, scenarios.len(), settings)?;
    let implied = implied_expectations(&misd, scenarios, pv.collateral())?;
    let basis = quotes
        .market_loan_price
        .map(|m| implied_basis(implied.collateral_price, m));
    Ok(CalibratedIndex {
        scenarios: scenarios.clone(),
        misd,
        quotes: quotes.clone(),
        pv: pv.clone(),
        implied,
        basis,
        diagnostics,
    })
}

/// Expectations of the scenario attributes and the collateral price column.
pub fn implied_expectations(
    misd: &Misd,
    scenarios: &ScenarioSet,
    collateral: &[f64],
) -> Result<ImpliedQuantities, PricingError> {
    if misd.len() != scenarios.len() || collateral.len() != scenarios.len() {
        return Err(PricingError::LengthMismatch {
            expected: scenarios.len(),
            got: misd.len().min(collateral.len()),
        });
    }
    Ok(ImpliedQuantities {
        cadr: misd.expectation(&scenarios.cadr_column())?,
        capr: misd.expectation(&scenarios.capr_column())?,
        crr: misd.expectation(&scenarios.crr_column())?,
        collateral_price: misd.expectation(collateral)?,
    })
}

/// Tranche-implied collateral price minus observed market loan price, points.
pub fn implied_basis(implied_collateral: f64, market_loan_price: f64) -> f64 {
    implied_collateral - market_loan_price
}

/// Model price of every tranche in PV-column order: `Σ_i p_i v_j(S_i)`.
pub fn price_tranches(misd: &Misd, pv: &TranchePvMatrix) -> Result<Vec<f64>, PricingError> {
    if misd.len() != pv.n_scenarios() {
        return Err(PricingError::LengthMismatch {
            expected: pv.n_scenarios(),
            got: misd.len(),
        });
    }
    (0..pv.n_tranches())
        .map(|j| misd.expectation(pv.column_at(j)).map_err(Into::into))
        .collect()
}

/// Build the mapping constraint set for a bespoke deal: the loan-price
/// constraint (when a market loan price is given) followed by one constraint
/// per pinned tranche.
pub(crate) fn bespoke_constraints(
    bespoke: &BespokeSpec,
    index_basis: Option<f64>,
    pin_targets: &[(String, f64)],
) -> Result<Vec<ConstraintSpec>, PricingError> {
    let mut constraints = Vec::with_capacity(1 + pin_targets.len());
    if let Some(market_loan_price) = bespoke.market_loan_price {
        let basis = index_basis.ok_or(PricingError::MissingMarketLoanPrice)?;
        constraints.push(ConstraintSpec::new(
            bespoke.pv.collateral().to_vec(),
            basis + market_loan_price + bespoke.manager_adjustment,
        ));
    }
    for (name, target) in pin_targets {
        let column = bespoke
            .pv
            .column(name)
            .map_err(|_| PricingError::PinnedTrancheUnknown { name: name.clone() })?;
        constraints.push(ConstraintSpec::new(column.to_vec(), *target));
    }
    Ok(constraints)
}

/// Map an index MISD onto a bespoke deal by minimum cross-entropy.
///
/// The bespoke implied collateral is constrained to
/// `index basis + market loan price + manager adjustment` (constant-basis
/// assumption) and every pinned tranche to its target price. With no loan
/// price and no pins the mapping is the identity and the bespoke is priced
/// directly under the prior.
pub fn map_bespoke(
    index: &CalibratedIndex,
    bespoke: &BespokeSpec,
    settings: &SolverSettings,
) -> Result<MappedBespoke, PricingError> {
    map_bespoke_with_prior(&index.scenarios, &index.misd, index.basis, bespoke, settings)
}

/// [`map_bespoke`] with an explicit prior and basis, for callers that carry a
/// previously calibrated MISD (reports, bump sweeps) rather than a full
/// [`CalibratedIndex`].
pub fn map_bespoke_with_prior(
    scenarios: &ScenarioSet,
    prior: &Misd,
    index_basis: Option<f64>,
    bespoke: &BespokeSpec,
    settings: &SolverSettings,
) -> Result<MappedBespoke, PricingError> {
    check_alignment(scenarios, &bespoke.pv)?;
    if prior.len() != scenarios.len() {
        return Err(PricingError::LengthMismatch {
            expected: scenarios.len(),
            got: prior.len(),
        });
    }
    let constraints = bespoke_constraints(bespoke, index_basis, &bespoke.pinned_tranches)?;
    let (misd, diagnostics) = solve_min_cross_entropy(prior, &constraints, settings)?;
    let prices = price_tranches(&misd, &bespoke.pv)?;
    let implied = implied_expectations(&misd, scenarios, bespoke.pv.collateral())?;
    Ok(MappedBespoke {
        misd,
        prices,
        implied,
        diagnostics,
    })
}

fn check_alignment(scenarios: &ScenarioSet, pv: &TranchePvMatrix) -> Result<(), PricingError> {
    if pv.n_scenarios() != scenarios.len() {
        return Err(PricingError::LengthMismatch {
            expected: scenarios.len(),
            got: pv.n_scenarios(),
        });
    }
    Ok(())
}
