//! Top-down cash-CLO analytics.
//!
//! The toolkit calibrates a discrete risk-neutral distribution over loan-market
//! scenarios (the market implied scenario distribution, MISD) to the tranche
//! prices of a liquid "index" CLO by maximum entropy, maps it to bespoke deals
//! by minimum cross-entropy under linear constraints, and derives implied
//! quantities and bump-remap-reprice risk measures.
//!
//! Modules:
//! - [`deal`] — domain types and CSV ingestion for scenarios, per-scenario
//!   tranche PV matrices, and market quotes.
//! - [`entropy`] — the generic maximum-entropy / minimum cross-entropy solver
//!   over a finite scenario set with linear equality constraints.
//! - [`pricing`] — index calibration, implied expectations and basis, bespoke
//!   mapping, and tranche repricing.
//! - [`risk`] — loan-price deltas, the tranche01 matrix, and quote-bump
//!   recalibration experiments.
//! - [`synth`] — LCDX-style synthetic tranche PV generation under the same
//!   scenario grid, for cash-vs-synthetic MISD comparisons.
//! - [`report`] — machine-readable run reports (JSON) and CSV emitters.
//!
//! All prices are carried in points (percent of notional); scenario rates are
//! fractions per year in memory and percent in files. With the default
//! `parallel` feature, embarrassingly parallel loops (bump sweeps, PV-matrix
//! rows) run on rayon; disabling the feature yields a sequential build with
//! identical results.

pub mod deal;
pub mod entropy;
mod exec;
pub mod pricing;
pub mod report;
pub mod risk;
pub mod synth;

pub use deal::{DealQuotes, Scenario, ScenarioSet, TranchePvMatrix};
pub use entropy::{ConstraintMode, ConstraintSpec, Misd, SolveDiagnostics, SolverSettings};
pub use pricing::{BespokeSpec, CalibratedIndex, ImpliedQuantities, MappedBespoke};
pub use risk::{BasisMode, BumpConfig, BumpScheme, RiskConstraintMode, RiskReport};
pub use synth::SyntheticDealSpec;
