//! Maximum-entropy and minimum cross-entropy distributions over a finite
//! scenario set under linear equality constraints.
//!
//! Both problems share one exponential-family dual. For prior weights `w` and
//! constraints `sum_i q_i c_{k,i} = b_k`, the optimum has the form
//! `q_i ∝ w_i · exp(sum_k λ_k c_{k,i})` where the multipliers `λ` minimize the
//! smooth strictly convex dual
//!
//! ```text
//! g(λ) = ln Σ_i w_i exp(Σ_k λ_k c_{k,i}) − Σ_k λ_k b_k
//! ```
//!
//! The dual gradient is the constraint residual vector and the Hessian is the
//! covariance of the constraint coefficients under `q(λ)`, so Newton steps
//! with a backtracking (Armijo) line search converge in a handful of
//! iterations for the problem sizes here (a few constraints, a few dozen
//! scenarios). Rank-deficient Hessians (duplicated tranche columns are common
//! in real PV tables) fall back to an eigenvalue-thresholded pseudo-inverse
//! step and are flagged in the diagnostics rather than treated as errors.
//!
//! Coefficients are divided by [`SolverSettings::scale`] before solving so the
//! multipliers stay O(1); residuals and multipliers in [`SolveDiagnostics`]
//! are reported in those scaled units. The solver is fully deterministic:
//! repeated runs are bit-identical.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Hard constraints are enforced to `residual_tol`; soft mode replaces each
/// equality with a quadratic penalty of the given weight on its residual
/// (in scaled units), which shows up in the dual as a `|λ|²/(2·weight)` term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintMode {
    Hard,
    Soft { weight: f64 },
}

/// A linear expectation constraint: one coefficient per scenario and the
/// target expected value, both in the same units (typically price points).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub coefficients: Vec<f64>,
    pub target: f64,
}

impl ConstraintSpec {
    pub fn new(coefficients: Vec<f64>, target: f64) -> Self {
        Self {
            coefficients,
            target,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Maximum absolute constraint violation, in scaled units.
    pub residual_tol: f64,
    pub max_iterations: usize,
    /// Divisor applied to coefficients and targets before solving. The
    /// default of 100 converts price points to fractions of notional.
    pub scale: f64,
    pub mode: ConstraintMode,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            residual_tol: 1e-8,
            max_iterations: 200,
            scale: 100.0,
            mode: ConstraintMode::Hard,
        }
    }
}

/// Multiplier cap (scaled units) beyond which the dual is declared divergent.
const MULTIPLIER_CAP: f64 = 1e4;
/// Consecutive stalled line searches before declaring infeasibility.
const MAX_STALLS: usize = 20;
const ARMIJO_C1: f64 = 1e-4;

/// A probability vector over scenarios: non-negative weights summing to one
/// within 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct Misd {
    weights: Vec<f64>,
}

impl Misd {
    pub fn new(weights: Vec<f64>) -> Result<Self, SolveError> {
        if weights.is_empty() {
            return Err(SolveError::InvalidInput("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SolveError::InvalidInput(
                "weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(SolveError::InvalidInput(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n.max(1)],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Expectation of a per-scenario quantity under this distribution.
    pub fn expectation(&self, values: &[f64]) -> Result<f64, SolveError> {
        if values.len() != self.weights.len() {
            return Err(SolveError::LengthMismatch {
                constraint: 0,
                expected: self.weights.len(),
                got: values.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum())
    }

    /// Shannon entropy −Σ p ln p in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .weights
            .iter()
            .filter(|w| **w > 0.0)
            .map(|w| w * w.ln())
            .sum::<f64>()
    }

    /// Kullback-Leibler divergence Σ q ln(q/p) of `self` from `prior`.
    pub fn divergence_from(&self, prior: &Misd) -> Result<f64, SolveError> {
        if prior.len() != self.len() {
            return Err(SolveError::LengthMismatch {
                constraint: 0,
                expected: self.len(),
                got: prior.len(),
            });
        }
        let mut d = 0.0;
        for (q, p) in self.weights.iter().zip(prior.weights()) {
            if *q > 0.0 {
                if *p <= 0.0 {
                    return Err(SolveError::InvalidInput(
                        "divergence undefined: mass outside prior support".into(),
                    ));
                }
                d += q * (q / p).ln();
            }
        }
        Ok(d)
    }
}

/// Solve outcome details. Multipliers and residuals are in scaled units and
/// ordered like the input constraints; `objective` is the Shannon entropy for
/// maximum-entropy solves and the KL divergence from the prior for
/// cross-entropy solves. `feasible` records whether every hard residual met
/// `residual_tol` (soft solves may converge without it). `rank_deficient` is
/// set when the dual Hessian lost rank at an accepted iterate, which happens
/// with redundant constraints.
#[derive(Debug, Clone)]
pub struct SolveDiagnostics {
    pub multipliers: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub objective: f64,
    pub feasible: bool,
    pub rank_deficient: bool,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(
        "infeasible target: dual diverged (max |multiplier| {max_multiplier:.3e}); scaled residuals {residuals:?}"
    )]
    InfeasibleTarget {
        residuals: Vec<f64>,
        max_multiplier: f64,
    },
    #[error("no convergence after {iterations} iterations; scaled residuals {residuals:?}")]
    NonConvergence {
        residuals: Vec<f64>,
        iterations: usize,
    },
    #[error(
        "constraint {constraint} target {target} unreachable on the prior support [{min:.6}, {max:.6}]"
    )]
    PriorSupportConflict {
        constraint: usize,
        target: f64,
        min: f64,
        max: f64,
    },
    #[error("constraint {constraint}: expected {expected} coefficients, got {got}")]
    LengthMismatch {
        constraint: usize,
        expected: usize,
        got: usize,
    },
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
}

/// Maximum-entropy distribution over `n` scenarios subject to `constraints`.
///
/// The result maximizes Shannon entropy subject to normalization and every
/// constraint holding within `settings.residual_tol` (hard mode). With no
/// constraints this is the uniform distribution.
pub fn solve_maxent(
    constraints: &[ConstraintSpec],
    n: usize,
    settings: &SolverSettings,
) -> Result<(Misd, SolveDiagnostics), SolveError> {
    if n == 0 {
        return Err(SolveError::InvalidInput("scenario count is zero".into()));
    }
    solve_dual(&Misd::uniform(n), constraints, settings, Objective::Entropy)
}

/// Minimum cross-entropy (KL) projection of `prior` onto the constraint set.
///
/// The result minimizes Σ q ln(q/prior) subject to normalization and the
/// constraints; zero-prior scenarios keep zero weight (absolute continuity).
pub fn solve_min_cross_entropy(
    prior: &Misd,
    constraints: &[ConstraintSpec],
    settings: &SolverSettings,
) -> Result<(Misd, SolveDiagnostics), SolveError> {
    solve_dual(prior, constraints, settings, Objective::Divergence)
}

#[derive(Clone, Copy, PartialEq)]
enum Objective {
    Entropy,
    Divergence,
}

struct DualProblem {
    /// ln prior weight per scenario; NEG_INFINITY marks zero-prior scenarios.
    ln_prior: Vec<f64>,
    /// Scaled coefficients, one row per constraint.
    coeffs: Vec<Vec<f64>>,
    /// Scaled targets.
    targets: Vec<f64>,
    soft_weight: Option<f64>,
}

struct DualState {
    probabilities: Vec<f64>,
    value: f64,
}

impl DualProblem {
    fn m(&self) -> usize {
        self.targets.len()
    }

    fn eval(&self, lambda: &DVector<f64>) -> DualState {
        let n = self.ln_prior.len();
        let mut z = vec![f64::NEG_INFINITY; n];
        let mut z_max = f64::NEG_INFINITY;
        for i in 0..n {
            let lp = self.ln_prior[i];
            if lp == f64::NEG_INFINITY {
                continue;
            }
            let mut s = lp;
            for (k, row) in self.coeffs.iter().enumerate() {
                s += lambda[k] * row[i];
            }
            z[i] = s;
            if s > z_max {
                z_max = s;
            }
        }
        let mut norm = 0.0;
        let mut p = vec![0.0; n];
        for i in 0..n {
            if z[i] == f64::NEG_INFINITY {
                continue;
            }
            let e = (z[i] - z_max).exp();
            p[i] = e;
            norm += e;
        }
        for pi in &mut p {
            *pi /= norm;
        }
        let mut value = z_max + norm.ln();
        for k in 0..self.m() {
            value -= lambda[k] * self.targets[k];
        }
        if let Some(w) = self.soft_weight {
            value += lambda.dot(lambda) / (2.0 * w);
        }
        DualState {
            probabilities: p,
            value,
        }
    }

    /// Hard residuals `E_p[c_k] − b_k` in scaled units.
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.m(), |k, _| {
            self.coeffs[k]
                .iter()
                .zip(p)
                .map(|(c, pi)| c * pi)
                .sum::<f64>()
                - self.targets[k]
        })
    }

    /// Covariance of the constraint coefficients under `p`, plus the soft
    /// regularization if active. Positive semidefinite by construction.
    fn hessian(&self, p: &[f64]) -> DMatrix<f64> {
        let m = self.m();
        let mean: Vec<f64> = (0..m)
            .map(|k| {
                self.coeffs[k]
                    .iter()
                    .zip(p)
                    .map(|(c, pi)| c * pi)
                    .sum::<f64>()
            })
            .collect();
        let mut h = DMatrix::zeros(m, m);
        for k in 0..m {
            for l in k..m {
                let mut s = 0.0;
                for ((ck, cl), pi) in self.coeffs[k].iter().zip(&self.coeffs[l]).zip(p) {
                    s += (ck - mean[k]) * (cl - mean[l]) * pi;
                }
                h[(k, l)] = s;
                h[(l, k)] = s;
            }
        }
        if let Some(w) = self.soft_weight {
            for k in 0..m {
                h[(k, k)] += 1.0 / w;
            }
        }
        h
    }
}

fn validate_settings(settings: &SolverSettings) -> Result<Option<f64>, SolveError> {
    if !(settings.residual_tol > 0.0) {
        return Err(SolveError::InvalidInput("residual_tol must be > 0".into()));
    }
    if settings.max_iterations == 0 {
        return Err(SolveError::InvalidInput(
            "max_iterations must be >= 1".into(),
        ));
    }
    if !(settings.scale > 0.0) {
        return Err(SolveError::InvalidInput("scale must be > 0".into()));
    }
    match settings.mode {
        ConstraintMode::Hard => Ok(None),
        ConstraintMode::Soft { weight } => {
            if !(weight > 0.0) {
                return Err(SolveError::InvalidInput("soft weight must be > 0".into()));
            }
            Ok(Some(weight))
        }
    }
}

fn solve_dual(
    prior: &Misd,
    constraints: &[ConstraintSpec],
    settings: &SolverSettings,
    objective: Objective,
) -> Result<(Misd, SolveDiagnostics), SolveError> {
    let soft_weight = validate_settings(settings)?;
    let n = prior.len();
    for (k, c) in constraints.iter().enumerate() {
        if c.coefficients.len() != n {
            return Err(SolveError::LengthMismatch {
                constraint: k,
                expected: n,
                got: c.coefficients.len(),
            });
        }
        if !c.target.is_finite() || c.coefficients.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::InvalidInput(format!(
                "constraint {k} has non-finite entries"
            )));
        }
    }

    // Reachability pre-check: a target strictly outside the coefficient range
    // on the prior support can never be met. Targets exactly at the boundary
    // are left to the dual iteration, which approaches the boundary point
    // mass or diverges with a certificate.
    if soft_weight.is_none() {
        for (k, c) in constraints.iter().enumerate() {
            let (mut lo_s, mut hi_s) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut lo_a, mut hi_a) = (f64::INFINITY, f64::NEG_INFINITY);
            for (v, w) in c.coefficients.iter().zip(prior.weights()) {
                lo_a = lo_a.min(*v);
                hi_a = hi_a.max(*v);
                if *w > 0.0 {
                    lo_s = lo_s.min(*v);
                    hi_s = hi_s.max(*v);
                }
            }
            let slack = 1e-9 * (1.0 + hi_s - lo_s);
            if c.target < lo_s - slack || c.target > hi_s + slack {
                if objective == Objective::Divergence
                    && c.target >= lo_a - slack
                    && c.target <= hi_a + slack
                {
                    return Err(SolveError::PriorSupportConflict {
                        constraint: k,
                        target: c.target,
                        min: lo_s,
                        max: hi_s,
                    });
                }
                return Err(SolveError::InfeasibleTarget {
                    residuals: constraints
                        .iter()
                        .map(|c| -c.target / settings.scale)
                        .collect(),
                    max_multiplier: 0.0,
                });
            }
        }
    }

    // No constraints: the prior itself is the optimum. Returning it directly
    // keeps `q == prior` bit-exact.
    if constraints.is_empty() {
        let objective = match objective {
            Objective::Entropy => prior.entropy(),
            Objective::Divergence => 0.0,
        };
        return Ok((
            prior.clone(),
            SolveDiagnostics {
                multipliers: vec![],
                residuals: vec![],
                iterations: 0,
                objective,
                feasible: true,
                rank_deficient: false,
            },
        ));
    }

    let problem = DualProblem {
        ln_prior: prior
            .weights()
            .iter()
            .map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
            .collect(),
        coeffs: constraints
            .iter()
            .map(|c| c.coefficients.iter().map(|v| v / settings.scale).collect())
            .collect(),
        targets: constraints.iter().map(|c| c.target / settings.scale).collect(),
        soft_weight,
    };
    let m = problem.m();

    let mut lambda = DVector::zeros(m);
    let mut state = problem.eval(&lambda);
    let mut rank_deficient = false;
    let mut stalls = 0usize;

    for iteration in 0..settings.max_iterations {
        let residuals = problem.residuals(&state.probabilities);
        let gradient = match soft_weight {
            Some(w) => &residuals + &lambda / w,
            None => residuals.clone(),
        };
        let converged = if soft_weight.is_some() {
            gradient.amax() <= settings.residual_tol
        } else {
            m == 0 || residuals.amax() <= settings.residual_tol
        };
        if converged {
            return finish(
                prior, &problem, &lambda, state, iteration, rank_deficient, settings, objective,
            );
        }

        let hessian = problem.hessian(&state.probabilities);
        let eig = hessian.clone().symmetric_eigen();
        let max_eig = eig.eigenvalues.amax();
        debug_assert!(
            eig.eigenvalues.min() >= -1e-9 * max_eig.max(1.0),
            "dual Hessian must be positive semidefinite"
        );
        let threshold = max_eig * 1e-12;
        // Newton direction through the well-conditioned eigenspace. A
        // null-space eigenvector marks a zero-variance combination of the
        // constraint coefficients: if the gradient has a component there the
        // combined constraint is constant on the support yet violated, which
        // certifies infeasibility outright (the dual is linear and unbounded
        // along it). With a matching target the combination is merely
        // redundant and gets flagged.
        let mut direction = DVector::zeros(m);
        for j in 0..m {
            let v = eig.eigenvectors.column(j);
            let coeff = v.dot(&gradient);
            if eig.eigenvalues[j] > threshold {
                direction -= v * (coeff / eig.eigenvalues[j]);
            } else {
                rank_deficient = true;
                if soft_weight.is_none() && coeff.abs() > settings.residual_tol {
                    return Err(SolveError::InfeasibleTarget {
                        residuals: residuals.iter().copied().collect(),
                        max_multiplier: lambda.amax(),
                    });
                }
                direction -= v * coeff;
            }
        }

        let slope = gradient.dot(&direction);
        let grad_norm = gradient.amax();
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-20 {
            let candidate = &lambda + &direction * step;
            let next = problem.eval(&candidate);
            if next.value <= state.value + ARMIJO_C1 * step * slope {
                lambda = candidate;
                state = next;
                accepted = true;
                break;
            }
            // Near the optimum the predicted decrease falls below the float
            // resolution of the dual value and Armijo can no longer certify
            // progress; accept on gradient-norm contraction instead.
            let noise = f64::EPSILON * state.value.abs().max(1.0);
            if (step * slope).abs() <= noise {
                let cand_resid = problem.residuals(&next.probabilities);
                let cand_grad = match soft_weight {
                    Some(w) => (&cand_resid + &candidate / w).amax(),
                    None => cand_resid.amax(),
                };
                if cand_grad < grad_norm {
                    lambda = candidate;
                    state = next;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if accepted {
            stalls = 0;
        } else {
            stalls += 1;
            if stalls >= MAX_STALLS {
                return Err(SolveError::InfeasibleTarget {
                    residuals: problem.residuals(&state.probabilities).iter().copied().collect(),
                    max_multiplier: lambda.amax(),
                });
            }
        }
        if lambda.amax() > MULTIPLIER_CAP {
            return Err(SolveError::InfeasibleTarget {
                residuals: problem.residuals(&state.probabilities).iter().copied().collect(),
                max_multiplier: lambda.amax(),
            });
        }
    }

    let residuals = problem.residuals(&state.probabilities);
    let still_unconverged = if soft_weight.is_some() {
        let gradient = match soft_weight {
            Some(w) => &residuals + &lambda / w,
            None => unreachable!(),
        };
        gradient.amax() > settings.residual_tol
    } else {
        residuals.amax() > settings.residual_tol
    };
    if still_unconverged {
        return Err(SolveError::NonConvergence {
            residuals: residuals.iter().copied().collect(),
            iterations: settings.max_iterations,
        });
    }
    finish(
        prior,
        &problem,
        &lambda,
        state,
        settings.max_iterations,
        rank_deficient,
        settings,
        objective,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish(
    prior: &Misd,
    problem: &DualProblem,
    lambda: &DVector<f64>,
    state: DualState,
    iterations: usize,
    rank_deficient: bool,
    settings: &SolverSettings,
    objective: Objective,
) -> Result<(Misd, SolveDiagnostics), SolveError> {
    let misd = Misd::new(state.probabilities.clone())?;
    let residuals = problem.residuals(&state.probabilities);
    let feasible = problem.m() == 0 || residuals.amax() <= settings.residual_tol;
    let objective = match objective {
        Objective::Entropy => misd.entropy(),
        Objective::Divergence => misd.divergence_from(prior)?,
    };
    Ok((
        misd,
        SolveDiagnostics {
            multipliers: lambda.iter().copied().collect(),
            residuals: residuals.iter().copied().collect(),
            iterations,
            objective,
            feasible,
            rank_deficient,
        },
    ))
}
