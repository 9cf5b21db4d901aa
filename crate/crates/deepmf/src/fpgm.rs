//! Restarted fast projected gradient method: projected gradient steps with
//! Nesterov-style extrapolation, restarting whenever the objective would
//! increase so that the sequence of accepted iterates is non-increasing.
//!
//! The step size is `1/L` when a Lipschitz constant is supplied and a
//! backtracking line search otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Step-size rule for the inner solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Fixed step `1/L` from a supplied Lipschitz constant.
    FixedLipschitz,
    /// Backtracking line search regardless of any supplied constant.
    Backtracking,
}

/// Inner-solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpgmConfig {
    /// Extrapolation seed, in (0, 1).
    pub alpha1: f64,
    /// Iteration budget per call.
    pub max_inner_iters: usize,
    pub step_mode: StepMode,
    /// Backtracking shrink factor, in (0, 1).
    pub backtrack_shrink: f64,
    /// Sufficient-decrease constant, in (0, 1).
    pub sufficient_decrease: f64,
    /// Stop once the relative objective decrease over one iteration falls
    /// below this.
    pub rel_decrease_tol: f64,
}

impl Default for FpgmConfig {
    fn default() -> Self {
        Self {
            alpha1: 0.5,
            max_inner_iters: 10,
            step_mode: StepMode::FixedLipschitz,
            backtrack_shrink: 0.5,
            sufficient_decrease: 1e-4,
            rel_decrease_tol: 1e-9,
        }
    }
}

impl FpgmConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| 0.0 < v && v < 1.0;
        if !open_unit(self.alpha1) {
            return Err(Error::usage(format!("alpha1 must be in (0,1), got {}", self.alpha1)));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::usage("max_inner_iters must be positive"));
        }
        if !open_unit(self.backtrack_shrink) {
            return Err(Error::usage(format!(
                "backtracking shrink factor must be in (0,1), got {}",
                self.backtrack_shrink
            )));
        }
        if !open_unit(self.sufficient_decrease) {
            return Err(Error::usage(format!(
                "sufficient-decrease constant must be in (0,1), got {}",
                self.sufficient_decrease
            )));
        }
        if !(self.rel_decrease_tol >= 0.0) {
            return Err(Error::usage("relative-decrease tolerance must be nonnegative"));
        }
        Ok(())
    }
}

/// Extrapolation-weight recurrence.
pub fn next_alpha(alpha: f64) -> f64 {
    0.5 * ((alpha.powi(4) + 4.0 * alpha * alpha).sqrt() - alpha * alpha)
}

/// Momentum weight from consecutive extrapolation parameters.
pub fn momentum_beta(alpha: f64, alpha_next: f64) -> f64 {
    alpha * (1.0 - alpha) / (alpha * alpha + alpha_next)
}

const MAX_HALVINGS: usize = 50;

/// One projected step from `y` with a backtracking line search.
///
/// Tries step sizes `t0, rho*t0, rho^2*t0, ...` and returns the first
/// projected point satisfying the sufficient-decrease condition
/// `f(M) <= f(Y) + c*(<grad, M-Y> + ||M-Y||^2 / (2t))`. After 50 shrinkages
/// it gives up and returns the projection of `y` with `None` as the step.
pub fn backtracking_step<F, G, P>(
    y: &Matrix,
    objective: &F,
    gradient: &G,
    projection: &P,
    t0: f64,
    cfg: &FpgmConfig,
) -> Result<(Matrix, Option<f64>)>
where
    F: Fn(&Matrix) -> f64,
    G: Fn(&Matrix) -> Matrix,
    P: Fn(&Matrix) -> Matrix,
{
    if !(t0 > 0.0) || !t0.is_finite() {
        return Err(Error::usage(format!("initial step must be positive, got {t0}")));
    }
    let f_y = objective(y);
    let grad = gradient(y);
    if !f_y.is_finite() || !grad.is_finite() {
        return Err(Error::numerical(
            "non-finite objective or gradient in line search".to_string(),
        ));
    }
    let c = cfg.sufficient_decrease;
    let mut t = t0;
    for _ in 0..=MAX_HALVINGS {
        let mut trial = y.clone();
        trial
            .add_scaled_in_place(&grad, -t)
            .expect("gradient matches iterate shape");
        let candidate = projection(&trial);
        let diff = candidate.sub(y).expect("projection preserves shape");
        let model = grad.dot(&diff).expect("shapes match")
            + diff.frob_norm_sq() / (2.0 * t);
        let f_cand = objective(&candidate);
        if f_cand.is_finite() && f_cand <= f_y + c * model {
            return Ok((candidate, Some(t)));
        }
        t *= cfg.backtrack_shrink;
    }
    Ok((projection(y), None))
}

/// Minimizes a smooth objective over a feasible set described by its
/// projection operator, starting from a feasible `m0`.
///
/// Returns a point whose objective does not exceed `f(m0)`. Stops at the
/// iteration budget or when the relative decrease over one iteration falls
/// below the configured tolerance.
pub fn fpgm_solve<F, G, P>(
    m0: &Matrix,
    objective: F,
    gradient: G,
    projection: P,
    lipschitz: Option<f64>,
    cfg: &FpgmConfig,
) -> Result<Matrix>
where
    F: Fn(&Matrix) -> f64,
    G: Fn(&Matrix) -> Matrix,
    P: Fn(&Matrix) -> Matrix,
{
    fpgm_solve_traced(m0, objective, gradient, projection, lipschitz, cfg).map(|(m, _)| m)
}

/// As [`fpgm_solve`], also returning the objective values of the accepted
/// iterates (starting with `f(m0)`); the returned sequence is non-increasing.
pub fn fpgm_solve_traced<F, G, P>(
    m0: &Matrix,
    objective: F,
    gradient: G,
    projection: P,
    lipschitz: Option<f64>,
    cfg: &FpgmConfig,
) -> Result<(Matrix, Vec<f64>)>
where
    F: Fn(&Matrix) -> f64,
    G: Fn(&Matrix) -> Matrix,
    P: Fn(&Matrix) -> Matrix,
{
    cfg.validate()?;
    let mut m_prev = m0.clone();
    let mut f_prev = objective(&m_prev);
    if !f_prev.is_finite() {
        return Err(Error::numerical(format!(
            "objective not finite at the starting point ({f_prev})"
        )));
    }
    let mut trace = vec![f_prev];

    let fixed_step = match (cfg.step_mode, lipschitz) {
        (StepMode::FixedLipschitz, Some(lip)) if lip.is_finite() && lip > 0.0 => {
            Some(1.0 / lip)
        }
        (StepMode::FixedLipschitz, Some(0.0)) => {
            // A zero curvature bound means the block objective is constant.
            return Ok((m_prev, trace));
        }
        _ => None,
    };

    let mut y = m_prev.clone();
    let mut alpha = cfg.alpha1;
    let mut warm_step = fixed_step.unwrap_or(1.0);
    let mut just_restarted = false;

    for iter in 1..=cfg.max_inner_iters {
        let (candidate, used_step) = match fixed_step {
            Some(step) => {
                let grad = gradient(&y);
                if !grad.is_finite() {
                    return Err(Error::numerical(format!(
                        "non-finite gradient at inner iteration {iter}"
                    )));
                }
                let mut trial = y.clone();
                trial
                    .add_scaled_in_place(&grad, -step)
                    .expect("gradient matches iterate shape");
                (projection(&trial), Some(step))
            }
            None => backtracking_step(&y, &objective, &gradient, &projection, warm_step, cfg)?,
        };
        let f_new = objective(&candidate);
        if !f_new.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite objective at inner iteration {iter}"
            )));
        }
        let alpha_next = next_alpha(alpha);

        if f_new > f_prev {
            if just_restarted {
                // A plain step from the last accepted point failed to
                // decrease; the objective is at its numerical floor here.
                break;
            }
            y = m_prev.clone();
            alpha = cfg.alpha1;
            just_restarted = true;
            continue;
        }
        just_restarted = false;

        let beta = momentum_beta(alpha, alpha_next);
        let mut extrapolated = candidate.clone();
        extrapolated
            .add_scaled_in_place(&candidate, beta)
            .expect("same shape");
        extrapolated
            .add_scaled_in_place(&m_prev, -beta)
            .expect("same shape");
        y = extrapolated;
        alpha = alpha_next;
        if let Some(t) = used_step {
            warm_step = t;
        }

        let decrease = f_prev - f_new;
        m_prev = candidate;
        f_prev = f_new;
        trace.push(f_prev);
        if decrease <= cfg.rel_decrease_tol * f_prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok((m_prev, trace))
}
