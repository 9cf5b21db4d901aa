//! Finite-difference verification of the analytic gradients on randomized
//! instances. Used by the verification subcommand of the CLI and by the
//! test suite; the differencing goes through the loss evaluations only, so
//! it is independent of the analytic gradient code it checks.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::{Matrix, RngStream};
use crate::objectives::{
    eval_l1, eval_l2, grad_l1_h, grad_l1_w, grad_l2_h, grad_l2_w, FactorSide, FactorStack,
    LossFamily, LossSpec,
};

/// Dimensions of the randomized check instances.
const CHECK_ROWS: usize = 5;
const CHECK_COLS: usize = 8;
const CHECK_RANKS: [usize; 3] = [4, 3, 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub trials: usize,
    pub seed: u64,
    /// Also check instances with active volume penalties.
    pub with_minvol: bool,
    pub tolerance: f64,
    /// Fault injection for detector sanity: negates one analytic gradient.
    pub flip_sign: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            trials: 20,
            seed: 0,
            with_minvol: false,
            tolerance: 1e-5,
            flip_sign: false,
        }
    }
}

/// Worst relative deviation seen for one (family, side, layer, volume) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckCell {
    pub family: LossFamily,
    pub side: char,
    pub layer: usize,
    pub minvol: bool,
    pub max_relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub cells: Vec<GradCheckCell>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_deviation(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| c.max_relative_deviation)
            .fold(0.0, f64::max)
    }

    pub fn all_within_tolerance(&self) -> bool {
        self.max_deviation() < self.tolerance
    }

    /// First offending (family, side, layer) triple, if any.
    pub fn first_failure(&self) -> Option<&GradCheckCell> {
        self.cells
            .iter()
            .find(|c| c.max_relative_deviation >= self.tolerance)
    }
}

fn random_instance(rng: &mut RngStream) -> (Matrix, FactorStack) {
    let x = Matrix::from_raw(
        CHECK_ROWS,
        CHECK_COLS,
        (0..CHECK_ROWS * CHECK_COLS).map(|_| rng.normal()).collect(),
    );
    let mut pairs = Vec::new();
    let mut prev = CHECK_COLS;
    for &r in &CHECK_RANKS {
        let w = Matrix::from_raw(
            CHECK_ROWS,
            r,
            (0..CHECK_ROWS * r).map(|_| rng.uniform() + 0.1).collect(),
        );
        let h = Matrix::from_raw(r, prev, (0..r * prev).map(|_| rng.uniform() + 0.1).collect());
        pairs.push((w, h));
        prev = r;
    }
    (x, FactorStack::new(pairs).expect("chain consistent"))
}

fn random_spec(rng: &mut RngStream, family: LossFamily, minvol: bool) -> LossSpec {
    let weights: Vec<f64> = (0..CHECK_RANKS.len() - 1)
        .map(|_| 0.5 + 1.5 * rng.uniform())
        .collect();
    let spec = LossSpec::new(family, weights, vec![], 0.1).expect("valid");
    if minvol {
        let kappas: Vec<f64> = (0..CHECK_RANKS.len())
            .map(|_| 0.02 + 0.2 * rng.uniform())
            .collect();
        spec.with_minvol(kappas, 0.1).expect("valid")
    } else {
        spec
    }
}

/// Central finite differences of the loss with respect to one factor.
fn finite_difference(
    x: &Matrix,
    stack: &FactorStack,
    spec: &LossSpec,
    side: FactorSide,
    layer: usize,
) -> Result<Matrix> {
    let eval = |s: &FactorStack| -> Result<f64> {
        match spec.family {
            LossFamily::LayerCentric => eval_l1(x, s, spec),
            LossFamily::DataCentric => eval_l2(x, s, spec),
            LossFamily::L0 => unreachable!("gradient checks cover the consistent families"),
        }
    };
    let base = match side {
        FactorSide::W => stack.w(layer).clone(),
        FactorSide::H => stack.h(layer).clone(),
    };
    let mut grad = Matrix::zeros(base.rows(), base.cols());
    for i in 0..base.rows() {
        for j in 0..base.cols() {
            let step = 1e-6 * base.get(i, j).abs().max(1.0);
            let mut plus = stack.clone();
            let mut minus = stack.clone();
            let mut fp = base.clone();
            fp.set(i, j, base.get(i, j) + step);
            let mut fm = base.clone();
            fm.set(i, j, base.get(i, j) - step);
            match side {
                FactorSide::W => {
                    plus.set_w(layer, fp);
                    minus.set_w(layer, fm);
                }
                FactorSide::H => {
                    plus.set_h(layer, fp);
                    minus.set_h(layer, fm);
                }
            }
            grad.set(i, j, (eval(&plus)? - eval(&minus)?) / (2.0 * step));
        }
    }
    Ok(grad)
}

/// Runs the full sweep of gradient checks and reports the worst relative
/// deviation per cell.
pub fn run_gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = RngStream::new(cfg.seed);
    let minvol_options: &[bool] = if cfg.with_minvol { &[false, true] } else { &[false] };
    let mut cells = Vec::new();
    for &family in &[LossFamily::LayerCentric, LossFamily::DataCentric] {
        for &minvol in minvol_options {
            for layer in 0..CHECK_RANKS.len() {
                for side in [FactorSide::W, FactorSide::H] {
                    cells.push(GradCheckCell {
                        family,
                        side: match side {
                            FactorSide::W => 'W',
                            FactorSide::H => 'H',
                        },
                        layer,
                        minvol,
                        max_relative_deviation: 0.0,
                    });
                }
            }
        }
    }
    for _ in 0..cfg.trials {
        let (x, stack) = random_instance(&mut rng);
        let mut cell_idx = 0;
        for &family in &[LossFamily::LayerCentric, LossFamily::DataCentric] {
            for &minvol in minvol_options {
                let spec = random_spec(&mut rng, family, minvol);
                for layer in 0..CHECK_RANKS.len() {
                    for side in [FactorSide::W, FactorSide::H] {
                        let mut analytic = match (family, side) {
                            (LossFamily::LayerCentric, FactorSide::W) => {
                                grad_l1_w(&x, &stack, &spec, layer)?
                            }
                            (LossFamily::LayerCentric, FactorSide::H) => {
                                grad_l1_h(&x, &stack, &spec, layer)?
                            }
                            (LossFamily::DataCentric, FactorSide::W) => {
                                grad_l2_w(&x, &stack, &spec, layer)?
                            }
                            (LossFamily::DataCentric, FactorSide::H) => {
                                grad_l2_h(&x, &stack, &spec, layer)?
                            }
                            (LossFamily::L0, _) => unreachable!(),
                        };
                        if cfg.flip_sign {
                            analytic = analytic.scaled(-1.0);
                        }
                        let numeric = finite_difference(&x, &stack, &spec, side, layer)?;
                        let denom = numeric.frob_norm_sq().sqrt().max(1e-12);
                        let dev = analytic.frob_err_sq(&numeric)?.sqrt() / denom;
                        let cell = &mut cells[cell_idx];
                        if dev > cell.max_relative_deviation {
                            cell.max_relative_deviation = dev;
                        }
                        cell_idx += 1;
                    }
                }
            }
        }
    }
    Ok(GradCheckReport {
        cells,
        tolerance: cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let report = run_gradcheck(&GradCheckConfig {
            trials: 5,
            seed: 7,
            with_minvol: true,
            ..GradCheckConfig::default()
        })
        .unwrap();
        assert!(
            report.all_within_tolerance(),
            "worst deviation {} in {:?}",
            report.max_deviation(),
            report.first_failure()
        );
    }

    #[test]
    fn sign_flip_is_detected() {
        let report = run_gradcheck(&GradCheckConfig {
            trials: 1,
            seed: 8,
            flip_sign: true,
            ..GradCheckConfig::default()
        })
        .unwrap();
        assert!(!report.all_within_tolerance());
        assert!(report.first_failure().is_some());
    }
}
