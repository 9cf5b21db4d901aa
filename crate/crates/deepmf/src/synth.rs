//! Synthetic two-layer benchmark generator: fixed 3x6 and 3x3 ground-truth
//! basis matrices, Dirichlet-distributed coefficients for the first layer,
//! and additive Gaussian noise normalized to an exact relative level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// The noise grid used by the synthetic benchmark sweep.
pub const NOISE_LEVELS: [f64; 10] = [
    1e-2, 2.51e-2, 6.31e-2, 9.49e-2, 1.267e-1, 1.585e-1, 2.384e-1, 3.182e-1, 3.981e-1, 1.0,
];

/// Generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Sample count (columns of the data matrix).
    pub n: usize,
    /// Symmetric Dirichlet concentration for the first-layer coefficients.
    pub dirichlet_alpha: f64,
    /// Relative noise level; the generated data satisfies
    /// `||X - X*||_F = epsilon * ||X*||_F` exactly.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            dirichlet_alpha: 0.05,
            epsilon: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::usage("sample count must be at least 1"));
        }
        if !(self.dirichlet_alpha > 0.0) {
            return Err(Error::usage(format!(
                "Dirichlet concentration must be positive, got {}",
                self.dirichlet_alpha
            )));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::usage(format!(
                "noise level must be a finite nonnegative number, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// A generated dataset plus its exact ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDataset {
    pub x: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
    pub h2: Matrix,
    pub h1: Matrix,
    pub epsilon: f64,
}

/// The fixed ground-truth factors `(W1, W2, H2)` with `W1 = W2 * H2` exactly
/// and column-stochastic `W2` and `H2`.
pub fn ground_truth_factors() -> (Matrix, Matrix, Matrix) {
    let w1 = Matrix::from_rows(&[
        &[0.1, 0.1, 0.4, 0.4, 0.5, 0.5],
        &[0.4, 0.5, 0.1, 0.5, 0.1, 0.4],
        &[0.5, 0.4, 0.5, 0.1, 0.4, 0.1],
    ])
    .expect("constant");
    let w2 = Matrix::from_rows(&[&[0.5, 0.0, 0.5], &[0.0, 0.5, 0.5], &[0.5, 0.5, 0.0]])
        .expect("constant");
    let h2 = Matrix::from_rows(&[
        &[0.2, 0.0, 0.8, 0.0, 0.8, 0.2],
        &[0.8, 0.8, 0.2, 0.2, 0.0, 0.0],
        &[0.0, 0.2, 0.0, 0.8, 0.2, 0.8],
    ])
    .expect("constant");
    (w1, w2, h2)
}

/// Matrix of i.i.d. symmetric-Dirichlet columns; every column is nonnegative
/// and sums to one.
pub fn sample_dirichlet_columns(r: usize, n: usize, alpha: f64, rng: &mut RngStream) -> Matrix {
    assert!(alpha > 0.0, "Dirichlet concentration must be positive");
    let mut out = Matrix::zeros(r, n);
    let mut draws = vec![0.0; r];
    for j in 0..n {
        loop {
            let mut sum = 0.0;
            for d in draws.iter_mut() {
                *d = rng.gamma(alpha);
                sum += *d;
            }
            // Tiny concentrations can underflow every draw to zero; redraw.
            if sum > f64::MIN_POSITIVE {
                for (i, d) in draws.iter().enumerate() {
                    out.set(i, j, d / sum);
                }
                break;
            }
        }
    }
    out
}

/// Generates `X = W1 * H1 + N` with Dirichlet coefficients and Gaussian noise
/// rescaled so that `||N||_F = epsilon * ||X*||_F` holds exactly. The data is
/// not clipped: noisy entries may be negative.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let (w1, w2, h2) = ground_truth_factors();
    let mut rng = RngStream::new(cfg.seed);
    let h1 = sample_dirichlet_columns(w1.cols(), cfg.n, cfg.dirichlet_alpha, &mut rng);
    let clean = w1.matmul(&h1)?;
    let x = if cfg.epsilon == 0.0 {
        clean
    } else {
        let raw_noise = Matrix::from_raw(
            clean.rows(),
            clean.cols(),
            (0..clean.rows() * clean.cols()).map(|_| rng.normal()).collect(),
        );
        let scale = cfg.epsilon * clean.frob_norm_sq().sqrt() / raw_noise.frob_norm_sq().sqrt();
        let mut x = clean;
        x.add_scaled_in_place(&raw_noise, scale)?;
        x
    };
    Ok(SynthDataset {
        x,
        w1,
        w2,
        h2,
        h1,
        epsilon: cfg.epsilon,
    })
}
