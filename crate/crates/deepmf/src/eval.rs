//! Quality metrics: mean-removed spectral angle with optimal column
//! matching, and per-layer relative reconstruction errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::objectives::FactorStack;

/// Per-layer metric summary for one solver run against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean matched spectral angle per layer, in [0, 100].
    pub layer_mrsa: Vec<f64>,
    /// Column permutation per layer: entry `i` is the estimated column
    /// matched to ground-truth column `i`.
    pub permutations: Vec<Vec<usize>>,
    /// Relative layer-centric / data-centric error pairs per layer.
    pub relative_errors: Vec<RelativeErrorPair>,
}

/// Relative errors of one layer under both loss viewpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeErrorPair {
    pub layer_centric: f64,
    pub data_centric: f64,
}

/// Mean-removed spectral angle between two vectors, scaled to [0, 100].
///
/// Zero for vectors equal up to positive scaling and a constant shift.
/// Constant vectors (zero after mean removal) are a domain error, and a
/// cosine argument outside `[-1 - 1e-9, 1 + 1e-9]` is reported as a
/// numerical error instead of being silently clamped.
pub fn mrsa_pair(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(
            "mrsa_pair",
            format!("{} vs {} entries", a.len(), b.len()),
        ));
    }
    let centered = |v: &[f64]| -> Vec<f64> {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| x - mean).collect()
    };
    let ca = centered(a);
    let cb = centered(b);
    let na = ca.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = cb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::domain(
            "spectral angle undefined for a constant vector",
        ));
    }
    let cosine = ca
        .iter()
        .zip(cb.iter())
        .map(|(x, y)| x * y)
        .sum::<f64>()
        / (na * nb);
    if !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&cosine) {
        return Err(Error::numerical(format!(
            "cosine {cosine} outside [-1, 1] beyond tolerance"
        )));
    }
    // acos of the raw cosine loses half the significant digits near the
    // endpoints; the half-angle form is accurate there and exact for
    // identical or antiparallel inputs.
    let (mut diff_sq, mut sum_sq) = (0.0, 0.0);
    for (x, y) in ca.iter().zip(cb.iter()) {
        let u = x / na;
        let v = y / nb;
        diff_sq += (u - v) * (u - v);
        sum_sq += (u + v) * (u + v);
    }
    let angle = 2.0 * diff_sq.sqrt().atan2(sum_sq.sqrt());
    Ok(100.0 / std::f64::consts::PI * angle)
}

/// Mean spectral angle between two basis matrices under the best column
/// assignment, found on the pairwise-angle cost matrix. Returns the mean and
/// the permutation mapping each ground-truth column to its estimated column.
pub fn mrsa_matched(w_true: &Matrix, w_est: &Matrix) -> Result<(f64, Vec<usize>)> {
    if w_true.shape() != w_est.shape() {
        return Err(Error::dim(
            "mrsa_matched",
            format!("{:?} vs {:?}", w_true.shape(), w_est.shape()),
        ));
    }
    let r = w_true.cols();
    let mut cost = vec![vec![0.0; r]; r];
    for i in 0..r {
        let t = w_true.column(i);
        for j in 0..r {
            let e = w_est.column(j);
            cost[i][j] = mrsa_pair(&t, &e).map_err(|err| match err {
                Error::Domain { .. } => Error::domain(format!(
                    "constant column (true {i} / estimated {j}) in spectral-angle matching"
                )),
                other => other,
            })?;
        }
    }
    let (total, assignment) = hungarian_min_assignment(&cost);
    Ok((total / r as f64, assignment))
}

/// Minimum-cost assignment on a square cost matrix by the shortest
/// augmenting path method with potentials. Returns the total cost and the
/// column assigned to each row.
fn hungarian_min_assignment(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut assigned_row = vec![0usize; n + 1]; // column -> row (1-based; 0 = free)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        assigned_row[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if assigned_row[j] > 0 {
            row_to_col[assigned_row[j] - 1] = j - 1;
        }
    }
    let total = (0..n).map(|i| cost[i][row_to_col[i]]).sum();
    (total, row_to_col)
}

/// Relative layer-centric and data-centric errors for every layer.
///
/// `initial_norms[0]` must hold the squared norm of the data matrix and
/// `initial_norms[l]` (l >= 1) the squared norm of layer `l-1`'s basis at
/// initialization, which fixes the layer-centric denominators.
pub fn relative_errors(
    x: &Matrix,
    stack: &FactorStack,
    initial_norms: &[f64],
) -> Result<Vec<RelativeErrorPair>> {
    let l_count = stack.layer_count();
    if initial_norms.len() != l_count {
        return Err(Error::usage(format!(
            "expected {l_count} initial norms, got {}",
            initial_norms.len()
        )));
    }
    let x_norm = x.frob_norm_sq();
    if x_norm == 0.0 {
        return Err(Error::domain("data matrix has zero norm"));
    }
    let mut out = Vec::with_capacity(l_count);
    let mut chain = stack.h(0).clone();
    for li in 0..l_count {
        if li > 0 {
            chain = stack.h(li).matmul(&chain)?;
        }
        let denom = initial_norms[li];
        if denom == 0.0 {
            return Err(Error::domain(format!(
                "zero initial norm for layer {li}'s layer-centric denominator"
            )));
        }
        let target = if li == 0 { x } else { stack.w(li - 1) };
        let layer_approx = stack.w(li).matmul(stack.h(li))?;
        let layer_centric = target.frob_err_sq(&layer_approx)? / denom;
        let data_centric = x.frob_err_sq(&stack.w(li).matmul(&chain)?)? / x_norm;
        out.push(RelativeErrorPair {
            layer_centric,
            data_centric,
        });
    }
    Ok(out)
}

/// Layer-centric denominators at initialization: the squared norm of the
/// data followed by the squared norms of all but the last basis matrix.
pub fn initial_norms(x: &Matrix, stack: &FactorStack) -> Vec<f64> {
    let mut norms = Vec::with_capacity(stack.layer_count());
    norms.push(x.frob_norm_sq());
    for li in 0..stack.layer_count() - 1 {
        norms.push(stack.w(li).frob_norm_sq());
    }
    norms
}
