//! Independent oracles shared by the integration tests: a Jacobi
//! eigensolver, an exhaustive KKT oracle for the simplex projection, and an
//! exhaustive active-set oracle for small nonnegative least squares. These
//! deliberately avoid the library's own linear-algebra paths.

#![allow(dead_code)]

use deepmf::Matrix;

/// All eigenvalues of a symmetric matrix by the cyclic Jacobi method,
/// descending.
pub fn jacobi_eigenvalues(g: &Matrix) -> Vec<f64> {
    let n = g.rows();
    assert_eq!(n, g.cols(), "Jacobi oracle needs a square matrix");
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| g.get(i, j)).collect()).collect();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off <= 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eigs.sort_by(|x, y| y.partial_cmp(x).expect("finite"));
    eigs
}

/// Singular values by one-sided Jacobi: columns are rotated until mutually
/// orthogonal, then their norms are the singular values. Working on the
/// matrix itself (not its Gram matrix) resolves small singular values down
/// to machine precision relative to the largest.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let rows = m.rows();
    let cols = m.cols();
    let mut u: Vec<Vec<f64>> = (0..cols).map(|j| m.column(j)).collect();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha: f64 = u[p].iter().map(|v| v * v).sum();
                let beta: f64 = u[q].iter().map(|v| v * v).sum();
                let gamma: f64 = u[p].iter().zip(u[q].iter()).map(|(a, b)| a * b).sum();
                if gamma.abs() <= 1e-30 + 1e-17 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let up = u[p][i];
                    let uq = u[q][i];
                    u[p][i] = c * up - s * uq;
                    u[q][i] = s * up + c * uq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut svals: Vec<f64> = u
        .iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    svals.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    svals
}

/// Euclidean projection of a point onto the probability simplex by explicit
/// KKT enumeration over all 2^n - 1 candidate supports.
pub fn simplex_projection_oracle(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    assert!(n <= 20, "enumeration oracle is exponential");
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let sum: f64 = support.iter().map(|&i| y[i]).sum();
        let tau = (sum - 1.0) / support.len() as f64;
        let mut x = vec![0.0; n];
        let mut feasible = true;
        for &i in &support {
            let v = y[i] - tau;
            if v < -1e-12 {
                feasible = false;
                break;
            }
            x[i] = v.max(0.0);
        }
        if !feasible {
            continue;
        }
        // KKT: off-support coordinates must not want to enter.
        let ok = (0..n)
            .filter(|i| mask & (1 << i) == 0)
            .all(|i| y[i] - tau <= 1e-12);
        if !ok {
            continue;
        }
        let dist: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, x));
        }
    }
    best.expect("the full support is always KKT-checkable").1
}

/// Gaussian elimination with partial pivoting for the small systems the
/// oracles need.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a[i].clone();
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-14 {
            return None;
        }
        m.swap(col, pivot);
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= factor * m[col][k];
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Exhaustive active-set oracle for `min_x 0.5||A x - b||^2, x >= 0` with a
/// handful of variables: tries every support, solves the normal equations on
/// it, and keeps KKT-consistent candidates.
pub fn nnls_oracle(a: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = a.cols();
    assert!(n <= 12, "enumeration oracle is exponential");
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut x = vec![0.0; n];
        if !support.is_empty() {
            // Normal equations restricted to the support.
            let k = support.len();
            let mut gram = vec![vec![0.0; k]; k];
            let mut rhs = vec![0.0; k];
            for (ii, &ci) in support.iter().enumerate() {
                for (jj, &cj) in support.iter().enumerate() {
                    gram[ii][jj] = (0..a.rows()).map(|r| a.get(r, ci) * a.get(r, cj)).sum();
                }
                rhs[ii] = (0..a.rows()).map(|r| a.get(r, ci) * b[r]).sum();
            }
            let Some(sol) = solve_dense(&gram, &rhs) else {
                continue;
            };
            if sol.iter().any(|&v| v < -1e-10) {
                continue;
            }
            for (ii, &ci) in support.iter().enumerate() {
                x[ci] = sol[ii].max(0.0);
            }
        }
        // KKT: the gradient must be nonnegative off the support.
        let residual: Vec<f64> = (0..a.rows())
            .map(|r| (0..n).map(|c| a.get(r, c) * x[c]).sum::<f64>() - b[r])
            .collect();
        let ok = (0..n).filter(|i| mask & (1 << i) == 0).all(|i| {
            let grad: f64 = (0..a.rows()).map(|r| a.get(r, i) * residual[r]).sum();
            grad >= -1e-8
        });
        if !ok {
            continue;
        }
        let obj: f64 = 0.5 * residual.iter().map(|v| v * v).sum::<f64>();
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, x));
        }
    }
    best.expect("the empty support is always KKT-checkable or dominated").1
}
