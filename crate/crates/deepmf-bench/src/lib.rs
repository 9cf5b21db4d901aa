//! Shared fixtures for the criterion benchmarks.

use deepmf::{
    benchmark_config, generate_dataset, BenchVariant, Matrix, Method, RngStream, SolverConfig,
    SynthConfig, SynthDataset,
};

/// Synthetic dataset at the benchmark's dimensions.
pub fn dataset(n: usize, epsilon: f64, seed: u64) -> SynthDataset {
    generate_dataset(&SynthConfig {
        n,
        epsilon,
        seed,
        ..SynthConfig::default()
    })
    .expect("valid configuration")
}

/// Random dense matrix with standard-normal entries.
pub fn random_matrix(seed: u64, rows: usize, cols: usize) -> Matrix {
    let mut rng = RngStream::new(seed);
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect())
        .expect("finite entries")
}

/// Random dense nonnegative matrix.
pub fn random_nonneg(seed: u64, rows: usize, cols: usize) -> Matrix {
    let mut rng = RngStream::new(seed);
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.uniform() + 0.05).collect())
        .expect("finite entries")
}

/// Volume-variant benchmark configuration with a reduced iteration budget,
/// for timing whole solves.
pub fn short_solver_config(method: Method, outer_iters: usize) -> SolverConfig {
    let mut cfg = benchmark_config(method, BenchVariant::MinVol, 1e-2);
    cfg.outer_iters = outer_iters;
    cfg.init_improvement_iters = (outer_iters / 10).max(1);
    cfg
}
