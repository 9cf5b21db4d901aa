//! Microbenchmarks for the numerical kernels and one short end-to-end solve.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use deepmf::{
    fpgm_solve, mrsa_matched, project_column_simplex, project_grouped_sparse, project_nonneg,
    FpgmConfig, Matrix, Method,
};
use deepmf_bench::{dataset, random_matrix, random_nonneg, short_solver_config};

fn bench_matmul(c: &mut Criterion) {
    let w = random_matrix(1, 3, 6);
    let h = random_matrix(2, 6, 1000);
    c.bench_function("matmul_3x6_6x1000", |b| {
        b.iter(|| black_box(w.matmul(black_box(&h)).unwrap()))
    });
    let a = random_matrix(3, 50, 200);
    c.bench_function("gram_50x200", |b| b.iter(|| black_box(black_box(&a).gram())));
}

fn bench_spectral_norm(c: &mut Criterion) {
    let h = random_matrix(4, 6, 1000);
    c.bench_function("spectral_norm_sq_6x1000", |b| {
        b.iter(|| black_box(black_box(&h).spectral_norm_sq()))
    });
}

fn bench_projections(c: &mut Criterion) {
    let m = random_matrix(5, 6, 1000);
    c.bench_function("project_column_simplex_6x1000", |b| {
        b.iter(|| black_box(project_column_simplex(black_box(&m))))
    });
    let sparse_input = random_nonneg(6, 10, 6);
    c.bench_function("project_grouped_sparse_10x6", |b| {
        b.iter(|| black_box(project_grouped_sparse(black_box(&sparse_input), 0.7).unwrap()))
    });
}

fn bench_fpgm_nnls(c: &mut Criterion) {
    let ds = dataset(1000, 1e-2, 7);
    let w = random_nonneg(8, 3, 6);
    let cfg = FpgmConfig {
        max_inner_iters: 10,
        ..FpgmConfig::default()
    };
    let lip = w.spectral_norm_sq();
    c.bench_function("fpgm_nnls_h_update_6x1000", |b| {
        b.iter(|| {
            let sol = fpgm_solve(
                &Matrix::zeros(6, 1000),
                |h| 0.5 * ds.x.frob_err_sq(&w.matmul(h).unwrap()).unwrap(),
                |h| w.matmul_tn(&w.matmul(h).unwrap().sub(&ds.x).unwrap()).unwrap(),
                project_nonneg,
                Some(lip),
                &cfg,
            )
            .unwrap();
            black_box(sol)
        })
    });
}

fn bench_metrics(c: &mut Criterion) {
    let ds = dataset(1000, 1e-2, 9);
    let est = random_matrix(10, 3, 6);
    c.bench_function("mrsa_matched_r6", |b| {
        b.iter(|| black_box(mrsa_matched(black_box(&ds.w1), black_box(&est)).unwrap()))
    });
}

fn bench_short_solve(c: &mut Criterion) {
    let ds = dataset(1000, 1e-2, 11);
    let cfg = short_solver_config(Method::LcDmf, 20);
    c.bench_function("lcdmf_20_outer_iterations_n1000", |b| {
        b.iter(|| black_box(deepmf::solve(black_box(&ds.x), &cfg).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_matmul,
    bench_spectral_norm,
    bench_projections,
    bench_fpgm_nnls,
    bench_metrics,
    bench_short_solve
);
criterion_main!(benches);
