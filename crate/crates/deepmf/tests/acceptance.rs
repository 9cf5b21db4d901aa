//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured quantities (visible with `cargo test -- --nocapture`).
//! The command-line criteria live in the CLI crate's acceptance target.

mod common;

use std::time::Instant;

use deepmf::gradcheck::{run_gradcheck, GradCheckConfig};
use deepmf::{
    avg_hoyer_sparsity, benchmark_config, deep_mf_solve, degenerate_transform, eval_l0,
    fpgm_solve_traced, generate_dataset, mmf_solve, mrsa_matched, mrsa_pair,
    project_column_simplex, project_grouped_sparse, project_nonneg, solve,
    tri_dmf_solve_observed, BenchVariant, FactorStack, FpgmConfig, Matrix, Method, RngStream,
    SolverConfig, SynthConfig, TriSubproblem,
};

fn random_nonneg(rng: &mut RngStream, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.uniform() + 0.05).collect()).unwrap()
}

fn random_normal(rng: &mut RngStream, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

/// Gradient correctness: analytic gradients of both consistent losses match
/// central finite differences within 1e-5 relative on 20 random instances
/// (5x8 data, ranks 4,3,2), volume terms included.
#[test]
fn acceptance_gradient_correctness() {
    let start = Instant::now();
    let report = run_gradcheck(&GradCheckConfig {
        trials: 20,
        seed: 2024,
        with_minvol: true,
        ..GradCheckConfig::default()
    })
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        report.all_within_tolerance(),
        "[FAIL] gradient-correctness: worst {:.3e} in {:?}",
        report.max_deviation(),
        report.first_failure()
    );
    assert!(elapsed < 5.0, "[FAIL] gradient-correctness: {elapsed:.1}s >= 5s");
    println!(
        "[PASS] gradient-correctness: max relative deviation {:.3e} < 1e-5 ({elapsed:.1}s)",
        report.max_deviation()
    );
}

/// Consistency: the penalized global losses of both consistent methods are
/// non-increasing at every individual factor update over 500 outer
/// iterations on the synthetic benchmark.
#[test]
fn acceptance_consistency() {
    let start = Instant::now();
    let ds = generate_dataset(&SynthConfig {
        n: 1000,
        epsilon: 1e-2,
        seed: 1000,
        ..SynthConfig::default()
    })
    .unwrap();
    for method in [Method::LcDmf, Method::DcDmf] {
        let mut cfg = benchmark_config(method, BenchVariant::MinVol, 1e-2);
        cfg.seed = 2000;
        let report = solve(&ds.x, &cfg).unwrap();
        let trace = &report.per_update_penalized;
        assert!(trace.len() > 2 * 450, "expected one entry per factor update");
        let mut worst_uptick = 0.0f64;
        for pair in trace.windows(2) {
            let uptick = (pair[1] - pair[0]) / pair[0].abs().max(f64::MIN_POSITIVE);
            worst_uptick = worst_uptick.max(uptick);
        }
        assert!(
            worst_uptick <= 1e-12,
            "[FAIL] consistency: {method:?} loss increased by relative {worst_uptick:.3e}"
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "[FAIL] consistency: {elapsed:.1}s >= 2min");
    println!("[PASS] consistency: no per-update uptick above 1e-12 over 500 iterations ({elapsed:.1}s)");
}

/// Inconsistency exhibit: on a three-layer instance, the six update slots of
/// the per-layer scheme receive exactly the matrices of their six distinct
/// objectives (next-layer unfolded basis, previous-sweep coefficient chains,
/// fresh own coefficient in the basis update).
#[test]
fn acceptance_inconsistency_exhibit() {
    let mut rng = RngStream::new(77);
    let x = random_nonneg(&mut rng, 6, 12);
    let mut cfg = SolverConfig::new(Method::TriDmf, vec![4, 3, 2]);
    cfg.outer_iters = 5;
    cfg.init_improvement_iters = 3;
    cfg.seed = 9;

    struct Slot {
        layer: usize,
        basis_update: bool,
        left: Option<Matrix>,
        right: Option<Matrix>,
        stack: FactorStack,
    }
    let mut slots: Vec<Slot> = Vec::new();
    tri_dmf_solve_observed(&x, &cfg, |sub, stack| match sub {
        TriSubproblem::CoefficientUpdate { layer, left, right } => slots.push(Slot {
            layer: *layer,
            basis_update: false,
            left: Some((*left).clone()),
            right: right.map(|r| (*r).clone()),
            stack: stack.clone(),
        }),
        TriSubproblem::BasisUpdate { layer, right } => slots.push(Slot {
            layer: *layer,
            basis_update: true,
            left: None,
            right: Some((*right).clone()),
            stack: stack.clone(),
        }),
    })
    .unwrap();

    // Two global sweeps, six slots each (coefficient + basis per layer).
    assert_eq!(slots.len(), 2 * 6);
    let close = |a: &Matrix, b: &Matrix| a.frob_err_sq(b).unwrap() <= 1e-24 * (1.0 + a.frob_norm_sq());
    for sweep in slots.chunks(6) {
        // The stack at the sweep's first slot carries the previous sweep's
        // factor versions for every layer.
        let sweep_start = sweep[0].stack.clone();
        for (idx, slot) in sweep.iter().enumerate() {
            let layer = idx / 2;
            assert_eq!(slot.layer, layer);
            assert_eq!(slot.basis_update, idx % 2 == 1);
            if !slot.basis_update {
                // Coefficient slot: basis is W_{l+1} H_{l+1} of the previous
                // sweep (or W_L itself), right chain the previous sweep's
                // H_{l-1} ... H_1.
                let expected_left = if layer == 2 {
                    sweep_start.w(2).clone()
                } else {
                    sweep_start.w(layer + 1).matmul(sweep_start.h(layer + 1)).unwrap()
                };
                assert!(close(slot.left.as_ref().unwrap(), &expected_left));
                match layer {
                    0 => assert!(slot.right.is_none()),
                    _ => {
                        let expected_right = sweep_start.h_chain(layer - 1);
                        assert!(close(slot.right.as_ref().unwrap(), &expected_right));
                    }
                }
            } else {
                // Basis slot: the freshly updated own coefficient spliced
                // onto the previous sweep's chain.
                let fresh_h = slot.stack.h(layer).clone();
                let expected_right = if layer == 0 {
                    fresh_h
                } else {
                    fresh_h.matmul(&sweep_start.h_chain(layer - 1)).unwrap()
                };
                assert!(close(slot.right.as_ref().unwrap(), &expected_right));
            }
        }
        // The six objectives are genuinely distinct: the coefficient updates
        // of layers 0..2 see three different bases.
        let b0 = sweep[0].left.as_ref().unwrap();
        let b1 = sweep[2].left.as_ref().unwrap();
        let b2 = sweep[4].left.as_ref().unwrap();
        assert_ne!(b0.shape(), b1.shape());
        assert_ne!(b1.shape(), b2.shape());
    }
    println!("[PASS] inconsistency-exhibit: all six update slots receive their own objective's matrices");
}

/// Degeneracy: the degenerate rewrite preserves the last-layer unfolded loss
/// within 1e-10 and collapses the first basis to rank at most the last rank
/// on 50 random stacks.
#[test]
fn acceptance_degeneracy() {
    let start = Instant::now();
    let mut rng = RngStream::new(555);
    for trial in 0..50 {
        let (m, n, ranks): (usize, usize, Vec<usize>) = if trial % 2 == 0 {
            (4, 9, vec![6, 3])
        } else {
            (5, 10, vec![5, 4, 2])
        };
        let mut pairs = Vec::new();
        let mut prev = n;
        for &r in &ranks {
            pairs.push((random_nonneg(&mut rng, m, r), random_nonneg(&mut rng, r, prev)));
            prev = r;
        }
        let stack = FactorStack::new(pairs).unwrap();
        let x = random_normal(&mut rng, m, n);
        let degen = degenerate_transform(&stack).unwrap();
        let before = eval_l0(&x, &stack).unwrap();
        let after = eval_l0(&x, &degen).unwrap();
        assert!(
            (before - after).abs() <= 1e-10 * before.max(1.0),
            "[FAIL] degeneracy: loss changed {before} -> {after}"
        );
        let svals = common::singular_values(degen.w(0));
        let r_last = *ranks.last().unwrap();
        for (idx, &sv) in svals.iter().enumerate().skip(r_last) {
            assert!(
                sv <= 1e-10 * svals[0],
                "[FAIL] degeneracy: singular value {idx} is {sv:.3e} (largest {:.3e})",
                svals[0]
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "[FAIL] degeneracy: {elapsed:.1}s >= 5s");
    println!("[PASS] degeneracy: unfolded loss preserved and first basis rank-collapsed on 50 stacks ({elapsed:.1}s)");
}

fn paired_benchmark(
    variant: BenchVariant,
    methods: &[Method],
    seeds: usize,
) -> Vec<(Method, f64, f64)> {
    let eps = 1e-2;
    let mut means = Vec::new();
    for &method in methods {
        let (mut sum1, mut sum2) = (0.0, 0.0);
        for t in 0..seeds {
            let ds = generate_dataset(&SynthConfig {
                n: 1000,
                epsilon: eps,
                seed: 1000 + t as u64,
                ..SynthConfig::default()
            })
            .unwrap();
            let mut cfg = benchmark_config(method, variant, eps);
            cfg.seed = 2000 + t as u64;
            let report = solve(&ds.x, &cfg).unwrap();
            sum1 += mrsa_matched(&ds.w1, report.factors.w(0)).unwrap().0;
            sum2 += mrsa_matched(&ds.w2, report.factors.w(1)).unwrap().0;
        }
        means.push((method, sum1 / seeds as f64, sum2 / seeds as f64));
    }
    means
}

/// Synthetic recovery ordering, volume variant: with the benchmark
/// hyperparameters the consistent layer-centric method beats both baselines
/// at the first layer and the per-layer scheme at the second.
#[test]
fn acceptance_recovery_ordering_minvol() {
    let start = Instant::now();
    let means = paired_benchmark(
        BenchVariant::MinVol,
        &[Method::Mmf, Method::TriDmf, Method::LcDmf, Method::DcDmf],
        10,
    );
    let get = |m: Method| means.iter().find(|r| r.0 == m).unwrap();
    let mmf = get(Method::Mmf);
    let tri = get(Method::TriDmf);
    let lc = get(Method::LcDmf);
    let dc = get(Method::DcDmf);
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "recovery-minvol absolute means: mmf ({:.3}, {:.3}), tridmf ({:.3}, {:.3}), \
         lcdmf ({:.3}, {:.3}), dcdmf ({:.3}, {:.3})",
        mmf.1, mmf.2, tri.1, tri.2, lc.1, lc.2, dc.1, dc.2
    );
    assert!(
        lc.1 < mmf.1,
        "[FAIL] recovery-minvol: layer-1 lcdmf {:.3} !< mmf {:.3}",
        lc.1,
        mmf.1
    );
    assert!(
        lc.1 < tri.1,
        "[FAIL] recovery-minvol: layer-1 lcdmf {:.3} !< tridmf {:.3}",
        lc.1,
        tri.1
    );
    assert!(
        lc.2 < tri.2,
        "[FAIL] recovery-minvol: layer-2 lcdmf {:.3} !< tridmf {:.3}",
        lc.2,
        tri.2
    );
    assert!(elapsed < 900.0, "[FAIL] recovery-minvol: {elapsed:.1}s >= 15min");
    println!(
        "[PASS] recovery-minvol: layer-1 MRSA lcdmf {:.3} < mmf {:.3}, tridmf {:.3}; \
         layer-2 lcdmf {:.3} < tridmf {:.3} ({elapsed:.1}s)",
        lc.1, mmf.1, tri.1, lc.2, tri.2
    );
}

/// Synthetic recovery ordering, grouped-sparse variant: the consistent
/// layer-centric method beats the per-layer scheme at the first layer.
#[test]
fn acceptance_recovery_ordering_sparse() {
    let start = Instant::now();
    let means = paired_benchmark(BenchVariant::Sparse, &[Method::TriDmf, Method::LcDmf], 10);
    let tri = means.iter().find(|r| r.0 == Method::TriDmf).unwrap();
    let lc = means.iter().find(|r| r.0 == Method::LcDmf).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        lc.1 < tri.1,
        "[FAIL] recovery-sparse: layer-1 lcdmf {:.3} !< tridmf {:.3}",
        lc.1,
        tri.1
    );
    assert!(elapsed < 900.0, "[FAIL] recovery-sparse: {elapsed:.1}s >= 15min");
    println!(
        "[PASS] recovery-sparse: layer-1 MRSA lcdmf {:.3} < tridmf {:.3} ({elapsed:.1}s)",
        lc.1, tri.1
    );
}

/// Sequential-vs-global gap: on a three-layer problem with equal budgets the
/// consistent method's final deep-layer relative errors do not exceed the
/// sequential method's.
#[test]
fn acceptance_sequential_vs_global_gap() {
    let start = Instant::now();
    let mut rng = RngStream::new(321);
    let x = random_nonneg(&mut rng, 50, 200);
    let mut mmf_cfg = SolverConfig::new(Method::Mmf, vec![20, 10, 5]);
    mmf_cfg.outer_iters = 500;
    mmf_cfg.seed = 5;
    let mmf = mmf_solve(&x, &mmf_cfg).unwrap();

    let mut lc_cfg = SolverConfig::new(Method::LcDmf, vec![20, 10, 5]);
    lc_cfg.outer_iters = 500;
    lc_cfg.init_improvement_iters = 50;
    lc_cfg.lambda_tilde = Some(vec![10.0, 10.0]);
    lc_cfg.seed = 5;
    let lc = deep_mf_solve(&x, &lc_cfg).unwrap();

    let mmf_final = mmf.layer_centric_trace.last().unwrap();
    let lc_final = lc.layer_centric_trace.last().unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    for layer in [1, 2] {
        assert!(
            lc_final[layer] <= mmf_final[layer],
            "[FAIL] sequential-vs-global: layer {} lcdmf {:.3e} > mmf {:.3e}",
            layer + 1,
            lc_final[layer],
            mmf_final[layer]
        );
    }
    assert!(elapsed < 300.0, "[FAIL] sequential-vs-global: {elapsed:.1}s >= 5min");
    println!(
        "[PASS] sequential-vs-global: relative layer errors lcdmf ({:.3e}, {:.3e}) <= mmf ({:.3e}, {:.3e}) ({elapsed:.1}s)",
        lc_final[1], lc_final[2], mmf_final[1], mmf_final[2]
    );
}

/// Projection oracles: the simplex projection matches KKT enumeration on 100
/// random five-dimensional points, and the grouped sparse projection reaches
/// every target while preserving column norms.
#[test]
fn acceptance_projection_oracles() {
    let start = Instant::now();
    let mut rng = RngStream::new(888);
    for _ in 0..100 {
        let v: Vec<f64> = (0..5).map(|_| 3.0 * rng.normal()).collect();
        let got = project_column_simplex(&Matrix::new(5, 1, v.clone()).unwrap());
        let want = common::simplex_projection_oracle(&v);
        for i in 0..5 {
            assert!(
                (got.get(i, 0) - want[i]).abs() <= 1e-8,
                "[FAIL] projection-oracles: simplex entry {i}: {} vs {}",
                got.get(i, 0),
                want[i]
            );
        }
    }
    for &target in &[1.0 / 3.0, 0.7, 0.8, 0.85] {
        let m = random_nonneg(&mut rng, 10, 6);
        let out = project_grouped_sparse(&m, target).unwrap();
        let sp = avg_hoyer_sparsity(&out).unwrap();
        assert!(
            (sp - target).abs() <= 1e-3 || sp >= target,
            "[FAIL] projection-oracles: grouped target {target}: achieved {sp}"
        );
        for j in 0..m.cols() {
            let n0: f64 = m.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            let n1: f64 = out.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(
                (n0 - n1).abs() <= 1e-9 * n0,
                "[FAIL] projection-oracles: column {j} norm {n0} -> {n1}"
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "[FAIL] projection-oracles: {elapsed:.1}s >= 10s");
    println!("[PASS] projection-oracles: simplex matches KKT enumeration, grouped targets reached ({elapsed:.1}s)");
}

/// Inner-solver oracle equivalence: four-variable nonnegative least squares
/// matches exhaustive active-set enumeration, with the accepted objective
/// sequence non-increasing on every instance.
#[test]
fn acceptance_fpgm_oracle() {
    let start = Instant::now();
    let mut rng = RngStream::new(999);
    let cfg = FpgmConfig {
        max_inner_iters: 2000,
        rel_decrease_tol: 0.0,
        ..FpgmConfig::default()
    };
    for _ in 0..20 {
        let a = random_normal(&mut rng, 6, 4);
        let b: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let b_mat = Matrix::new(6, 1, b.clone()).unwrap();
        let (sol, trace) = fpgm_solve_traced(
            &Matrix::zeros(4, 1),
            |x| 0.5 * b_mat.frob_err_sq(&a.matmul(x).unwrap()).unwrap(),
            |x| a.matmul_tn(&a.matmul(x).unwrap().sub(&b_mat).unwrap()).unwrap(),
            project_nonneg,
            Some(a.spectral_norm_sq()),
            &cfg,
        )
        .unwrap();
        for pair in trace.windows(2) {
            assert!(
                pair[1] <= pair[0] * (1.0 + 1e-15),
                "[FAIL] fpgm-oracle: accepted objective increased {} -> {}",
                pair[0],
                pair[1]
            );
        }
        let oracle = common::nnls_oracle(&a, &b);
        for i in 0..4 {
            assert!(
                (sol.get(i, 0) - oracle[i]).abs() <= 1e-6,
                "[FAIL] fpgm-oracle: variable {i}: {} vs {}",
                sol.get(i, 0),
                oracle[i]
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!("[PASS] fpgm-oracle: 20 NNLS instances match enumeration, monotone accepted objectives ({elapsed:.1}s)");
}

/// Metric correctness: matched spectral angles equal the exhaustive
/// permutation minimum for small column counts, and the pairwise angle is
/// invariant to positive scaling and constant shifts.
#[test]
fn acceptance_metric_correctness() {
    let mut rng = RngStream::new(1234);
    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for slot in 0..n {
                let mut q: Vec<usize> =
                    p.iter().map(|&v| if v >= slot { v + 1 } else { v }).collect();
                q.push(slot);
                out.push(q);
            }
        }
        out
    }
    for trial in 0..50 {
        let r = 2 + trial % 6; // 2..=7 columns
        let w_true = random_normal(&mut rng, 8, r);
        let w_est = random_normal(&mut rng, 8, r);
        let (mean, _) = mrsa_matched(&w_true, &w_est).unwrap();
        let brute = permutations(r)
            .into_iter()
            .map(|p| {
                (0..r)
                    .map(|i| mrsa_pair(&w_true.column(i), &w_est.column(p[i])).unwrap())
                    .sum::<f64>()
                    / r as f64
            })
            .fold(f64::INFINITY, f64::min);
        assert!(
            (mean - brute).abs() <= 1e-10,
            "[FAIL] metric-correctness: assignment {mean} vs exhaustive {brute}"
        );
    }
    for _ in 0..50 {
        let a: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let gamma = 0.1 + 5.0 * rng.uniform();
        let shift = rng.normal();
        let scaled: Vec<f64> = a.iter().map(|v| gamma * v + shift).collect();
        let d = (mrsa_pair(&scaled, &b).unwrap() - mrsa_pair(&a, &b).unwrap()).abs();
        assert!(d <= 1e-10, "[FAIL] metric-correctness: invariance violated by {d:.3e}");
    }
    println!("[PASS] metric-correctness: matched angles equal exhaustive minima, invariances within 1e-10");
}
