//! `bench`: the synthetic recovery benchmark — a grid of (method, noise
//! level, trial) cells with paired datasets, reporting matched spectral
//! angles per layer in a long-format CSV plus a mean/std summary.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Instant, SystemTime};

use deepmf::{
    benchmark_config, generate_dataset, mrsa_matched, single_nmf_solve, BenchVariant, Method,
    SynthConfig, NOISE_LEVELS,
};
use serde::Serialize;

use crate::cli_error::{CliError, CliResult};
use crate::config::{out_dir, parse_method, parse_variant};
use crate::csv::{fmt_f64, write_table};
use crate::flags::Flags;
use crate::manifest::write_manifest;

const VALUE_KEYS: &[&str] = &[
    "variant", "methods", "trials", "eps", "n", "iters", "it-in", "inner-iters", "seed", "jobs",
    "out",
];

#[derive(Serialize, Clone)]
struct BenchSetup {
    variant: BenchVariant,
    methods: Vec<Method>,
    trials: usize,
    noise_levels: Vec<f64>,
    n: usize,
    outer_iters: usize,
    init_improvement_iters: usize,
    inner_iters: usize,
    base_seed: u64,
}

struct CellResult {
    rows: Vec<(Method, f64, usize, usize, f64)>, // method, eps, trial, layer, mrsa
    warnings: Vec<String>,
}

pub fn run(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(args, VALUE_KEYS, &[])?;
    let variant = parse_variant(&flags.require::<String>("variant")?)?;
    let methods: Vec<Method> = flags
        .string_list("methods")
        .unwrap_or_else(|| {
            ["mmf", "lcdmf", "dcdmf", "tridmf"]
                .iter()
                .map(|s| s.to_string())
                .collect()
        })
        .iter()
        .map(|m| parse_method(m))
        .collect::<CliResult<_>>()?;
    let noise_levels: Vec<f64> = match flags.raw("eps") {
        None | Some("grid") => NOISE_LEVELS.to_vec(),
        Some(_) => flags.list("eps")?.expect("raw value present"),
    };
    let setup = BenchSetup {
        variant,
        methods,
        trials: flags.get_or("trials", 25)?,
        noise_levels,
        n: flags.get_or("n", 1000)?,
        outer_iters: flags.get_or("iters", 500)?,
        init_improvement_iters: flags.get_or("it-in", 50)?,
        inner_iters: flags.get_or("inner-iters", 10)?,
        base_seed: flags.get_or("seed", 0)?,
    };
    if setup.trials == 0 {
        return Err(CliError::config("--trials must be positive"));
    }
    let dir = out_dir(&flags);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;

    let start_time = SystemTime::now();
    let clock = Instant::now();
    let cells: Vec<(usize, usize)> = (0..setup.noise_levels.len())
        .flat_map(|e| (0..setup.trials).map(move |t| (e, t)))
        .collect();
    let results = run_cells(&setup, &cells, job_count(&flags, cells.len())?)?;

    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    for cell in results {
        warnings.extend(cell.warnings);
        rows.extend(cell.rows);
    }
    // Fixed output order regardless of completion order.
    let method_pos =
        |m: Method| setup.methods.iter().position(|x| *x == m).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        method_pos(a.0)
            .cmp(&method_pos(b.0))
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });

    let results_path = dir.join("results.csv");
    write_table(
        &results_path,
        &["method", "eps", "trial", "layer", "mrsa"]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>(),
        rows.iter().map(|(m, eps, trial, layer, mrsa)| {
            vec![
                method_name(*m).to_string(),
                fmt_f64(*eps),
                trial.to_string(),
                (layer + 1).to_string(),
                fmt_f64(*mrsa),
            ]
        }),
    )?;

    let summary_path = dir.join("summary.csv");
    write_summary(&summary_path, &setup, &rows)?;

    for warning in warnings.iter().take(10) {
        eprintln!("warning: {warning}");
    }
    write_manifest(
        &dir,
        "bench",
        serde_json::to_value(&setup).expect("serializable"),
        None,
        vec!["results.csv".to_string(), "summary.csv".to_string()],
        start_time,
        clock.elapsed().as_secs_f64(),
    )?;
    println!(
        "bench: {} rows over {} methods x {} noise levels x {} trials -> {}",
        rows.len(),
        setup.methods.len(),
        setup.noise_levels.len(),
        setup.trials,
        dir.display()
    );
    Ok(())
}

fn job_count(flags: &Flags, cells: usize) -> CliResult<usize> {
    let default = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    Ok(flags.get_or("jobs", default)?.clamp(1, cells.max(1)))
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Mmf => "mmf",
        Method::TriDmf => "tridmf",
        Method::LcDmf => "lcdmf",
        Method::DcDmf => "dcdmf",
        Method::SingleNmf => "single",
    }
}

/// Runs all grid cells, possibly in parallel; every method inside a cell
/// consumes the same dataset instance (paired design), and each cell derives
/// its stream from the base seed and its index.
fn run_cells(
    setup: &BenchSetup,
    cells: &[(usize, usize)],
    jobs: usize,
) -> CliResult<Vec<CellResult>> {
    let queue: Mutex<VecDeque<usize>> = Mutex::new((0..cells.len()).collect());
    let results: Mutex<Vec<Option<CliResult<CellResult>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let Some(idx) = queue.lock().expect("queue lock").pop_front() else {
                    break;
                };
                let outcome = run_cell(setup, cells[idx].0, cells[idx].1, idx as u64);
                results.lock().expect("results lock")[idx] = Some(outcome);
            });
        }
    });
    results
        .into_inner()
        .expect("all workers joined")
        .into_iter()
        .map(|r| r.expect("every cell visited"))
        .collect()
}

fn run_cell(setup: &BenchSetup, eps_idx: usize, trial: usize, cell_index: u64) -> CliResult<CellResult> {
    let eps = setup.noise_levels[eps_idx];
    let seed = setup.base_seed.wrapping_add(cell_index);
    let ds = generate_dataset(&SynthConfig {
        n: setup.n,
        dirichlet_alpha: 0.05,
        epsilon: eps,
        seed,
    })?;
    let truths = [&ds.w1, &ds.w2];
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &method in &setup.methods {
        let mut cfg = benchmark_config(method, setup.variant, eps);
        cfg.outer_iters = setup.outer_iters;
        cfg.init_improvement_iters = setup.init_improvement_iters.min(setup.outer_iters);
        cfg.fpgm.max_inner_iters = setup.inner_iters;
        cfg.seed = seed;
        if method == Method::SingleNmf {
            // One independent factorization per layer rank, under that
            // layer's constraints and volume guess.
            for (li, &truth) in truths.iter().enumerate() {
                let rank = cfg.ranks[li];
                let mut layer_cfg = cfg.clone();
                layer_cfg.w_constraints = vec![cfg.w_constraints[li]];
                layer_cfg.h_constraints = vec![cfg.h_constraints[li]];
                layer_cfg.kappa_tilde = cfg.kappa_tilde.as_ref().map(|kt| vec![kt[li]]);
                let report = single_nmf_solve(&ds.x, rank, &layer_cfg)?;
                let (mrsa, _) = mrsa_matched(truth, report.factors.w(0))?;
                rows.push((method, eps, trial, li, mrsa));
                warnings.extend(tagged(report.warnings, method, eps, trial));
            }
        } else {
            let report = deepmf::solve(&ds.x, &cfg)?;
            for (li, &truth) in truths.iter().enumerate() {
                let (mrsa, _) = mrsa_matched(truth, report.factors.w(li))?;
                rows.push((method, eps, trial, li, mrsa));
            }
            warnings.extend(tagged(report.warnings, method, eps, trial));
        }
    }
    Ok(CellResult { rows, warnings })
}

fn tagged(warnings: Vec<String>, method: Method, eps: f64, trial: usize) -> Vec<String> {
    warnings
        .into_iter()
        .map(|w| format!("[{} eps={eps} trial={trial}] {w}", method_name(method)))
        .collect()
}

fn write_summary(
    path: &Path,
    setup: &BenchSetup,
    rows: &[(Method, f64, usize, usize, f64)],
) -> CliResult<()> {
    let mut summary_rows = Vec::new();
    for &method in &setup.methods {
        for &eps in &setup.noise_levels {
            for layer in 0..2 {
                let values: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.0 == method && r.1 == eps && r.3 == layer)
                    .map(|r| r.4)
                    .collect();
                if values.is_empty() {
                    continue;
                }
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let std = if values.len() > 1 {
                    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                        / (values.len() - 1) as f64)
                        .sqrt()
                } else {
                    0.0
                };
                summary_rows.push(vec![
                    method_name(method).to_string(),
                    fmt_f64(eps),
                    (layer + 1).to_string(),
                    fmt_f64(mean),
                    fmt_f64(std),
                ]);
            }
        }
    }
    write_table(
        path,
        &["method", "eps", "layer", "mean_mrsa", "std_mrsa"]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>(),
        summary_rows,
    )
}
