//! `run`: factorize a matrix with one method and emit the report, the
//! per-iteration trace, and the factors.

use std::path::Path;
use std::time::{Instant, SystemTime};

use deepmf::{mrsa_matched, MetricReport, RelativeErrorPair, SolverReport};
use serde::Serialize;

use crate::cli_error::{CliError, CliResult};
use crate::config::{out_dir, solver_config_from_flags};
use crate::csv::{fmt_f64, read_matrix, write_matrix, write_table};
use crate::flags::Flags;
use crate::manifest::{write_json, write_manifest};

const VALUE_KEYS: &[&str] = &[
    "x", "method", "ranks", "loss", "wcon", "hcon", "lambda", "lambda-tilde", "mu", "minvol",
    "delta", "iters", "it-in", "inner-iters", "alpha1", "init", "seed", "truth", "out",
];

#[derive(Serialize)]
struct RunReportFile<'a> {
    solver: &'a SolverReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: &'a Option<MetricReport>,
}

pub fn run(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(args, VALUE_KEYS, &[])?;
    let x_path: String = flags.require("x")?;
    let x = read_matrix(Path::new(&x_path))?;
    let cfg = solver_config_from_flags(&flags)?;
    let dir = out_dir(&flags);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;

    let start_time = SystemTime::now();
    let clock = Instant::now();
    let report = deepmf::solve(&x, &cfg)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }

    let metrics = match flags.string_list("truth") {
        None => None,
        Some(paths) => Some(compute_metrics(&report, &paths)?),
    };

    let mut outputs = Vec::new();
    let report_path = dir.join("report.json");
    write_json(
        &report_path,
        &RunReportFile {
            solver: &report,
            metrics: &metrics,
        },
    )?;
    outputs.push("report.json".to_string());

    let trace_path = dir.join("trace.csv");
    write_trace(&trace_path, &report)?;
    outputs.push("trace.csv".to_string());

    for li in 0..report.factors.layer_count() {
        let w_name = format!("W{}.csv", li + 1);
        write_matrix(&dir.join(&w_name), report.factors.w(li))?;
        outputs.push(w_name);
        let h_name = format!("H{}.csv", li + 1);
        write_matrix(&dir.join(&h_name), report.factors.h(li))?;
        outputs.push(h_name);
    }

    write_manifest(
        &dir,
        "run",
        serde_json::to_value(&cfg).expect("serializable"),
        metrics
            .as_ref()
            .map(|m| serde_json::to_value(m).expect("serializable")),
        outputs,
        start_time,
        clock.elapsed().as_secs_f64(),
    )?;

    let last = report
        .layer_centric_trace
        .last()
        .expect("trace never empty");
    println!(
        "run: final relative layer errors {}",
        last.iter()
            .map(|v| format!("{v:.3e}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    if let Some(m) = &metrics {
        println!(
            "run: matched spectral angles {}",
            m.layer_mrsa
                .iter()
                .map(|v| format!("{v:.3}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
    }
    Ok(())
}

fn compute_metrics(report: &SolverReport, truth_paths: &[String]) -> CliResult<MetricReport> {
    if truth_paths.len() > report.factors.layer_count() {
        return Err(CliError::config(format!(
            "{} ground-truth files for {} layers",
            truth_paths.len(),
            report.factors.layer_count()
        )));
    }
    let mut layer_mrsa = Vec::new();
    let mut permutations = Vec::new();
    for (li, path) in truth_paths.iter().enumerate() {
        let truth = read_matrix(Path::new(path))?;
        let (mean, perm) = mrsa_matched(&truth, report.factors.w(li))?;
        layer_mrsa.push(mean);
        permutations.push(perm);
    }
    let relative_errors = report
        .layer_centric_trace
        .last()
        .expect("trace never empty")
        .iter()
        .zip(report.data_centric_trace.last().expect("trace never empty"))
        .map(|(&lc, &dc)| RelativeErrorPair {
            layer_centric: lc,
            data_centric: dc,
        })
        .collect();
    Ok(MetricReport {
        layer_mrsa,
        permutations,
        relative_errors,
    })
}

fn write_trace(path: &Path, report: &SolverReport) -> CliResult<()> {
    let layers = report.factors.layer_count();
    let mut header = vec!["iter".to_string()];
    for li in 1..=layers {
        header.push(format!("lc_err_l{li}"));
    }
    for li in 1..=layers {
        header.push(format!("dc_err_l{li}"));
    }
    header.push("penalized_total".to_string());
    let rows = (0..report.l0_trace.len()).map(|it| {
        let mut row = Vec::with_capacity(2 * layers + 2);
        row.push(it.to_string());
        for v in &report.layer_centric_trace[it] {
            row.push(fmt_f64(*v));
        }
        for v in &report.data_centric_trace[it] {
            row.push(fmt_f64(*v));
        }
        row.push(fmt_f64(report.penalized_total[it]));
        row
    });
    write_table(path, &header, rows)
}
