//! Behavior tests for the command-line surface: file schemas, exit codes,
//! pairing of benchmark cells, and round-tripping of the emitted formats.

mod util;

use util::{read, run, run_ok, scratch};

fn parse_matrix(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|c| c.trim().parse().unwrap()).collect())
        .collect()
}

#[test]
fn synth_dimension_contract() {
    let dir = scratch("synth-dims");
    run_ok(&[
        "synth", "--n", "1000", "--eps", "0.01", "--seed", "7", "--out",
        dir.to_str().unwrap(),
    ]);
    let x = parse_matrix(&read(&dir.join("X.csv")));
    assert_eq!(x.len(), 3);
    assert_eq!(x[0].len(), 1000);
    let w1 = parse_matrix(&read(&dir.join("W1.csv")));
    assert_eq!((w1.len(), w1[0].len()), (3, 6));
}

#[test]
fn noiseless_synth_data_equals_factor_product() {
    let dir = scratch("synth-noiseless");
    run_ok(&[
        "synth", "--n", "40", "--eps", "0", "--seed", "3", "--out",
        dir.to_str().unwrap(),
    ]);
    let x = parse_matrix(&read(&dir.join("X.csv")));
    let w1 = parse_matrix(&read(&dir.join("W1.csv")));
    let h1 = parse_matrix(&read(&dir.join("H1.csv")));
    for i in 0..3 {
        for j in 0..40 {
            let prod: f64 = (0..6).map(|k| w1[i][k] * h1[k][j]).sum();
            assert!(
                (x[i][j] - prod).abs() <= 1e-15 * prod.abs().max(1.0),
                "X[{i}][{j}] = {} vs product {prod}",
                x[i][j]
            );
        }
    }
}

#[test]
fn run_emits_non_increasing_penalized_total_and_metrics() {
    let dir = scratch("run-lcdmf");
    run_ok(&[
        "synth", "--n", "120", "--eps", "0.01", "--seed", "5", "--out",
        dir.to_str().unwrap(),
    ]);
    let out_dir = dir.join("fit");
    let x = dir.join("X.csv");
    let w1 = dir.join("W1.csv");
    let w2 = dir.join("W2.csv");
    run_ok(&[
        "run", "--x", x.to_str().unwrap(), "--method", "lcdmf", "--ranks", "6,3",
        "--loss", "lc", "--minvol", "1e-3,1e-2", "--iters", "30", "--it-in", "5",
        "--seed", "1", "--truth",
        &format!("{},{}", w1.display(), w2.display()),
        "--out", out_dir.to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&read(&out_dir.join("report.json"))).unwrap();
    let per_update = report["solver"]["per_update_penalized"].as_array().unwrap();
    assert!(per_update.len() > 2);
    for pair in per_update.windows(2) {
        let (a, b) = (pair[0].as_f64().unwrap(), pair[1].as_f64().unwrap());
        assert!(b <= a * (1.0 + 1e-12), "penalized loss increased {a} -> {b}");
    }
    assert!(report["metrics"]["layer_mrsa"].as_array().unwrap().len() == 2);
    // Factor files exist with the configured shapes.
    let w2_est = parse_matrix(&read(&out_dir.join("W2.csv")));
    assert_eq!((w2_est.len(), w2_est[0].len()), (3, 3));
}

#[test]
fn mmf_recovers_noiseless_first_layer() {
    let dir = scratch("mmf-noiseless");
    run_ok(&[
        "synth", "--n", "150", "--eps", "0", "--seed", "8", "--out",
        dir.to_str().unwrap(),
    ]);
    let x = dir.join("X.csv");
    let out_dir = dir.join("fit");
    run_ok(&[
        "run", "--x", x.to_str().unwrap(), "--method", "mmf", "--ranks", "6,3",
        "--iters", "60", "--seed", "1", "--out", out_dir.to_str().unwrap(),
    ]);
    let trace = read(&out_dir.join("trace.csv"));
    let last = trace.lines().last().unwrap();
    let lc_l1: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!(lc_l1 < 1e-4, "final first-layer relative error {lc_l1}");
}

#[test]
fn trace_schema_identical_across_methods() {
    let dir = scratch("trace-schema");
    run_ok(&[
        "synth", "--n", "60", "--eps", "0.05", "--seed", "2", "--out",
        dir.to_str().unwrap(),
    ]);
    let x = dir.join("X.csv");
    let mut headers = Vec::new();
    for method in ["lcdmf", "tridmf"] {
        let out_dir = dir.join(method);
        run_ok(&[
            "run", "--x", x.to_str().unwrap(), "--method", method, "--ranks", "6,3",
            "--iters", "10", "--it-in", "4", "--seed", "1", "--out",
            out_dir.to_str().unwrap(),
        ]);
        let trace = read(&out_dir.join("trace.csv"));
        let mut lines = trace.lines();
        headers.push(lines.next().unwrap().to_string());
        assert_eq!(lines.count(), 11, "{method}: expected iters+1 rows");
    }
    assert_eq!(headers[0], headers[1], "trace schemas differ across methods");
    assert_eq!(
        headers[0],
        "iter,lc_err_l1,lc_err_l2,dc_err_l1,dc_err_l2,penalized_total"
    );
}

#[test]
fn bench_row_counts_and_method_order_independence() {
    let dir = scratch("bench-counts");
    let common = [
        "--variant", "minvol", "--trials", "2", "--eps", "0.01,0.1585", "--n", "80",
        "--iters", "12", "--it-in", "4", "--seed", "3",
    ];
    let out_a = dir.join("a");
    let mut args_a: Vec<&str> = vec!["bench", "--methods", "mmf,lcdmf"];
    args_a.extend_from_slice(&common);
    args_a.extend_from_slice(&["--out", out_a.to_str().unwrap()]);
    run_ok(&args_a);
    let results = read(&out_a.join("results.csv"));
    // methods x levels x trials x layers data rows, plus one header.
    assert_eq!(results.lines().count(), 1 + 2 * 2 * 2 * 2);
    let summary = read(&out_a.join("summary.csv"));
    assert_eq!(summary.lines().count(), 1 + 2 * 2 * 2);

    // Paired design: reversing the method list must not change any value,
    // because trial t of every method consumes the same dataset instance.
    let out_b = dir.join("b");
    let mut args_b: Vec<&str> = vec!["bench", "--methods", "lcdmf,mmf"];
    args_b.extend_from_slice(&common);
    args_b.extend_from_slice(&["--out", out_b.to_str().unwrap()]);
    run_ok(&args_b);
    let parse_rows = |text: &str| {
        let mut rows: Vec<String> = text.lines().skip(1).map(|s| s.to_string()).collect();
        rows.sort();
        rows
    };
    assert_eq!(
        parse_rows(&results),
        parse_rows(&read(&out_b.join("results.csv"))),
        "per-method results depend on method order"
    );
}

#[test]
fn sparse_constraint_flag_reaches_target() {
    let dir = scratch("hcon-sparse");
    run_ok(&[
        "synth", "--n", "80", "--eps", "0.01", "--seed", "6", "--out",
        dir.to_str().unwrap(),
    ]);
    let x = dir.join("X.csv");
    let out_dir = dir.join("fit");
    run_ok(&[
        "run", "--x", x.to_str().unwrap(), "--method", "lcdmf", "--ranks", "6,3",
        "--hcon", "nonneg,sparse:0.33", "--iters", "25", "--it-in", "5", "--seed", "2",
        "--out", out_dir.to_str().unwrap(),
    ]);
    let h2 = parse_matrix(&read(&out_dir.join("H2.csv")));
    // Average column Hoyer sparsity of the constrained factor is at or above
    // the target (within the projection tolerance).
    let cols = h2[0].len();
    let mut total = 0.0;
    for j in 0..cols {
        let col: Vec<f64> = h2.iter().map(|row| row[j]).collect();
        let l1: f64 = col.iter().map(|v| v.abs()).sum();
        let l2: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let n = col.len() as f64;
        total += (n.sqrt() - l1 / l2) / (n.sqrt() - 1.0);
    }
    let avg = total / cols as f64;
    assert!(avg >= 0.33 - 1e-3, "average sparsity {avg} below target");
}

#[test]
fn exit_codes_match_error_classes() {
    // 1: configuration/parse errors.
    let dir = scratch("exit-codes");
    let bad = dir.join("bad.csv");
    std::fs::write(&bad, "1,2\n3,oops\n").unwrap();
    let out = run(&["run", "--x", bad.to_str().unwrap(), "--method", "mmf", "--ranks", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains(":2:"),
        "parse error should name the line"
    );
    let out = run(&["run", "--nonsense", "flag"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["bench", "--variant", "bogus"]);
    assert_eq!(out.status.code(), Some(1));

    // 2: numerical failures.
    let out = run(&["gradcheck", "--trials", "1", "--inject-sign-flip"]);
    assert_eq!(out.status.code(), Some(2));

    // 3: I/O failures.
    let out = run(&["run", "--x", "does-not-exist.csv", "--method", "mmf", "--ranks", "2"]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(&["synth", "--eps", "0", "--out", "/proc/definitely/unwritable"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gradcheck_passes_and_prints_deviations() {
    let out = run_ok(&["gradcheck", "--trials", "3", "--with-minvol", "--seed", "4"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max relative deviation"));
    assert!(stdout.lines().filter(|l| l.contains("max_rel_dev")).count() >= 12);
}

#[test]
fn emitted_matrices_round_trip_exactly() {
    let dir = scratch("round-trip");
    run_ok(&[
        "synth", "--n", "25", "--eps", "0.3", "--seed", "11", "--out",
        dir.to_str().unwrap(),
    ]);
    // Writing a parsed matrix back must reproduce the file byte for byte,
    // which holds when printing uses 17 significant digits.
    let text = read(&dir.join("X.csv"));
    let parsed = parse_matrix(&text);
    let reprinted: String = parsed
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| format!("{v:.16e}"))
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect();
    assert_eq!(text, reprinted);
}
