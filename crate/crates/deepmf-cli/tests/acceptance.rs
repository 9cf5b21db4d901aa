//! Acceptance: rerunning any command with identical flags and seed produces
//! byte-identical CSV/JSON outputs (wall-clock data lives in the excluded
//! `timing.json` sidecar).

mod util;

use util::{assert_dirs_identical, run_ok, scratch};

#[test]
fn acceptance_cli_determinism() {
    let root = scratch("determinism");

    // synth twice.
    let (s1, s2) = (root.join("s1"), root.join("s2"));
    for dir in [&s1, &s2] {
        run_ok(&[
            "synth", "--n", "200", "--eps", "0.0631", "--seed", "42", "--out",
            dir.to_str().unwrap(),
        ]);
    }
    assert_dirs_identical(&s1, &s2);

    // run twice, grouped-sparse constraints to cover that path too.
    let x = s1.join("X.csv");
    let truth = format!("{},{}", s1.join("W1.csv").display(), s1.join("W2.csv").display());
    let (r1, r2) = (root.join("r1"), root.join("r2"));
    for dir in [&r1, &r2] {
        run_ok(&[
            "run", "--x", x.to_str().unwrap(), "--method", "lcdmf", "--ranks", "6,3",
            "--minvol", "1e-3,1e-2", "--wcon", "simplex,simplex", "--iters", "25",
            "--it-in", "5", "--seed", "9", "--truth", &truth, "--out",
            dir.to_str().unwrap(),
        ]);
    }
    assert_dirs_identical(&r1, &r2);

    // bench twice (parallel cells must still collect deterministically).
    let (b1, b2) = (root.join("b1"), root.join("b2"));
    for dir in [&b1, &b2] {
        run_ok(&[
            "bench", "--variant", "sparse", "--methods", "mmf,lcdmf,tridmf", "--trials",
            "2", "--eps", "0.01", "--n", "80", "--iters", "10", "--it-in", "4",
            "--seed", "6", "--jobs", "2", "--out", dir.to_str().unwrap(),
        ]);
    }
    assert_dirs_identical(&b1, &b2);

    // gradcheck twice: identical stdout.
    let g1 = run_ok(&["gradcheck", "--trials", "2", "--seed", "3", "--with-minvol"]);
    let g2 = run_ok(&["gradcheck", "--trials", "2", "--seed", "3", "--with-minvol"]);
    assert_eq!(g1.stdout, g2.stdout);

    println!("[PASS] cli-determinism: byte-identical outputs for synth, run, bench, gradcheck reruns");
}
