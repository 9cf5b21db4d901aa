//! `synth`: generate the two-layer synthetic dataset with exact ground truth.

use std::time::{Instant, SystemTime};

use deepmf::{generate_dataset, SynthConfig};

use crate::cli_error::CliResult;
use crate::config::out_dir;
use crate::csv::write_matrix;
use crate::flags::Flags;
use crate::manifest::write_manifest;

const VALUE_KEYS: &[&str] = &["n", "alpha", "eps", "seed", "out"];

pub fn run(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(args, VALUE_KEYS, &[])?;
    let cfg = SynthConfig {
        n: flags.get_or("n", 1000)?,
        dirichlet_alpha: flags.get_or("alpha", 0.05)?,
        epsilon: flags.require("eps")?,
        seed: flags.get_or("seed", 0)?,
    };
    let dir = out_dir(&flags);
    std::fs::create_dir_all(&dir)
        .map_err(|e| crate::cli_error::CliError::Io(format!("creating {}: {e}", dir.display())))?;

    let start_time = SystemTime::now();
    let clock = Instant::now();
    let ds = generate_dataset(&cfg)?;
    let files = [
        ("X.csv", &ds.x),
        ("W1.csv", &ds.w1),
        ("W2.csv", &ds.w2),
        ("H2.csv", &ds.h2),
        ("H1.csv", &ds.h1),
    ];
    let mut outputs = Vec::new();
    for (name, matrix) in files {
        write_matrix(&dir.join(name), matrix)?;
        outputs.push(name.to_string());
    }
    write_manifest(
        &dir,
        "synth",
        serde_json::to_value(&cfg).expect("serializable"),
        None,
        outputs,
        start_time,
        clock.elapsed().as_secs_f64(),
    )?;
    println!(
        "synth: wrote {}x{} data and ground truth to {}",
        ds.x.rows(),
        ds.x.cols(),
        dir.display()
    );
    Ok(())
}
