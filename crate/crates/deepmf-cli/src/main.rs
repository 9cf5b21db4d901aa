//! Command-line front end for constrained deep matrix factorization:
//! synthetic dataset generation, solver runs with trace and factor output,
//! the recovery benchmark sweep, and gradient verification.
//!
//! Exit codes: 0 success, 1 configuration/parse error, 2 numerical failure,
//! 3 I/O error.

mod cli_error;
mod commands;
mod config;
mod csv;
mod flags;
mod manifest;

use cli_error::CliResult;

const USAGE: &str = "\
usage: deepmf <command> [flags]

commands:
  synth      generate the two-layer synthetic dataset with ground truth
             --eps <f64> [--n 1000] [--alpha 0.05] [--seed 0] [--out DIR]
  run        factorize a matrix and write report.json, trace.csv, factors
             --x X.csv --method mmf|tridmf|lcdmf|dcdmf|single --ranks R1,R2,..
             [--loss lc|dc] [--wcon C,..] [--hcon C,..] [--lambda L,..]
             [--lambda-tilde L,..] [--mu M,..] [--minvol K,..] [--delta 0.1]
             [--iters 500] [--it-in 50] [--inner-iters 10] [--alpha1 0.5]
             [--init greedy|random] [--seed 0] [--truth W1.csv,W2.csv]
             [--out DIR]
             constraints C: none | nonneg | simplex | sparse:T
  bench      synthetic recovery sweep; writes results.csv and summary.csv
             --variant minvol|sparse [--methods mmf,lcdmf,dcdmf,tridmf,single]
             [--trials 25] [--eps grid|E1,E2,..] [--n 1000] [--iters 500]
             [--it-in 50] [--inner-iters 10] [--seed 0] [--jobs N] [--out DIR]
  gradcheck  finite-difference gradient verification; exit 0 iff all pass
             [--trials 20] [--seed 0] [--with-minvol]

The default output directory is $DEEPMF_OUT, falling back to '.'.
";

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&args) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("deepmf: {err}");
            std::process::exit(err.exit_code());
        }
    }
}

fn dispatch(args: &[String]) -> CliResult<()> {
    let Some(command) = args.first() else {
        eprint!("{USAGE}");
        return Err(cli_error::CliError::config("no command given"));
    };
    let rest = &args[1..];
    match command.as_str() {
        "synth" => commands::synth::run(rest),
        "run" => commands::run::run(rest),
        "bench" => commands::bench::run(rest),
        "gradcheck" => commands::gradcheck::run(rest),
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            Ok(())
        }
        other => {
            eprint!("{USAGE}");
            Err(cli_error::CliError::config(format!("unknown command '{other}'")))
        }
    }
}
