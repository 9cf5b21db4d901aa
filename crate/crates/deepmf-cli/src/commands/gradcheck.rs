//! `gradcheck`: finite-difference verification of the analytic gradients.
//! Exits zero only when every check is within tolerance.

use deepmf::gradcheck::{run_gradcheck, GradCheckConfig};
use deepmf::LossFamily;

use crate::cli_error::{CliError, CliResult};
use crate::flags::Flags;

const VALUE_KEYS: &[&str] = &["trials", "seed"];
const SWITCH_KEYS: &[&str] = &["with-minvol", "inject-sign-flip"];

pub fn run(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(args, VALUE_KEYS, SWITCH_KEYS)?;
    let cfg = GradCheckConfig {
        trials: flags.get_or("trials", 20)?,
        seed: flags.get_or("seed", 0)?,
        with_minvol: flags.switch("with-minvol"),
        flip_sign: flags.switch("inject-sign-flip"),
        ..GradCheckConfig::default()
    };
    let report = run_gradcheck(&cfg)?;
    for cell in &report.cells {
        let family = match cell.family {
            LossFamily::LayerCentric => "layer-centric",
            LossFamily::DataCentric => "data-centric",
            LossFamily::L0 => "last-layer",
        };
        println!(
            "gradcheck: loss={family} factor={} layer={} minvol={} max_rel_dev={:.3e}",
            cell.side,
            cell.layer + 1,
            if cell.minvol { "yes" } else { "no" },
            cell.max_relative_deviation
        );
    }
    println!(
        "gradcheck: max relative deviation {:.3e} (tolerance {:.1e})",
        report.max_deviation(),
        report.tolerance
    );
    if let Some(cell) = report.first_failure() {
        return Err(CliError::Numerical(format!(
            "gradient check failed for ({:?}, {}, layer {}): {:.3e} >= {:.1e}",
            cell.family,
            cell.side,
            cell.layer + 1,
            cell.max_relative_deviation,
            report.tolerance
        )));
    }
    Ok(())
}
