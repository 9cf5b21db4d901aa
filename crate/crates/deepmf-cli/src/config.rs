//! Translation of CLI flags into solver configurations.

use deepmf::{
    BenchVariant, ConstraintSpec, FpgmConfig, InitMode, LossFamily, LossSpec, Method,
    SolverConfig,
};

use crate::cli_error::{CliError, CliResult};
use crate::flags::Flags;

pub fn parse_method(name: &str) -> CliResult<Method> {
    match name {
        "mmf" => Ok(Method::Mmf),
        "tridmf" => Ok(Method::TriDmf),
        "lcdmf" => Ok(Method::LcDmf),
        "dcdmf" => Ok(Method::DcDmf),
        "single" => Ok(Method::SingleNmf),
        other => Err(CliError::config(format!(
            "unknown method '{other}' (expected mmf|tridmf|lcdmf|dcdmf|single)"
        ))),
    }
}

pub fn parse_variant(name: &str) -> CliResult<BenchVariant> {
    match name {
        "minvol" => Ok(BenchVariant::MinVol),
        "sparse" => Ok(BenchVariant::Sparse),
        other => Err(CliError::config(format!(
            "unknown variant '{other}' (expected minvol|sparse)"
        ))),
    }
}

fn parse_constraint(token: &str) -> CliResult<ConstraintSpec> {
    if let Some(target) = token.strip_prefix("sparse:") {
        let target: f64 = target.parse().map_err(|_| {
            CliError::config(format!("cannot parse sparsity target in '{token}'"))
        })?;
        return ConstraintSpec::grouped_sparse(target).map_err(CliError::from);
    }
    match token {
        "none" => Ok(ConstraintSpec::None),
        "nonneg" => Ok(ConstraintSpec::Nonneg),
        "simplex" => Ok(ConstraintSpec::ColumnSimplex),
        other => Err(CliError::config(format!(
            "unknown constraint '{other}' (expected none|nonneg|simplex|sparse:T)"
        ))),
    }
}

fn parse_constraints(flags: &Flags, key: &str, layers: usize) -> CliResult<Option<Vec<ConstraintSpec>>> {
    let Some(tokens) = flags.string_list(key) else {
        return Ok(None);
    };
    if tokens.len() != layers {
        return Err(CliError::config(format!(
            "--{key} needs {layers} entries, got {}",
            tokens.len()
        )));
    }
    Ok(Some(
        tokens
            .iter()
            .map(|t| parse_constraint(t))
            .collect::<CliResult<_>>()?,
    ))
}

/// Builds a full solver configuration from `run`-style flags.
pub fn solver_config_from_flags(flags: &Flags) -> CliResult<SolverConfig> {
    let method = parse_method(&flags.require::<String>("method")?)?;
    let ranks: Vec<usize> = flags
        .list("ranks")?
        .ok_or_else(|| CliError::config("missing required flag --ranks"))?;
    let layers = ranks.len();
    let mut cfg = SolverConfig::new(method, ranks);

    let family = match flags.raw("loss") {
        None => cfg.loss.family,
        Some("lc") => LossFamily::LayerCentric,
        Some("dc") => LossFamily::DataCentric,
        Some(other) => {
            return Err(CliError::config(format!(
                "unknown loss '{other}' (expected lc|dc)"
            )))
        }
    };
    match (method, family) {
        (Method::LcDmf, LossFamily::DataCentric) | (Method::DcDmf, LossFamily::LayerCentric) => {
            return Err(CliError::config(
                "loss family conflicts with the chosen method",
            ))
        }
        _ => {}
    }

    // Explicit weights win over guesses; the layer-centric default is the
    // auto-scaled guess of 10 per layer, the data-centric default unit
    // weights.
    let explicit_lambda: Option<Vec<f64>> = flags.list("lambda")?;
    let explicit_mu: Option<Vec<f64>> = flags.list("mu")?;
    let lambda_tilde: Option<Vec<f64>> = flags.list("lambda-tilde")?;
    let weights = match (family, &explicit_lambda, &explicit_mu) {
        (LossFamily::LayerCentric, Some(l), _) => l.clone(),
        (LossFamily::DataCentric, _, Some(m)) => m.clone(),
        _ => vec![1.0; layers.saturating_sub(1)],
    };
    cfg.lambda_tilde = match (family, method, &explicit_lambda) {
        (LossFamily::LayerCentric, Method::LcDmf, None) => {
            Some(lambda_tilde.unwrap_or_else(|| vec![10.0; layers.saturating_sub(1)]))
        }
        (LossFamily::LayerCentric, _, None) => lambda_tilde,
        _ => None,
    };

    let kappa_tilde: Option<Vec<f64>> = flags.list("minvol")?;
    if let Some(kt) = &kappa_tilde {
        if kt.len() != layers {
            return Err(CliError::config(format!(
                "--minvol needs {layers} entries, got {}",
                kt.len()
            )));
        }
    }
    let delta = flags.get_or("delta", 0.1)?;
    cfg.kappa_tilde = kappa_tilde;
    cfg.loss = LossSpec::new(family, weights, vec![], delta).map_err(CliError::from)?;

    if let Some(w) = parse_constraints(flags, "wcon", layers)? {
        cfg.w_constraints = w;
    }
    if let Some(h) = parse_constraints(flags, "hcon", layers)? {
        cfg.h_constraints = h;
    }

    cfg.outer_iters = flags.get_or("iters", 500)?;
    cfg.init_improvement_iters = flags.get_or("it-in", 50.min(cfg.outer_iters))?;
    cfg.seed = flags.get_or("seed", 0)?;
    cfg.init_mode = match flags.raw("init") {
        None | Some("greedy") => InitMode::GreedyColumns,
        Some("random") => InitMode::Random,
        Some(other) => {
            return Err(CliError::config(format!(
                "unknown init mode '{other}' (expected greedy|random)"
            )))
        }
    };
    cfg.fpgm = FpgmConfig {
        max_inner_iters: flags.get_or("inner-iters", 10)?,
        alpha1: flags.get_or("alpha1", 0.5)?,
        ..FpgmConfig::default()
    };
    Ok(cfg)
}

/// Output directory: `--out`, the `DEEPMF_OUT` environment variable, or the
/// current directory.
pub fn out_dir(flags: &Flags) -> std::path::PathBuf {
    flags
        .raw("out")
        .map(Into::into)
        .or_else(|| std::env::var_os("DEEPMF_OUT").map(Into::into))
        .unwrap_or_else(|| std::path::PathBuf::from("."))
}
