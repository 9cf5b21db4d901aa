//! Solver orchestration: the sequential per-layer scheme, the inconsistent
//! per-layer deep scheme, the consistent global-loss block coordinate descent
//! (layer-centric or data-centric), and single-layer factorization, plus
//! greedy column initialization, hyperparameter auto-scaling, and the
//! degenerate stack transform.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::relative_errors;
use crate::fpgm::{fpgm_solve, FpgmConfig};
use crate::numerics::{logdet_and_inverse, Matrix, RngStream};
use crate::objectives::{
    eval_l0, eval_loss_parts, volume_z, DataCentricHBlock, FactorStack,
    LeftLsqBlock, LossFamily, LossSpec, RightLsqBlock, SandwichedLsqBlock,
};
use crate::projections::ConstraintSpec;

/// Factorization method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Sequential per-layer factorization; later layers never influence
    /// earlier ones.
    #[serde(rename = "mmf")]
    Mmf,
    /// Cyclic per-layer updates whose subproblems minimize different unfolded
    /// objectives depending on the slot.
    #[serde(rename = "tridmf")]
    TriDmf,
    /// Consistent BCD on the layer-centric global loss.
    #[serde(rename = "lcdmf")]
    LcDmf,
    /// Consistent BCD on the data-centric global loss.
    #[serde(rename = "dcdmf")]
    DcDmf,
    /// Single-layer factorization (one-layer instance of the consistent BCD).
    #[serde(rename = "single")]
    SingleNmf,
}

/// Initialization strategy for every layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Greedy max-residual column selection with deflation, followed by
    /// nonnegative least squares for the coefficients.
    GreedyColumns,
    /// Uniform(0,1) entries projected onto the feasible sets.
    Random,
}

/// Full configuration of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub ranks: Vec<usize>,
    pub w_constraints: Vec<ConstraintSpec>,
    pub h_constraints: Vec<ConstraintSpec>,
    pub loss: LossSpec,
    /// Total outer-iteration budget shared by all methods.
    pub outer_iters: usize,
    /// Budget spent on sequential initialization sweeps by the deep methods.
    pub init_improvement_iters: usize,
    pub init_mode: InitMode,
    pub seed: u64,
    pub fpgm: FpgmConfig,
    /// When set, layer weights are rescaled after initialization so each
    /// term's initial magnitude is this multiple of the first term's.
    pub lambda_tilde: Option<Vec<f64>>,
    /// When set, per-layer volume coefficients are rescaled after
    /// initialization to match the layer's reconstruction error magnitude.
    pub kappa_tilde: Option<Vec<f64>>,
}

impl SolverConfig {
    pub fn new(method: Method, ranks: Vec<usize>) -> Self {
        let layers = ranks.len();
        let family = match method {
            Method::DcDmf | Method::TriDmf => LossFamily::DataCentric,
            _ => LossFamily::LayerCentric,
        };
        Self {
            method,
            ranks,
            w_constraints: vec![ConstraintSpec::Nonneg; layers],
            h_constraints: vec![ConstraintSpec::Nonneg; layers],
            loss: LossSpec::new(family, vec![1.0; layers.saturating_sub(1)], vec![], 0.1)
                .expect("valid"),
            outer_iters: 500,
            init_improvement_iters: 50,
            init_mode: InitMode::GreedyColumns,
            seed: 0,
            fpgm: FpgmConfig::default(),
            lambda_tilde: None,
            kappa_tilde: None,
        }
    }

    pub fn layer_count(&self) -> usize {
        self.ranks.len()
    }

    pub fn validate(&self, x: &Matrix) -> Result<()> {
        let layers = self.ranks.len();
        if layers == 0 {
            return Err(Error::usage("at least one layer rank is required"));
        }
        if self.ranks.contains(&0) {
            return Err(Error::usage("ranks must be positive"));
        }
        if self.method == Method::SingleNmf && layers != 1 {
            return Err(Error::usage("single-layer factorization takes exactly one rank"));
        }
        if self.w_constraints.len() != layers || self.h_constraints.len() != layers {
            return Err(Error::usage(format!(
                "need one W and one H constraint per layer ({} layers, got {} and {})",
                layers,
                self.w_constraints.len(),
                self.h_constraints.len()
            )));
        }
        if self.loss.weights().len() != layers - 1 {
            return Err(Error::usage(format!(
                "need {} layer weights, got {}",
                layers - 1,
                self.loss.weights().len()
            )));
        }
        if !self.loss.kappas().is_empty() && self.loss.kappas().len() != layers {
            return Err(Error::usage(format!(
                "need {} volume coefficients, got {}",
                layers,
                self.loss.kappas().len()
            )));
        }
        if let Some(lt) = &self.lambda_tilde {
            if lt.len() != layers - 1 {
                return Err(Error::usage(format!(
                    "need {} lambda guesses, got {}",
                    layers - 1,
                    lt.len()
                )));
            }
        }
        if let Some(kt) = &self.kappa_tilde {
            if kt.len() != layers {
                return Err(Error::usage(format!(
                    "need {} kappa guesses, got {}",
                    layers,
                    kt.len()
                )));
            }
        }
        if self.outer_iters < self.init_improvement_iters {
            return Err(Error::usage(format!(
                "outer iteration budget {} is below the initialization budget {}",
                self.outer_iters, self.init_improvement_iters
            )));
        }
        if self.init_mode == InitMode::GreedyColumns && self.ranks[0] > x.cols() {
            return Err(Error::usage(format!(
                "first-layer rank {} exceeds the data column count {}",
                self.ranks[0],
                x.cols()
            )));
        }
        self.fpgm.validate()
    }
}

/// Per-run output: final factors, per-iteration diagnostic traces, and the
/// effective hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub config: SolverConfig,
    pub factors: FactorStack,
    /// Last-layer unfolded residual per outer iteration (length
    /// `outer_iters + 1`, including the initial point).
    pub l0_trace: Vec<f64>,
    /// Relative layer-centric errors per outer iteration and layer.
    pub layer_centric_trace: Vec<Vec<f64>>,
    /// Relative data-centric errors per outer iteration and layer.
    pub data_centric_trace: Vec<Vec<f64>>,
    /// Penalized global loss of the configured family per outer iteration
    /// (diagnostic for the methods that do not minimize it).
    pub penalized_total: Vec<f64>,
    /// Reconstruction part of the penalized loss per outer iteration.
    pub reconstruction_part: Vec<f64>,
    /// Penalized global loss after every individual factor update of the
    /// consistent methods' global phase (empty for the other methods).
    pub per_update_penalized: Vec<f64>,
    /// Effective layer weights after auto-scaling.
    pub lambdas: Vec<f64>,
    /// Effective volume coefficients after auto-scaling.
    pub kappas: Vec<f64>,
    pub warnings: Vec<String>,
    pub seed: u64,
    #[serde(skip_serializing, default)]
    pub wall_seconds: f64,
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Greedy column subset selection: repeatedly picks the column with the
/// largest residual norm, where the residual is what nonnegative least
/// squares on the already-chosen columns cannot explain. Unlike orthogonal
/// deflation this keeps selecting informative columns past the linear rank
/// of the data, so an overcomplete first layer (rank above the row count)
/// still receives distinct extreme columns. Exhausted residuals fall back to
/// the lowest-index unchosen column, so `rank == cols` always yields a
/// permutation.
pub fn greedy_columns(x: &Matrix, rank: usize) -> Result<Vec<usize>> {
    Ok(greedy_columns_with_coefficients(x, rank, &FpgmConfig::default())?.0)
}

fn greedy_columns_with_coefficients(
    x: &Matrix,
    rank: usize,
    fpgm: &FpgmConfig,
) -> Result<(Vec<usize>, Matrix)> {
    if rank > x.cols() {
        return Err(Error::usage(format!(
            "rank {rank} exceeds the column count {}",
            x.cols()
        )));
    }
    let mut residual = x.clone();
    let mut chosen = Vec::with_capacity(rank);
    let mut taken = vec![false; x.cols()];
    let scale = x.frob_norm_sq();
    let mut coeffs = Matrix::zeros(1, x.cols());
    for t in 0..rank {
        let mut best = usize::MAX;
        let mut best_norm = -1.0;
        for j in 0..x.cols() {
            if taken[j] {
                continue;
            }
            let norm: f64 = (0..x.rows()).map(|i| residual.get(i, j).powi(2)).sum();
            if norm > best_norm {
                best_norm = norm;
                best = j;
            }
        }
        if best_norm <= 1e-24 * scale {
            // Residual exhausted: take the lowest-index leftover column.
            best = (0..x.cols()).find(|&j| !taken[j]).expect("rank <= cols");
        }
        taken[best] = true;
        chosen.push(best);
        // Refit the coefficients on the chosen set (warm-started with the
        // previous fit plus a zero row) and deflate.
        let w = x.select_columns(&chosen);
        let mut start = Matrix::zeros(t + 1, x.cols());
        for i in 0..t {
            for j in 0..x.cols() {
                start.set(i, j, coeffs.get(i, j));
            }
        }
        coeffs = nnls_coefficients_from(x, &w, &start, fpgm)?;
        residual = x.sub(&w.matmul(&coeffs)?)?;
    }
    Ok((chosen, coeffs))
}

/// Greedy initialization of one layer: selected data columns as the basis,
/// nonnegative least-squares coefficients fitted by the inner solver.
pub fn init_greedy(x: &Matrix, rank: usize, fpgm: &FpgmConfig) -> Result<(Matrix, Matrix)> {
    let (chosen, h0) = greedy_columns_with_coefficients(x, rank, fpgm)?;
    Ok((x.select_columns(&chosen), h0))
}

fn nnls_coefficients_from(
    x: &Matrix,
    w: &Matrix,
    start: &Matrix,
    fpgm: &FpgmConfig,
) -> Result<Matrix> {
    let block = LeftLsqBlock {
        weight: 1.0,
        left: w.clone(),
        target: x.clone(),
    };
    let cfg = FpgmConfig {
        max_inner_iters: 250,
        ..fpgm.clone()
    };
    fpgm_solve(
        start,
        |h| block.objective(h),
        |h| block.gradient(h),
        crate::projections::project_nonneg,
        Some(block.lipschitz()),
        &cfg,
    )
}

fn init_layer(
    target: &Matrix,
    rank: usize,
    wcon: &ConstraintSpec,
    hcon: &ConstraintSpec,
    mode: InitMode,
    rng: &mut RngStream,
    fpgm: &FpgmConfig,
) -> Result<(Matrix, Matrix)> {
    match mode {
        // An increasing rank ladder leaves too few columns to select from;
        // fall back to a random draw for that layer.
        InitMode::GreedyColumns if rank <= target.cols() => {
            let (w0, h0) = init_greedy(target, rank, fpgm)?;
            Ok((wcon.project(&w0), hcon.project(&h0)))
        }
        _ => {
            let w = Matrix::from_raw(
                target.rows(),
                rank,
                (0..target.rows() * rank).map(|_| rng.uniform()).collect(),
            );
            let h = Matrix::from_raw(
                rank,
                target.cols(),
                (0..rank * target.cols()).map(|_| rng.uniform()).collect(),
            );
            Ok((wcon.project(&w), hcon.project(&h)))
        }
    }
}

// ---------------------------------------------------------------------------
// Hyperparameter auto-scaling
// ---------------------------------------------------------------------------

/// Scales layer-weight guesses by the ratio of the first layer's initial
/// error to each deeper layer's, so every term starts at roughly
/// `lambda_tilde` times the first term. Layers with a vanishing initial
/// error fall back to the raw guess with a warning.
pub fn autoscale_lambda(initial_errors: &[f64], lambda_tilde: &[f64]) -> (Vec<f64>, Vec<String>) {
    let mut lambdas = Vec::with_capacity(lambda_tilde.len());
    let mut warnings = Vec::new();
    for (idx, &tilde) in lambda_tilde.iter().enumerate() {
        let err_first = initial_errors.first().copied().unwrap_or(0.0);
        let err_next = initial_errors.get(idx + 1).copied().unwrap_or(0.0);
        if err_first <= 0.0 || err_next <= 0.0 {
            warnings.push(format!(
                "layer {} weight kept at its guess {tilde}: zero initial error",
                idx + 1
            ));
            lambdas.push(tilde);
        } else {
            lambdas.push(tilde * err_first / err_next);
        }
    }
    (lambdas, warnings)
}

/// Constant unit weights for the data-centric family, whose terms share one
/// order of magnitude by construction.
pub fn constant_mu(layer_count: usize) -> Vec<f64> {
    vec![1.0; layer_count.saturating_sub(1)]
}

/// Scales volume-coefficient guesses so each layer's volume term matches the
/// magnitude of its reconstruction error at initialization.
pub fn autoscale_kappa(
    initial_errors: &[f64],
    initial_w: &[&Matrix],
    kappa_tilde: &[f64],
    delta: f64,
) -> Result<(Vec<f64>, Vec<String>)> {
    let mut kappas = Vec::with_capacity(kappa_tilde.len());
    let mut warnings = Vec::new();
    for (idx, &tilde) in kappa_tilde.iter().enumerate() {
        if tilde == 0.0 {
            kappas.push(0.0);
            continue;
        }
        let (logdet, _) = logdet_and_inverse(&initial_w[idx].gram(), delta)?;
        if logdet.abs() < 1e-12 {
            warnings.push(format!(
                "layer {idx} volume coefficient kept at its guess {tilde}: near-zero log-determinant"
            ));
            kappas.push(tilde);
        } else {
            kappas.push(tilde * initial_errors[idx] / logdet.abs());
        }
    }
    Ok((kappas, warnings))
}

// ---------------------------------------------------------------------------
// Degenerate transform
// ---------------------------------------------------------------------------

/// Rewrites a stack with a non-increasing rank ladder into the degenerate
/// form with identity-padded inner coefficient blocks, the full coefficient
/// chain stored in the first layer, and the last basis kept: the unfolded
/// product (and hence the last-layer loss) is unchanged, while the first
/// basis collapses to rank at most the last rank.
pub fn degenerate_transform(stack: &FactorStack) -> Result<FactorStack> {
    if !stack.rank_ladder_nonincreasing() {
        return Err(Error::domain(
            "degenerate transform requires a non-increasing rank ladder",
        ));
    }
    let layers = stack.layer_count();
    let ranks = stack.ranks();
    let r_last = ranks[layers - 1];
    let m = stack.feature_count();
    let n = stack.sample_count();

    // Full coefficient chain, padded with zero rows up to the first rank.
    let chain = stack.h_chain(layers - 1);
    let mut h_first = Matrix::zeros(ranks[0], n);
    for i in 0..r_last {
        for j in 0..n {
            h_first.set(i, j, chain.get(i, j));
        }
    }

    let mut pairs = Vec::with_capacity(layers);
    for li in 0..layers {
        let w = if li == layers - 1 {
            stack.w(layers - 1).clone()
        } else {
            // [W_last | 0]
            let mut w = Matrix::zeros(m, ranks[li]);
            for i in 0..m {
                for j in 0..r_last {
                    w.set(i, j, stack.w(layers - 1).get(i, j));
                }
            }
            w
        };
        let h = if li == 0 {
            h_first.clone()
        } else {
            // Identity block padded with zeros.
            let mut h = Matrix::zeros(ranks[li], ranks[li - 1]);
            for i in 0..r_last {
                h.set(i, i, 1.0);
            }
            h
        };
        pairs.push((w, h));
    }
    FactorStack::new(pairs)
}

// ---------------------------------------------------------------------------
// Trace recording
// ---------------------------------------------------------------------------

struct Tracer {
    slots: usize,
    layers: usize,
    l0: Vec<f64>,
    lc: Vec<Vec<f64>>,
    dc: Vec<Vec<f64>>,
    pen: Vec<f64>,
    rec: Vec<f64>,
}

impl Tracer {
    fn new(slots: usize, layers: usize) -> Self {
        Self {
            slots,
            layers,
            l0: vec![f64::NAN; slots],
            lc: vec![vec![f64::NAN; slots]; layers],
            dc: vec![vec![f64::NAN; slots]; layers],
            pen: vec![f64::NAN; slots],
            rec: vec![f64::NAN; slots],
        }
    }

    /// Records whatever is computable for the first `available` layers.
    fn record_partial(
        &mut self,
        slot: usize,
        x: &Matrix,
        layers: &[(Matrix, Matrix)],
        norms: &[f64],
        x_norm: f64,
    ) -> Result<()> {
        debug_assert!(slot < self.slots);
        let mut chain: Option<Matrix> = None;
        for (li, (w, h)) in layers.iter().enumerate() {
            chain = Some(match chain {
                None => h.clone(),
                Some(prev) => h.matmul(&prev)?,
            });
            let target = if li == 0 { x } else { &layers[li - 1].0 };
            let approx = w.matmul(h)?;
            self.lc[li][slot] = target.frob_err_sq(&approx)? / norms[li];
            let unfolded = w.matmul(chain.as_ref().expect("set above"))?;
            let dc = x.frob_err_sq(&unfolded)? / x_norm;
            self.dc[li][slot] = dc;
            if li == self.layers - 1 {
                self.l0[slot] = dc * x_norm;
            }
        }
        Ok(())
    }

    /// Records every series, including the penalized totals.
    fn record_full(
        &mut self,
        slot: usize,
        x: &Matrix,
        stack: &FactorStack,
        spec: &LossSpec,
        norms: &[f64],
    ) -> Result<()> {
        let errs = relative_errors(x, stack, norms)?;
        for (li, pair) in errs.iter().enumerate() {
            self.lc[li][slot] = pair.layer_centric;
            self.dc[li][slot] = pair.data_centric;
        }
        self.l0[slot] = eval_l0(x, stack)?;
        let value = eval_loss_parts(x, stack, spec)?;
        self.pen[slot] = value.total();
        self.rec[slot] = value.reconstruction;
        Ok(())
    }

    /// Backfills the slots before each series' first recorded value, so all
    /// traces cover the full iteration axis.
    fn finalize(mut self) -> FinalTraces {
        fn backfill(series: &mut [f64]) {
            let first = series.iter().copied().find(|v| !v.is_nan());
            let Some(first) = first else { return };
            let mut last = first;
            for v in series.iter_mut() {
                if v.is_nan() {
                    *v = last;
                } else {
                    last = *v;
                }
            }
        }
        backfill(&mut self.l0);
        backfill(&mut self.pen);
        backfill(&mut self.rec);
        for series in self.lc.iter_mut().chain(self.dc.iter_mut()) {
            backfill(series);
        }
        let lc = transpose_trace(&self.lc, self.slots);
        let dc = transpose_trace(&self.dc, self.slots);
        (self.l0, lc, dc, self.pen, self.rec)
    }
}

/// `(l0, layer_centric, data_centric, penalized, reconstruction)` series.
type FinalTraces = (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>);

fn transpose_trace(per_layer: &[Vec<f64>], slots: usize) -> Vec<Vec<f64>> {
    (0..slots)
        .map(|s| per_layer.iter().map(|series| series[s]).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// Shared update steps
// ---------------------------------------------------------------------------

fn update_h_layerwise(
    target: &Matrix,
    w: &Matrix,
    h0: &Matrix,
    weight: f64,
    hcon: &ConstraintSpec,
    fpgm: &FpgmConfig,
) -> Result<Matrix> {
    let block = LeftLsqBlock {
        weight,
        left: w.clone(),
        target: target.clone(),
    };
    fpgm_solve(
        h0,
        |h| block.objective(h),
        |h| block.gradient(h),
        |h| hcon.project(h),
        Some(block.lipschitz()),
        fpgm,
    )
}

#[allow(clippy::too_many_arguments)]
fn update_w_layerwise(
    target: &Matrix,
    h: &Matrix,
    w0: &Matrix,
    weight: f64,
    prox: Option<(f64, Matrix)>,
    volume: Option<(f64, Matrix)>,
    wcon: &ConstraintSpec,
    fpgm: &FpgmConfig,
) -> Result<Matrix> {
    let block = RightLsqBlock {
        weight,
        right: h.clone(),
        target: target.clone(),
        prox,
        volume,
    };
    fpgm_solve(
        w0,
        |w| block.objective(w),
        |w| block.gradient(w),
        |w| wcon.project(w),
        Some(block.lipschitz()),
        fpgm,
    )
}

/// Frozen volume term for a basis update: `(weight * kappa, Z)`.
fn volume_term(
    stack: &FactorStack,
    spec: &LossSpec,
    layer: usize,
    weight: f64,
) -> Result<Option<(f64, Matrix)>> {
    let kappa = spec.kappa(layer);
    if kappa <= 0.0 {
        return Ok(None);
    }
    Ok(Some((weight * kappa, volume_z(stack, layer, spec.delta())?)))
}

/// Even split of an iteration budget across layers; the remainder goes to
/// the earliest layers.
fn split_budget(total: usize, layers: usize) -> Vec<usize> {
    let base = total / layers;
    let extra = total % layers;
    (0..layers).map(|l| base + usize::from(l < extra)).collect()
}

/// `(factor pairs, layer-centric denominators, raw per-layer init errors)`.
type SequentialPassOutput = (Vec<(Matrix, Matrix)>, Vec<f64>, Vec<RawInitErrors>);

/// Per-layer errors measured at the moment a layer is initialized, before
/// any of its improvement iterations; these fix the hyperparameter scales.
#[derive(Debug, Clone, Copy)]
struct RawInitErrors {
    layer_wise: f64,
    data_wise: f64,
}

/// Sequential per-layer pass shared by the sequential method itself and by
/// the deep methods' initialization. Per-layer BCD runs with the per-layer
/// loss; when volume auto-scaling is requested, each layer's coefficient is
/// fixed from its raw initialization errors and the penalty is active from
/// the first improvement iteration on — the same structure for every method.
struct SequentialPass<'a> {
    x: &'a Matrix,
    cfg: &'a SolverConfig,
    budget: Vec<usize>,
    with_volume: bool,
    /// Error family used to scale the volume coefficients.
    kappa_errors: LossFamily,
}

impl<'a> SequentialPass<'a> {
    fn run(
        &self,
        rng: &mut RngStream,
        tracer: &mut Tracer,
        global_iter: &mut usize,
        kappas: &mut [f64],
        warnings: &mut Vec<String>,
    ) -> Result<SequentialPassOutput> {
        let layer_count = self.cfg.layer_count();
        let mut layers: Vec<(Matrix, Matrix)> = Vec::with_capacity(layer_count);
        let mut norms: Vec<f64> = Vec::with_capacity(layer_count);
        let mut raw_errors: Vec<RawInitErrors> = Vec::with_capacity(layer_count);
        let x_norm = self.x.frob_norm_sq();
        for li in 0..layer_count {
            let target = if li == 0 {
                self.x.clone()
            } else {
                layers[li - 1].0.clone()
            };
            norms.push(target.frob_norm_sq());
            let (w0, h0) = init_layer(
                &target,
                self.cfg.ranks[li],
                &self.cfg.w_constraints[li],
                &self.cfg.h_constraints[li],
                self.cfg.init_mode,
                rng,
                &self.cfg.fpgm,
            )?;
            layers.push((w0, h0));
            let raw = {
                let (w0, h0) = &layers[li];
                let layer_wise = 0.5 * target.frob_err_sq(&w0.matmul(h0)?)?;
                let mut chain = layers[0].1.clone();
                for (_, h) in layers.iter().skip(1) {
                    chain = h.matmul(&chain)?;
                }
                let data_wise = 0.5 * self.x.frob_err_sq(&w0.matmul(&chain)?)?;
                RawInitErrors {
                    layer_wise,
                    data_wise,
                }
            };
            raw_errors.push(raw);
            if self.with_volume {
                if let Some(kt) = &self.cfg.kappa_tilde {
                    // Per-layer scaling at the moment the layer appears.
                    let err = match self.kappa_errors {
                        LossFamily::DataCentric => raw.data_wise,
                        _ => raw.layer_wise,
                    };
                    let (scaled, mut warns) = autoscale_kappa(
                        &[err],
                        &[&layers[li].0],
                        &kt[li..=li],
                        self.cfg.loss.delta(),
                    )?;
                    kappas[li] = scaled[0];
                    warnings.append(&mut warns);
                }
            }
            tracer.record_partial(*global_iter, self.x, &layers, &norms, x_norm)?;
            for _ in 0..self.budget[li] {
                let (w, h) = layers[li].clone();
                let new_h = update_h_layerwise(
                    &target,
                    &w,
                    &h,
                    1.0,
                    &self.cfg.h_constraints[li],
                    &self.cfg.fpgm,
                )?;
                let volume = if self.with_volume && kappas[li] > 0.0 {
                    let (_, z) = logdet_and_inverse(&w.gram(), self.cfg.loss.delta())?;
                    Some((kappas[li], z))
                } else {
                    None
                };
                let new_w = update_w_layerwise(
                    &target,
                    &new_h,
                    &w,
                    1.0,
                    None,
                    volume,
                    &self.cfg.w_constraints[li],
                    &self.cfg.fpgm,
                )?;
                layers[li] = (new_w, new_h);
                *global_iter += 1;
                tracer.record_partial(*global_iter, self.x, &layers, &norms, x_norm)?;
            }
        }
        Ok((layers, norms, raw_errors))
    }
}

// ---------------------------------------------------------------------------
// Public solver entry points
// ---------------------------------------------------------------------------

/// Constraint/regularization variant of the synthetic benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchVariant {
    /// Column-stochastic bases with volume penalties on every layer.
    MinVol,
    /// Grouped sparsity (target 1/3) on both second-layer factors.
    Sparse,
}

/// Benchmark configuration for one method on the two-layer synthetic setup:
/// ranks (6, 3), weight guess 10 for the layer-centric family, unit weights
/// for the data-centric one, and for the volume variant the noise-dependent
/// coefficient guesses (1e-3, 1e-2) below noise level 0.1 and (1e-2, 1e-1)
/// above, with delta = 0.1.
pub fn benchmark_config(method: Method, variant: BenchVariant, epsilon: f64) -> SolverConfig {
    let mut cfg = SolverConfig::new(method, vec![6, 3]);
    match variant {
        BenchVariant::MinVol => {
            cfg.w_constraints = vec![ConstraintSpec::ColumnSimplex; 2];
            cfg.h_constraints = vec![ConstraintSpec::Nonneg; 2];
            cfg.kappa_tilde = if epsilon < 0.1 {
                Some(vec![1e-3, 1e-2])
            } else {
                Some(vec![1e-2, 1e-1])
            };
        }
        BenchVariant::Sparse => {
            let sparse = ConstraintSpec::grouped_sparse(1.0 / 3.0).expect("valid target");
            cfg.w_constraints = vec![ConstraintSpec::Nonneg, sparse];
            cfg.h_constraints = vec![ConstraintSpec::Nonneg, sparse];
        }
    }
    if matches!(method, Method::LcDmf | Method::Mmf | Method::SingleNmf) {
        cfg.lambda_tilde = Some(vec![10.0]);
    }
    cfg
}

/// Dispatches on `cfg.method`.
pub fn solve(x: &Matrix, cfg: &SolverConfig) -> Result<SolverReport> {
    match cfg.method {
        Method::Mmf => mmf_solve(x, cfg),
        Method::TriDmf => tri_dmf_solve(x, cfg),
        Method::LcDmf | Method::DcDmf | Method::SingleNmf => deep_mf_solve(x, cfg),
    }
}

/// Sequential per-layer factorization: each layer is fully factorized before
/// the next one starts, with the total budget split evenly across layers.
pub fn mmf_solve(x: &Matrix, cfg: &SolverConfig) -> Result<SolverReport> {
    if cfg.method != Method::Mmf {
        return Err(Error::usage("mmf_solve requires the sequential method"));
    }
    cfg.validate(x)?;
    let start = Instant::now();
    let mut rng = RngStream::new(cfg.seed);
    let layer_count = cfg.layer_count();
    let mut tracer = Tracer::new(cfg.outer_iters + 1, layer_count);
    let mut global_iter = 0usize;
    let mut kappas = vec![0.0; layer_count];
    if cfg.kappa_tilde.is_none() {
        kappas.clone_from_slice(&padded_kappas(&cfg.loss, layer_count));
    }
    let mut warnings = Vec::new();
    let pass = SequentialPass {
        x,
        cfg,
        budget: split_budget(cfg.outer_iters, layer_count),
        with_volume: cfg.kappa_tilde.is_some() || cfg.loss.has_minvol(),
        kappa_errors: LossFamily::LayerCentric,
    };
    let (layers, norms, _) =
        pass.run(&mut rng, &mut tracer, &mut global_iter, &mut kappas, &mut warnings)?;
    let stack = FactorStack::new(layers)?;
    if !stack.rank_ladder_nonincreasing() {
        warnings.push("rank ladder is not non-increasing".to_string());
    }
    // Penalized totals are diagnostic here; evaluate them on the final state
    // so the family loss appears on the shared axis.
    let mut spec = cfg.loss.clone();
    spec.set_kappas(kappas.clone())?;
    let final_slot = cfg.outer_iters;
    tracer.record_full(final_slot, x, &stack, &spec, &norms)?;
    finish_report(cfg, stack, tracer, Vec::new(), spec, warnings, start)
}

fn padded_kappas(spec: &LossSpec, layers: usize) -> Vec<f64> {
    let mut k = spec.kappas().to_vec();
    k.resize(layers, 0.0);
    k
}

/// Consistent BCD on the configured global loss family (layer- or
/// data-centric): sequential initialization sweeps, hyperparameter
/// auto-scaling, then cyclic per-layer coefficient/basis updates that each
/// cannot increase the penalized global loss.
pub fn deep_mf_solve(x: &Matrix, cfg: &SolverConfig) -> Result<SolverReport> {
    let family = match cfg.method {
        Method::LcDmf => LossFamily::LayerCentric,
        Method::DcDmf => LossFamily::DataCentric,
        Method::SingleNmf => cfg.loss.family,
        _ => {
            return Err(Error::usage(
                "deep_mf_solve requires a consistent-loss method",
            ))
        }
    };
    if cfg.loss.family != family {
        return Err(Error::usage(format!(
            "loss family {:?} does not match method {:?}",
            cfg.loss.family, cfg.method
        )));
    }
    if family == LossFamily::L0 {
        return Err(Error::usage(
            "the last-layer loss cannot drive the consistent scheme; pick a \
             layer- or data-centric family",
        ));
    }
    cfg.validate(x)?;
    // For a single layer the two families are the same function; route both
    // through the cheaper layer-wise blocks so they take identical steps.
    let update_family = if cfg.layer_count() == 1 {
        LossFamily::LayerCentric
    } else {
        family
    };
    let start = Instant::now();
    let mut rng = RngStream::new(cfg.seed);
    let layer_count = cfg.layer_count();
    let mut tracer = Tracer::new(cfg.outer_iters + 1, layer_count);
    let mut global_iter = 0usize;
    let mut warnings = Vec::new();
    let mut kappas = padded_kappas(&cfg.loss, layer_count);

    // Sequential initialization; the volume penalties enter in the global
    // phase, scaled against the errors of the state it starts from.
    let pass = SequentialPass {
        x,
        cfg,
        budget: split_budget(cfg.init_improvement_iters, layer_count),
        with_volume: false,
        kappa_errors: family,
    };
    let (layers, norms, _) =
        pass.run(&mut rng, &mut tracer, &mut global_iter, &mut kappas, &mut warnings)?;
    let mut stack = FactorStack::new(layers)?;
    if !stack.rank_ladder_nonincreasing() {
        warnings.push("rank ladder is not non-increasing".to_string());
    }

    // Hyperparameters from the initialized stack.
    let mut spec = cfg.loss.clone();
    let init_errors = family_errors(x, &stack, family)?;
    if let Some(lt) = &cfg.lambda_tilde {
        match family {
            LossFamily::LayerCentric => {
                let (lambdas, mut warns) = autoscale_lambda(&init_errors, lt);
                warnings.append(&mut warns);
                spec.set_weights(lambdas)?;
            }
            _ => {
                spec.set_weights(constant_mu(layer_count))?;
            }
        }
    }
    if let Some(kt) = &cfg.kappa_tilde {
        let ws: Vec<&Matrix> = (0..layer_count).map(|li| stack.w(li)).collect();
        let (scaled, mut warns) = autoscale_kappa(&init_errors, &ws, kt, spec.delta())?;
        warnings.append(&mut warns);
        kappas = scaled;
    }
    spec.set_kappas(kappas.clone())?;

    // Global sweeps.
    let mut per_update = Vec::new();
    per_update.push(eval_loss_parts(x, &stack, &spec)?.total());
    tracer.record_full(global_iter, x, &stack, &spec, &norms)?;
    let global_sweeps = cfg.outer_iters - cfg.init_improvement_iters;
    for _ in 0..global_sweeps {
        for li in 0..layer_count {
            let weight = spec.weight_before(li);
            // Coefficient update.
            let new_h = match update_family {
                LossFamily::LayerCentric => {
                    let target = if li == 0 { x } else { stack.w(li - 1) };
                    update_h_layerwise(
                        target,
                        stack.w(li),
                        stack.h(li),
                        weight,
                        &cfg.h_constraints[li],
                        &cfg.fpgm,
                    )?
                }
                LossFamily::DataCentric => {
                    let block = DataCentricHBlock::build(x, &stack, &spec, li)?;
                    fpgm_solve(
                        stack.h(li),
                        |h| block.objective(h),
                        |h| block.gradient(h),
                        |h| cfg.h_constraints[li].project(h),
                        None,
                        &cfg.fpgm,
                    )?
                }
                LossFamily::L0 => unreachable!("validated"),
            };
            stack.set_h(li, new_h);
            per_update.push(eval_loss_parts(x, &stack, &spec)?.total());

            // Basis update with the volume term frozen at the current point.
            let volume = volume_term(&stack, &spec, li, weight)?;
            let new_w = match update_family {
                LossFamily::LayerCentric => {
                    let target = if li == 0 { x } else { stack.w(li - 1) };
                    let prox = if li + 1 < layer_count {
                        let anchor = stack.w(li + 1).matmul(stack.h(li + 1))?;
                        Some((spec.weight_before(li + 1), anchor))
                    } else {
                        None
                    };
                    update_w_layerwise(
                        target,
                        stack.h(li),
                        stack.w(li),
                        weight,
                        prox,
                        volume,
                        &cfg.w_constraints[li],
                        &cfg.fpgm,
                    )?
                }
                LossFamily::DataCentric => update_w_layerwise(
                    x,
                    &stack.h_chain(li),
                    stack.w(li),
                    weight,
                    None,
                    volume,
                    &cfg.w_constraints[li],
                    &cfg.fpgm,
                )?,
                LossFamily::L0 => unreachable!("validated"),
            };
            stack.set_w(li, new_w);
            per_update.push(eval_loss_parts(x, &stack, &spec)?.total());
        }
        global_iter += 1;
        tracer.record_full(global_iter, x, &stack, &spec, &norms)?;
    }
    finish_report(cfg, stack, tracer, per_update, spec, warnings, start)
}

/// Per-layer initial errors under the chosen family: layer-wise residuals
/// for the layer-centric loss, data residuals of the unfolded approximations
/// for the data-centric one.
fn family_errors(x: &Matrix, stack: &FactorStack, family: LossFamily) -> Result<Vec<f64>> {
    let mut errors = Vec::with_capacity(stack.layer_count());
    for li in 0..stack.layer_count() {
        let err = match family {
            LossFamily::DataCentric => 0.5 * x.frob_err_sq(&stack.unfolded(li))?,
            _ => {
                let target = if li == 0 { x } else { stack.w(li - 1) };
                0.5 * target.frob_err_sq(&stack.w(li).matmul(stack.h(li))?)?
            }
        };
        errors.push(err);
    }
    Ok(errors)
}

/// Which matrices one subproblem of the inconsistent per-layer scheme
/// receives; passed to observers for instrumentation.
pub enum TriSubproblem<'a> {
    /// Coefficient update minimizing `||X - left * H * right||^2`
    /// (`right = None` means the identity).
    CoefficientUpdate {
        layer: usize,
        left: &'a Matrix,
        right: Option<&'a Matrix>,
    },
    /// Basis update minimizing `||X - W * right||^2`.
    BasisUpdate { layer: usize, right: &'a Matrix },
}

/// Inconsistent per-layer scheme: cyclic updates where each subproblem
/// minimizes the unfolded residual of its own depth, with fresh factor
/// versions for the layers before the slot and previous-sweep versions for
/// the layers after it.
pub fn tri_dmf_solve(x: &Matrix, cfg: &SolverConfig) -> Result<SolverReport> {
    tri_dmf_solve_observed(x, cfg, |_, _| {})
}

/// As [`tri_dmf_solve`], reporting every subproblem's matrices to `observer`
/// together with the stack state at the moment of the update.
pub fn tri_dmf_solve_observed(
    x: &Matrix,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&TriSubproblem<'_>, &FactorStack),
) -> Result<SolverReport> {
    if cfg.method != Method::TriDmf {
        return Err(Error::usage("tri_dmf_solve requires the per-layer deep method"));
    }
    cfg.validate(x)?;
    let start = Instant::now();
    let mut rng = RngStream::new(cfg.seed);
    let layer_count = cfg.layer_count();
    let mut tracer = Tracer::new(cfg.outer_iters + 1, layer_count);
    let mut global_iter = 0usize;
    let mut warnings = Vec::new();
    let mut kappas = padded_kappas(&cfg.loss, layer_count);

    // The initialization is the sequential scheme with the volume penalty
    // included; since every subproblem of this method minimizes a data-space
    // residual, the coefficients balance against the data-centric errors.
    // Having no global loss of its own, the method keeps them for the main
    // loop.
    let pass = SequentialPass {
        x,
        cfg,
        budget: split_budget(cfg.init_improvement_iters, layer_count),
        with_volume: cfg.kappa_tilde.is_some() || cfg.loss.has_minvol(),
        kappa_errors: LossFamily::DataCentric,
    };
    let (layers, norms, _) =
        pass.run(&mut rng, &mut tracer, &mut global_iter, &mut kappas, &mut warnings)?;
    let mut stack = FactorStack::new(layers)?;
    if !stack.rank_ladder_nonincreasing() {
        warnings.push("rank ladder is not non-increasing".to_string());
    }

    let mut spec = cfg.loss.clone();
    spec.set_kappas(kappas.clone())?;

    tracer.record_full(global_iter, x, &stack, &spec, &norms)?;
    let global_sweeps = cfg.outer_iters - cfg.init_improvement_iters;
    for _ in 0..global_sweeps {
        // Both chains are built from the previous sweep's factor versions;
        // only the slot's own freshly updated coefficient enters its basis
        // update. This is what makes the scheme inconsistent in practice.
        let sweep_start = stack.clone();
        for li in 0..layer_count {
            // Coefficient update: the basis is the next layer's unfolded
            // product, the right chain the earlier layers' coefficients.
            let left = if li == layer_count - 1 {
                sweep_start.w(li).clone()
            } else {
                sweep_start.w(li + 1).matmul(sweep_start.h(li + 1))?
            };
            let right = if li == 0 {
                None
            } else {
                Some(sweep_start.h_chain(li - 1))
            };
            observer(
                &TriSubproblem::CoefficientUpdate {
                    layer: li,
                    left: &left,
                    right: right.as_ref(),
                },
                &stack,
            );
            let block = SandwichedLsqBlock {
                a: left,
                b: right.clone(),
                x: x.clone(),
            };
            let new_h = fpgm_solve(
                stack.h(li),
                |h| block.objective(h),
                |h| block.gradient(h),
                |h| cfg.h_constraints[li].project(h),
                Some(block.lipschitz()),
                &cfg.fpgm,
            )?;
            stack.set_h(li, new_h);

            // Basis update on this depth's unfolded residual, with the fresh
            // coefficient spliced into the stale chain.
            let chain = match &right {
                Some(b) => stack.h(li).matmul(b)?,
                None => stack.h(li).clone(),
            };
            observer(
                &TriSubproblem::BasisUpdate {
                    layer: li,
                    right: &chain,
                },
                &stack,
            );
            let volume = if kappas[li] > 0.0 {
                let (_, z) = logdet_and_inverse(&stack.w(li).gram(), spec.delta())?;
                Some((kappas[li], z))
            } else {
                None
            };
            let new_w = update_w_layerwise(
                x,
                &chain,
                stack.w(li),
                1.0,
                None,
                volume,
                &cfg.w_constraints[li],
                &cfg.fpgm,
            )?;
            stack.set_w(li, new_w);
        }
        global_iter += 1;
        tracer.record_full(global_iter, x, &stack, &spec, &norms)?;
    }
    finish_report(cfg, stack, tracer, Vec::new(), spec, warnings, start)
}

/// Single-layer factorization of rank `rank`: a one-layer instance of the
/// consistent scheme.
pub fn single_nmf_solve(x: &Matrix, rank: usize, cfg: &SolverConfig) -> Result<SolverReport> {
    let mut single = cfg.clone();
    single.method = Method::SingleNmf;
    single.ranks = vec![rank];
    single.w_constraints = vec![cfg.w_constraints.first().copied().unwrap_or(ConstraintSpec::Nonneg)];
    single.h_constraints = vec![cfg.h_constraints.first().copied().unwrap_or(ConstraintSpec::Nonneg)];
    single.loss = LossSpec::new(
        cfg.loss.family,
        vec![],
        if cfg.loss.kappas().is_empty() { vec![] } else { vec![cfg.loss.kappas()[0]] },
        cfg.loss.delta(),
    )?;
    single.lambda_tilde = None;
    single.kappa_tilde = cfg.kappa_tilde.as_ref().map(|kt| vec![kt[0]]);
    deep_mf_solve(x, &single)
}

fn finish_report(
    cfg: &SolverConfig,
    stack: FactorStack,
    tracer: Tracer,
    per_update: Vec<f64>,
    spec: LossSpec,
    warnings: Vec<String>,
    start: Instant,
) -> Result<SolverReport> {
    let (l0, lc, dc, pen, rec) = tracer.finalize();
    Ok(SolverReport {
        config: cfg.clone(),
        factors: stack,
        l0_trace: l0,
        layer_centric_trace: lc,
        data_centric_trace: dc,
        penalized_total: pen,
        reconstruction_part: rec,
        per_update_penalized: per_update,
        lambdas: spec.weights().to_vec(),
        kappas: padded_kappas(&spec, cfg.layer_count()),
        warnings,
        seed: cfg.seed,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
