//! Global loss functions over a stack of layer factorizations, their analytic
//! gradients, Lipschitz constants for the inner solver, and the per-factor
//! block subproblems used during block coordinate descent.
//!
//! Two consistent loss families are provided: a layer-centric loss summing the
//! weighted residuals of each layer-wise factorization, and a data-centric
//! loss summing the weighted residuals between the data and its successive
//! unfolded approximations. The classical last-layer-only loss is kept for
//! diagnostics. Each family optionally carries a per-layer minimum-volume
//! penalty `kappa_l * logdet(W_l^T W_l + delta I)` on the basis matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{logdet_and_inverse, Matrix};

/// Loss family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    /// `||X - W_L H_L ... H_1||_F^2`, the last-layer unfolded residual.
    L0,
    /// Weighted sum of per-layer residuals `||W_{l-1} - W_l H_l||_F^2`.
    LayerCentric,
    /// Weighted sum of data residuals `||X - W_l H_l ... H_1||_F^2`.
    DataCentric,
}

/// Which factor of a layer an operation addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorSide {
    W,
    H,
}

/// Loss specification: family, layer weights, and minimum-volume penalties.
///
/// Weights are the `L-1` multipliers of the second through last terms; the
/// first term always has implicit weight one. `minvol_kappas` holds one
/// nonnegative coefficient per layer (empty means no volume penalty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub family: LossFamily,
    weights: Vec<f64>,
    minvol_kappas: Vec<f64>,
    minvol_delta: f64,
}

impl LossSpec {
    pub fn new(
        family: LossFamily,
        weights: Vec<f64>,
        minvol_kappas: Vec<f64>,
        minvol_delta: f64,
    ) -> Result<Self> {
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::usage("loss weights must be finite and nonnegative"));
        }
        if minvol_kappas.iter().any(|&k| !(k >= 0.0) || !k.is_finite()) {
            return Err(Error::usage("minvol kappas must be finite and nonnegative"));
        }
        if !(minvol_delta > 0.0) {
            return Err(Error::usage(format!(
                "minvol delta must be positive, got {minvol_delta}"
            )));
        }
        if family == LossFamily::L0 && minvol_kappas.iter().any(|&k| k > 0.0) {
            return Err(Error::usage(
                "the last-layer loss does not support minimum-volume penalties",
            ));
        }
        Ok(Self {
            family,
            weights,
            minvol_kappas,
            minvol_delta,
        })
    }

    pub fn l0() -> Self {
        Self::new(LossFamily::L0, vec![], vec![], 0.1).expect("valid")
    }

    pub fn layer_centric(weights: Vec<f64>) -> Result<Self> {
        Self::new(LossFamily::LayerCentric, weights, vec![], 0.1)
    }

    pub fn data_centric(weights: Vec<f64>) -> Result<Self> {
        Self::new(LossFamily::DataCentric, weights, vec![], 0.1)
    }

    pub fn with_minvol(mut self, kappas: Vec<f64>, delta: f64) -> Result<Self> {
        if kappas.iter().any(|&k| !(k >= 0.0) || !k.is_finite()) {
            return Err(Error::usage("minvol kappas must be finite and nonnegative"));
        }
        if !(delta > 0.0) {
            return Err(Error::usage(format!("minvol delta must be positive, got {delta}")));
        }
        if self.family == LossFamily::L0 && kappas.iter().any(|&k| k > 0.0) {
            return Err(Error::usage(
                "the last-layer loss does not support minimum-volume penalties",
            ));
        }
        self.minvol_kappas = kappas;
        self.minvol_delta = delta;
        Ok(self)
    }

    /// Replaces the layer weights (used by auto-scaling after initialization).
    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::usage("loss weights must be finite and nonnegative"));
        }
        self.weights = weights;
        Ok(())
    }

    pub fn set_kappas(&mut self, kappas: Vec<f64>) -> Result<()> {
        if kappas.iter().any(|&k| !(k >= 0.0) || !k.is_finite()) {
            return Err(Error::usage("minvol kappas must be finite and nonnegative"));
        }
        if self.family == LossFamily::L0 && kappas.iter().any(|&k| k > 0.0) {
            return Err(Error::usage(
                "the last-layer loss does not support minimum-volume penalties",
            ));
        }
        self.minvol_kappas = kappas;
        Ok(())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kappas(&self) -> &[f64] {
        &self.minvol_kappas
    }

    pub fn delta(&self) -> f64 {
        self.minvol_delta
    }

    /// Weight multiplying layer `layer`'s term (0-based); the first layer has
    /// implicit weight one.
    pub fn weight_before(&self, layer: usize) -> f64 {
        if layer == 0 {
            1.0
        } else {
            self.weights.get(layer - 1).copied().unwrap_or(0.0)
        }
    }

    /// Volume coefficient for layer `layer` (0-based); zero when absent.
    pub fn kappa(&self, layer: usize) -> f64 {
        self.minvol_kappas.get(layer).copied().unwrap_or(0.0)
    }

    pub fn has_minvol(&self) -> bool {
        self.minvol_kappas.iter().any(|&k| k > 0.0)
    }

    fn expect_family(&self, family: LossFamily, op: &str) -> Result<()> {
        if self.family != family {
            return Err(Error::usage(format!(
                "{op} requires the {family:?} family, spec has {:?}",
                self.family
            )));
        }
        Ok(())
    }
}

/// Ordered per-layer factor pairs `(W_l, H_l)` with a consistent dimension
/// chain: `W_l` is `m x r_l`, `H_l` is `r_l x r_{l-1}`, and `r_0` is the
/// sample count of the data matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorStack {
    w: Vec<Matrix>,
    h: Vec<Matrix>,
}

impl FactorStack {
    /// Validates the dimension chain. An increasing rank ladder is accepted
    /// (the caller may warn; see [`FactorStack::rank_ladder_nonincreasing`]).
    pub fn new(pairs: Vec<(Matrix, Matrix)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::usage("a factor stack needs at least one layer"));
        }
        let m = pairs[0].0.rows();
        for (li, (w, h)) in pairs.iter().enumerate() {
            if w.rows() != m {
                return Err(Error::dim(
                    "FactorStack::new",
                    format!("layer {li}: W has {} rows, expected {m}", w.rows()),
                ));
            }
            if w.cols() != h.rows() {
                return Err(Error::dim(
                    "FactorStack::new",
                    format!(
                        "layer {li}: W is {}x{} but H is {}x{}",
                        w.rows(),
                        w.cols(),
                        h.rows(),
                        h.cols()
                    ),
                ));
            }
            if li > 0 && h.cols() != pairs[li - 1].0.cols() {
                return Err(Error::dim(
                    "FactorStack::new",
                    format!(
                        "layer {li}: H has {} columns, expected rank {} of the previous layer",
                        h.cols(),
                        pairs[li - 1].0.cols()
                    ),
                ));
            }
        }
        let (w, h) = pairs.into_iter().unzip();
        Ok(Self { w, h })
    }

    pub fn layer_count(&self) -> usize {
        self.w.len()
    }

    /// Basis matrix of layer `layer` (0-based).
    pub fn w(&self, layer: usize) -> &Matrix {
        &self.w[layer]
    }

    /// Coefficient matrix of layer `layer` (0-based).
    pub fn h(&self, layer: usize) -> &Matrix {
        &self.h[layer]
    }

    pub fn set_w(&mut self, layer: usize, w: Matrix) {
        debug_assert_eq!(w.shape(), self.w[layer].shape());
        self.w[layer] = w;
    }

    pub fn set_h(&mut self, layer: usize, h: Matrix) {
        debug_assert_eq!(h.shape(), self.h[layer].shape());
        self.h[layer] = h;
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.w.iter().map(|w| w.cols()).collect()
    }

    pub fn feature_count(&self) -> usize {
        self.w[0].rows()
    }

    pub fn sample_count(&self) -> usize {
        self.h[0].cols()
    }

    pub fn rank_ladder_nonincreasing(&self) -> bool {
        self.ranks().windows(2).all(|p| p[0] >= p[1])
    }

    /// Chained coefficient product `H_layer * ... * H_0`.
    pub fn h_chain(&self, layer: usize) -> Matrix {
        let mut prod = self.h[0].clone();
        for li in 1..=layer {
            prod = self.h[li].matmul(&prod).expect("chain validated");
        }
        prod
    }

    /// Depth-`layer` approximation of the data: `W_layer * H_layer * ... * H_0`.
    pub fn unfolded(&self, layer: usize) -> Matrix {
        self.w[layer]
            .matmul(&self.h_chain(layer))
            .expect("chain validated")
    }

    fn check_data(&self, x: &Matrix, op: &'static str) -> Result<()> {
        if x.rows() != self.feature_count() || x.cols() != self.sample_count() {
            return Err(Error::dim(
                op,
                format!(
                    "data is {}x{}, stack expects {}x{}",
                    x.rows(),
                    x.cols(),
                    self.feature_count(),
                    self.sample_count()
                ),
            ));
        }
        Ok(())
    }
}

/// Penalized loss value split into its reconstruction and volume parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub reconstruction: f64,
    pub volume: f64,
}

impl LossValue {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.volume
    }
}

/// Last-layer unfolded residual `||X - W_L H_L ... H_1||_F^2`.
pub fn eval_l0(x: &Matrix, stack: &FactorStack) -> Result<f64> {
    stack.check_data(x, "eval_l0")?;
    x.frob_err_sq(&stack.unfolded(stack.layer_count() - 1))
}

/// Layer-centric loss with optional volume penalties.
pub fn eval_l1(x: &Matrix, stack: &FactorStack, spec: &LossSpec) -> Result<f64> {
    spec.expect_family(LossFamily::LayerCentric, "eval_l1")?;
    Ok(eval_l1_parts(x, stack, spec)?.total())
}

pub fn eval_l1_parts(x: &Matrix, stack: &FactorStack, spec: &LossSpec) -> Result<LossValue> {
    stack.check_data(x, "eval_l1")?;
    let l_count = stack.layer_count();
    let mut recon = 0.0;
    let mut volume = 0.0;
    for li in 0..l_count {
        let weight = spec.weight_before(li);
        let target = if li == 0 { x } else { stack.w(li - 1) };
        let approx = stack.w(li).matmul(stack.h(li))?;
        recon += weight * target.frob_err_sq(&approx)?;
        let kappa = spec.kappa(li);
        if kappa > 0.0 {
            let (logdet, _) = logdet_and_inverse(&stack.w(li).gram(), spec.delta())?;
            volume += weight * kappa * logdet;
        }
    }
    Ok(LossValue {
        reconstruction: 0.5 * recon,
        volume: 0.5 * volume,
    })
}

/// Data-centric loss with optional volume penalties.
pub fn eval_l2(x: &Matrix, stack: &FactorStack, spec: &LossSpec) -> Result<f64> {
    spec.expect_family(LossFamily::DataCentric, "eval_l2")?;
    Ok(eval_l2_parts(x, stack, spec)?.total())
}

pub fn eval_l2_parts(x: &Matrix, stack: &FactorStack, spec: &LossSpec) -> Result<LossValue> {
    stack.check_data(x, "eval_l2")?;
    let l_count = stack.layer_count();
    let mut recon = 0.0;
    let mut volume = 0.0;
    let mut chain = stack.h(0).clone();
    for li in 0..l_count {
        if li > 0 {
            chain = stack.h(li).matmul(&chain)?;
        }
        let weight = spec.weight_before(li);
        let approx = stack.w(li).matmul(&chain)?;
        recon += weight * x.frob_err_sq(&approx)?;
        let kappa = spec.kappa(li);
        if kappa > 0.0 {
            let (logdet, _) = logdet_and_inverse(&stack.w(li).gram(), spec.delta())?;
            volume += weight * kappa * logdet;
        }
    }
    Ok(LossValue {
        reconstruction: 0.5 * recon,
        volume: 0.5 * volume,
    })
}

/// Penalized loss of the spec's family (layer- or data-centric).
pub fn eval_loss_parts(x: &Matrix, stack: &FactorStack, spec: &LossSpec) -> Result<LossValue> {
    match spec.family {
        LossFamily::L0 => Ok(LossValue {
            reconstruction: eval_l0(x, stack)?,
            volume: 0.0,
        }),
        LossFamily::LayerCentric => eval_l1_parts(x, stack, spec),
        LossFamily::DataCentric => eval_l2_parts(x, stack, spec),
    }
}

fn check_layer(stack: &FactorStack, layer: usize, op: &'static str) -> Result<()> {
    if layer >= stack.layer_count() {
        return Err(Error::usage(format!(
            "{op}: layer {layer} out of range for {} layers",
            stack.layer_count()
        )));
    }
    Ok(())
}

/// Frozen volume-term factor `Z = (W^T W + delta I)^{-1}` for a layer.
pub fn volume_z(stack: &FactorStack, layer: usize, delta: f64) -> Result<Matrix> {
    Ok(logdet_and_inverse(&stack.w(layer).gram(), delta)?.1)
}

/// Gradient of the layer-centric loss with respect to `W_layer`, all other
/// factors held fixed. The volume term uses `Z` evaluated at the current
/// point, which is also how the solver freezes it at each update's start.
pub fn grad_l1_w(x: &Matrix, stack: &FactorStack, spec: &LossSpec, layer: usize) -> Result<Matrix> {
    spec.expect_family(LossFamily::LayerCentric, "grad_l1_w")?;
    stack.check_data(x, "grad_l1_w")?;
    check_layer(stack, layer, "grad_l1_w")?;
    let weight = spec.weight_before(layer);
    let target = if layer == 0 { x } else { stack.w(layer - 1) };
    let residual = stack.w(layer).matmul(stack.h(layer))?.sub(target)?;
    let mut grad = residual.matmul_nt(stack.h(layer))?.scaled(weight);
    if layer + 1 < stack.layer_count() {
        let next_weight = spec.weight_before(layer + 1);
        let anchor = stack.w(layer + 1).matmul(stack.h(layer + 1))?;
        grad.add_scaled_in_place(&stack.w(layer).sub(&anchor)?, next_weight)?;
    }
    let kappa = spec.kappa(layer);
    if kappa > 0.0 {
        let z = volume_z(stack, layer, spec.delta())?;
        grad.add_scaled_in_place(&stack.w(layer).matmul(&z)?, weight * kappa)?;
    }
    Ok(grad)
}

/// Gradient of the layer-centric loss with respect to `H_layer`.
pub fn grad_l1_h(x: &Matrix, stack: &FactorStack, spec: &LossSpec, layer: usize) -> Result<Matrix> {
    spec.expect_family(LossFamily::LayerCentric, "grad_l1_h")?;
    stack.check_data(x, "grad_l1_h")?;
    check_layer(stack, layer, "grad_l1_h")?;
    let weight = spec.weight_before(layer);
    let target = if layer == 0 { x } else { stack.w(layer - 1) };
    let residual = stack.w(layer).matmul(stack.h(layer))?.sub(target)?;
    Ok(stack.w(layer).matmul_tn(&residual)?.scaled(weight))
}

/// Gradient of the data-centric loss with respect to `W_layer`.
pub fn grad_l2_w(x: &Matrix, stack: &FactorStack, spec: &LossSpec, layer: usize) -> Result<Matrix> {
    spec.expect_family(LossFamily::DataCentric, "grad_l2_w")?;
    stack.check_data(x, "grad_l2_w")?;
    check_layer(stack, layer, "grad_l2_w")?;
    let weight = spec.weight_before(layer);
    let htilde = stack.h_chain(layer);
    let residual = stack.w(layer).matmul(&htilde)?.sub(x)?;
    let mut grad = residual.matmul_nt(&htilde)?.scaled(weight);
    let kappa = spec.kappa(layer);
    if kappa > 0.0 {
        let z = volume_z(stack, layer, spec.delta())?;
        grad.add_scaled_in_place(&stack.w(layer).matmul(&z)?, weight * kappa)?;
    }
    Ok(grad)
}

/// Gradient of the data-centric loss with respect to `H_layer`: a sum over
/// all depths `k >= layer` whose unfolded approximation contains `H_layer`.
pub fn grad_l2_h(x: &Matrix, stack: &FactorStack, spec: &LossSpec, layer: usize) -> Result<Matrix> {
    spec.expect_family(LossFamily::DataCentric, "grad_l2_h")?;
    stack.check_data(x, "grad_l2_h")?;
    check_layer(stack, layer, "grad_l2_h")?;
    let ctx = DataCentricHBlock::build(x, stack, spec, layer)?;
    Ok(ctx.gradient(stack.h(layer)))
}

/// Lipschitz constant of the block gradient for one factor, or `None` when it
/// is too costly to compute (data-centric coefficient updates) and the caller
/// should fall back to a backtracking line search.
pub fn lipschitz_constant(
    x: &Matrix,
    stack: &FactorStack,
    spec: &LossSpec,
    side: FactorSide,
    layer: usize,
) -> Result<Option<f64>> {
    stack.check_data(x, "lipschitz_constant")?;
    check_layer(stack, layer, "lipschitz_constant")?;
    let weight = spec.weight_before(layer);
    let value = match (spec.family, side) {
        (LossFamily::LayerCentric, FactorSide::W) => {
            let mut lip = weight * stack.h(layer).spectral_norm_sq();
            if layer + 1 < stack.layer_count() {
                lip += spec.weight_before(layer + 1);
            }
            let kappa = spec.kappa(layer);
            if kappa > 0.0 {
                let z = volume_z(stack, layer, spec.delta())?;
                lip += weight * kappa * z.spectral_norm_sq();
            }
            Some(lip)
        }
        (LossFamily::LayerCentric, FactorSide::H) => {
            Some(weight * stack.w(layer).spectral_norm_sq())
        }
        (LossFamily::DataCentric, FactorSide::W) => {
            let mut lip = weight * stack.h_chain(layer).spectral_norm_sq();
            let kappa = spec.kappa(layer);
            if kappa > 0.0 {
                let z = volume_z(stack, layer, spec.delta())?;
                lip += weight * kappa * z.spectral_norm_sq();
            }
            Some(lip)
        }
        (LossFamily::DataCentric, FactorSide::H) => None,
        (LossFamily::L0, _) => {
            return Err(Error::usage(
                "lipschitz_constant is defined for the layer- and data-centric families",
            ))
        }
    };
    Ok(value)
}

// ---------------------------------------------------------------------------
// Block subproblems: the loss restricted to a single factor, with whatever
// products stay constant during that update precomputed once.
// ---------------------------------------------------------------------------

/// `min_H 0.5 * weight * ||left * H - target||^2`: coefficient updates of the
/// layer-centric loss and of the sequential per-layer scheme.
pub struct LeftLsqBlock {
    pub weight: f64,
    pub left: Matrix,
    pub target: Matrix,
}

impl LeftLsqBlock {
    pub fn objective(&self, h: &Matrix) -> f64 {
        let approx = self.left.matmul(h).expect("dims fixed");
        0.5 * self.weight * self.target.frob_err_sq(&approx).expect("dims fixed")
    }

    pub fn gradient(&self, h: &Matrix) -> Matrix {
        let residual = self
            .left
            .matmul(h)
            .expect("dims fixed")
            .sub(&self.target)
            .expect("dims fixed");
        self.left.matmul_tn(&residual).expect("dims fixed").scaled(self.weight)
    }

    pub fn lipschitz(&self) -> f64 {
        self.weight * self.left.spectral_norm_sq()
    }
}

/// `min_W 0.5*weight*||W*right - target||^2 [+ 0.5*prox_w*||W - anchor||^2]
/// [+ 0.5*vol_w*tr(W^T W Z)]`: basis updates for every scheme, including the
/// frozen-Z majorizer of the volume penalty.
pub struct RightLsqBlock {
    pub weight: f64,
    pub right: Matrix,
    pub target: Matrix,
    pub prox: Option<(f64, Matrix)>,
    pub volume: Option<(f64, Matrix)>,
}

impl RightLsqBlock {
    pub fn objective(&self, w: &Matrix) -> f64 {
        let approx = w.matmul(&self.right).expect("dims fixed");
        let mut value = 0.5 * self.weight * self.target.frob_err_sq(&approx).expect("dims fixed");
        if let Some((pw, anchor)) = &self.prox {
            value += 0.5 * pw * w.frob_err_sq(anchor).expect("dims fixed");
        }
        if let Some((vw, z)) = &self.volume {
            let wz = w.matmul(z).expect("dims fixed");
            value += 0.5 * vw * wz.dot(w).expect("dims fixed");
        }
        value
    }

    pub fn gradient(&self, w: &Matrix) -> Matrix {
        let residual = w
            .matmul(&self.right)
            .expect("dims fixed")
            .sub(&self.target)
            .expect("dims fixed");
        let mut grad = residual.matmul_nt(&self.right).expect("dims fixed").scaled(self.weight);
        if let Some((pw, anchor)) = &self.prox {
            grad.add_scaled_in_place(&w.sub(anchor).expect("dims fixed"), *pw)
                .expect("dims fixed");
        }
        if let Some((vw, z)) = &self.volume {
            grad.add_scaled_in_place(&w.matmul(z).expect("dims fixed"), *vw)
                .expect("dims fixed");
        }
        grad
    }

    pub fn lipschitz(&self) -> f64 {
        let mut lip = self.weight * self.right.spectral_norm_sq();
        if let Some((pw, _)) = &self.prox {
            lip += pw;
        }
        if let Some((vw, z)) = &self.volume {
            lip += vw * z.spectral_norm_sq();
        }
        lip
    }
}

/// `min_H 0.5 * ||A H B - X||^2` with an optional right chain `B`: the
/// coefficient update of the inconsistent per-layer scheme.
pub struct SandwichedLsqBlock {
    pub a: Matrix,
    pub b: Option<Matrix>,
    pub x: Matrix,
}

impl SandwichedLsqBlock {
    fn apply(&self, h: &Matrix) -> Matrix {
        let ah = self.a.matmul(h).expect("dims fixed");
        match &self.b {
            Some(b) => ah.matmul(b).expect("dims fixed"),
            None => ah,
        }
    }

    pub fn objective(&self, h: &Matrix) -> f64 {
        0.5 * self.x.frob_err_sq(&self.apply(h)).expect("dims fixed")
    }

    pub fn gradient(&self, h: &Matrix) -> Matrix {
        let residual = self.apply(h).sub(&self.x).expect("dims fixed");
        let at_r = self.a.matmul_tn(&residual).expect("dims fixed");
        match &self.b {
            Some(b) => at_r.matmul_nt(b).expect("dims fixed"),
            None => at_r,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        let b_norm = self.b.as_ref().map_or(1.0, |b| b.spectral_norm_sq());
        self.a.spectral_norm_sq() * b_norm
    }
}

/// Data-centric coefficient update: `min_H 0.5 * sum_k mu_{k-1} *
/// ||C_k H D - X||^2` over the depths `k >= layer` containing `H_layer`.
/// The left chains `C_k` and right chain `D` are frozen at build time.
pub struct DataCentricHBlock {
    x: Matrix,
    d: Option<Matrix>,
    terms: Vec<(f64, Matrix)>,
}

impl DataCentricHBlock {
    pub fn build(
        x: &Matrix,
        stack: &FactorStack,
        spec: &LossSpec,
        layer: usize,
    ) -> Result<Self> {
        spec.expect_family(LossFamily::DataCentric, "DataCentricHBlock")?;
        check_layer(stack, layer, "DataCentricHBlock")?;
        let d = if layer == 0 {
            None
        } else {
            Some(stack.h_chain(layer - 1))
        };
        let mut terms = Vec::with_capacity(stack.layer_count() - layer);
        terms.push((spec.weight_before(layer), stack.w(layer).clone()));
        // Suffix coefficient chains H_k ... H_{layer+1}, extended upward.
        let mut suffix: Option<Matrix> = None;
        for k in (layer + 1)..stack.layer_count() {
            suffix = Some(match suffix {
                None => stack.h(k).clone(),
                Some(prev) => stack.h(k).matmul(&prev)?,
            });
            let c = stack.w(k).matmul(suffix.as_ref().expect("just set"))?;
            terms.push((spec.weight_before(k), c));
        }
        Ok(Self {
            x: x.clone(),
            d,
            terms,
        })
    }

    fn with_chain(&self, h: &Matrix) -> Matrix {
        match &self.d {
            Some(d) => h.matmul(d).expect("dims fixed"),
            None => h.clone(),
        }
    }

    pub fn objective(&self, h: &Matrix) -> f64 {
        let hd = self.with_chain(h);
        let mut value = 0.0;
        for (weight, c) in &self.terms {
            if *weight == 0.0 {
                continue;
            }
            let approx = c.matmul(&hd).expect("dims fixed");
            value += weight * self.x.frob_err_sq(&approx).expect("dims fixed");
        }
        0.5 * value
    }

    pub fn gradient(&self, h: &Matrix) -> Matrix {
        let hd = self.with_chain(h);
        let mut inner: Option<Matrix> = None;
        for (weight, c) in &self.terms {
            if *weight == 0.0 {
                continue;
            }
            let residual = c.matmul(&hd).expect("dims fixed").sub(&self.x).expect("dims fixed");
            let term = c.matmul_tn(&residual).expect("dims fixed");
            inner = Some(match inner {
                None => term.scaled(*weight),
                Some(mut acc) => {
                    acc.add_scaled_in_place(&term, *weight).expect("dims fixed");
                    acc
                }
            });
        }
        // All weights zero: the block objective is constant in this factor.
        let Some(inner) = inner else {
            return Matrix::zeros(h.rows(), h.cols());
        };
        match &self.d {
            Some(d) => inner.matmul_nt(d).expect("dims fixed"),
            None => inner,
        }
    }
}
