//! Manual reverse-mode gradients for the gated forward path, central
//! finite-difference verification, and a minimal SGD trainer.
//!
//! Non-smooth points use the conventions stated on [`backward`]: ReLU takes
//! subgradient 0 at 0, channel max-pooling routes gradient to the first
//! maximal lane, the coefficient clamp has zero gradient at and beyond its
//! boundaries, and floor/ceil branch selections are frozen (gradient flows
//! through the softmaxed offset weights only).

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::groupfc::{BilinearConvention, DeGroFcParams, DeGroTrace, GroupFcParams};
use crate::metrics::mse;
use crate::rng::CounterRng;
use crate::scalar::{sigmoid, Scalar};
use crate::spectral::{flatten, unflatten, DctPlan, FeatureMap, FlattenedSpectrum};
use crate::transdeno::{
    broadcast_gate, AttentionAxis, ParamId, TransDenoConfig, TransDenoParams,
};

/// Distance below which a unit is considered adjacent to a non-smooth point
/// for finite-difference exclusion purposes.
const KINK_MARGIN: f64 = 1e-6;

/// Safety factor on the finite-difference resolution floor: a central
/// difference of the loss carries rounding noise of a few ulps of the loss
/// divided by the step, and gaps below that scale are not resolvable.
const FD_NOISE_SAFETY: f64 = 8.0;

/// One gradient array per parameter array, same shapes, addressed by the
/// same stable paths as the parameters themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle<S>(TransDenoParams<S>);

impl<S: Scalar> GradientBundle<S> {
    pub fn zeros_like(p: &TransDenoParams<S>) -> Self {
        GradientBundle(
            TransDenoParams::zeros(p.channels(), p.height(), p.width(), p.config().clone())
                .expect("shape already validated by the source parameters"),
        )
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.0.param_ids()
    }

    pub fn grad_slice(&self, id: ParamId) -> Option<&[S]> {
        self.0.param_slice(id)
    }

    pub fn grad_slice_mut(&mut self, id: ParamId) -> Option<&mut [S]> {
        self.0.param_slice_mut(id)
    }

    fn stage_mut(&mut self, stage: u8) -> &mut DeGroFcParams<S> {
        match stage {
            1 => self.0.stage1_mut(),
            _ => self.0.stage2_mut(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for id in self.param_ids() {
            let src = other.grad_slice(id).expect("matching structure");
            let dst = self.grad_slice_mut(id).expect("matching structure");
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += *s;
            }
        }
    }

    pub fn scale(&mut self, factor: S) {
        for id in self.param_ids() {
            for v in self.grad_slice_mut(id).expect("own structure") {
                *v *= factor;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.param_ids()
            .iter()
            .all(|&id| self.grad_slice(id).unwrap().iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.param_ids()
            .iter()
            .flat_map(|&id| self.grad_slice(id).unwrap().iter())
            .map(|v| v.abs().as_f64())
            .fold(0.0, f64::max)
    }

    /// One plain SGD step: `param -= lr * grad`.
    pub fn apply_sgd(&self, params: &mut TransDenoParams<S>, lr: S) {
        for id in self.param_ids() {
            let grads = self.grad_slice(id).expect("own structure");
            let dst = params.param_slice_mut(id).expect("matching structure");
            for (p, g) in dst.iter_mut().zip(grads.iter()) {
                *p -= lr * *g;
            }
        }
    }
}

/// Everything the backward pass and the kink detector need from one gated
/// forward evaluation.
struct Trace<S> {
    plan: DctPlan<S>,
    flat: Array2<S>,
    descriptor: Array1<S>,
    /// First-maximal pooled-lane index per attended position.
    argmax: Vec<usize>,
    /// Smallest (max - runner-up) gap across pooled lanes.
    pool_gap: f64,
    stage1: DeGroTrace<S>,
    hidden_pre: Array1<S>,
    hidden: Array1<S>,
    stage2: DeGroTrace<S>,
    gate: Array1<S>,
}

/// descriptor + argmax + minimal tie gap, arithmetic identical to the
/// pipeline's pooled descriptor.
fn descriptor_with_argmax<S: Scalar>(
    flat: &Array2<S>,
    axis: AttentionAxis,
) -> (Array1<S>, Vec<usize>, f64) {
    let (positions, channels) = flat.dim();
    let (lanes, lane_len) = match axis {
        AttentionAxis::Spatial => (positions, channels),
        AttentionAxis::Channel => (channels, positions),
    };
    let mut descriptor = Array1::zeros(lanes);
    let mut argmax = vec![0usize; lanes];
    let mut min_gap = f64::INFINITY;
    for lane in 0..lanes {
        let mut sum = S::zero();
        let mut max = S::neg_infinity();
        let mut second = S::neg_infinity();
        let mut arg = 0usize;
        for i in 0..lane_len {
            let v = match axis {
                AttentionAxis::Spatial => flat[(lane, i)],
                AttentionAxis::Channel => flat[(i, lane)],
            };
            sum += v;
            if v > max {
                second = max;
                max = v;
                arg = i;
            } else if v > second {
                second = v;
            }
        }
        descriptor[lane] = sum / S::from_f64(lane_len as f64) + max;
        argmax[lane] = arg;
        if lane_len > 1 {
            min_gap = min_gap.min((max - second).as_f64());
        }
    }
    (descriptor, argmax, min_gap)
}

/// Gated forward pass recording all intermediates. Output is bit-identical
/// to [`crate::transdeno::transdeno_forward_gated`].
fn forward_trace<S: Scalar>(
    m: &FeatureMap<S>,
    p: &TransDenoParams<S>,
) -> Result<(FeatureMap<S>, Trace<S>)> {
    p.check_input(m)?;
    let axis = p.config().axis;
    let plan = DctPlan::new(p.height(), p.width());
    let spectrum = plan.forward(m)?;
    let flat = flatten(&spectrum).into_data();
    let (descriptor, argmax, pool_gap) = descriptor_with_argmax(&flat, axis);
    let (hidden_pre, stage1) = p.stage1().forward_traced(&descriptor, &descriptor)?;
    let hidden = hidden_pre.mapv(|v| v.max(S::zero()));
    let (logits, stage2) = p.stage2().forward_traced(&hidden, &hidden)?;
    let gate = logits.mapv(sigmoid);
    let gate_full = broadcast_gate_values(&gate, flat.dim().0, flat.dim().1, axis);
    let shrunk = &flat * &gate_full;
    let shrunk_map = unflatten(&FlattenedSpectrum::new(shrunk)?, p.height(), p.width())?;
    let out = FeatureMap::new(plan.inverse_unchecked(shrunk_map.data()))?;
    Ok((
        out,
        Trace {
            plan,
            flat,
            descriptor,
            argmax,
            pool_gap,
            stage1,
            hidden_pre,
            hidden,
            stage2,
            gate,
        },
    ))
}

fn broadcast_gate_values<S: Scalar>(
    gate: &Array1<S>,
    positions: usize,
    channels: usize,
    axis: AttentionAxis,
) -> Array2<S> {
    broadcast_gate(gate, positions, channels, axis)
}

/// Exact analytic gradients of the gated forward with respect to every
/// parameter and the input, for a given upstream gradient on the output.
/// Forward intermediates are recomputed internally.
pub fn backward<S: Scalar>(
    m: &FeatureMap<S>,
    p: &TransDenoParams<S>,
    dl_dout: &FeatureMap<S>,
) -> Result<(GradientBundle<S>, FeatureMap<S>)> {
    if let Some((c, h, w)) = dl_dout
        .data()
        .indexed_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(idx, _)| idx)
    {
        return Err(Error::non_finite("backward upstream gradient", format!("[{c}, {h}, {w}]")));
    }
    p.check_input(dl_dout)?;
    let (_, trace) = forward_trace(m, p)?;
    backward_with_trace(p, &trace, dl_dout)
}

fn backward_with_trace<S: Scalar>(
    p: &TransDenoParams<S>,
    trace: &Trace<S>,
    dl_dout: &FeatureMap<S>,
) -> Result<(GradientBundle<S>, FeatureMap<S>)> {
    let axis = p.config().axis;
    let (positions, channels) = trace.flat.dim();

    // adjoint of IDCT . unflatten is flatten . DCT
    let dy = flatten(&trace.plan.forward(dl_dout)?).into_data();

    // y = broadcast(gate) * flat
    let gate_full = broadcast_gate_values(&trace.gate, positions, channels, axis);
    let mut dflat = &dy * &gate_full;
    let d_gate_full = &dy * &trace.flat;
    let dgate: Array1<S> = match axis {
        AttentionAxis::Spatial => d_gate_full.sum_axis(Axis(1)),
        AttentionAxis::Channel => d_gate_full.sum_axis(Axis(0)),
    };

    // sigmoid
    let dlogits: Array1<S> = ndarray::Zip::from(&dgate)
        .and(&trace.gate)
        .map_collect(|&dg, &g| dg * g * (S::one() - g));

    let mut bundle = GradientBundle::zeros_like(p);

    // stage 2 consumes the hidden vector as both input and coefficient source
    let (dx2, ds2) = stage_backward(
        p.stage2(),
        &trace.stage2,
        &trace.hidden,
        &dlogits,
        bundle.stage_mut(2),
    );
    let dhidden = dx2 + ds2;

    // ReLU: subgradient 0 at 0
    let dhidden_pre: Array1<S> = ndarray::Zip::from(&dhidden)
        .and(&trace.hidden_pre)
        .map_collect(|&d, &h| if h > S::zero() { d } else { S::zero() });

    let (dx1, ds1) = stage_backward(
        p.stage1(),
        &trace.stage1,
        &trace.descriptor,
        &dhidden_pre,
        bundle.stage_mut(1),
    );
    let ddesc = dx1 + ds1;

    // pooling: mean spreads evenly, max routes to the first maximal lane
    match axis {
        AttentionAxis::Spatial => {
            let inv = S::from_f64(1.0 / channels as f64);
            for pos in 0..positions {
                let g = ddesc[pos];
                for c in 0..channels {
                    dflat[(pos, c)] += g * inv;
                }
                dflat[(pos, trace.argmax[pos])] += g;
            }
        }
        AttentionAxis::Channel => {
            let inv = S::from_f64(1.0 / positions as f64);
            for c in 0..channels {
                let g = ddesc[c];
                for pos in 0..positions {
                    dflat[(pos, c)] += g * inv;
                }
                dflat[(trace.argmax[c], c)] += g;
            }
        }
    }

    // adjoint of flatten . DCT is IDCT . unflatten
    let dm = trace.plan.inverse(&unflatten(
        &FlattenedSpectrum::new(dflat)?,
        p.height(),
        p.width(),
    )?)?;
    Ok((bundle, dm))
}

/// Backward through one deformable stage. Returns the gradient reaching the
/// stage input via the branches (`dx`) and via the coefficient FC (`ds`);
/// callers add them when the same vector fed both roles.
fn stage_backward<S: Scalar>(
    params: &DeGroFcParams<S>,
    trace: &DeGroTrace<S>,
    x: &Array1<S>,
    dz: &Array1<S>,
    grads: &mut DeGroFcParams<S>,
) -> (Array1<S>, Array1<S>) {
    let k = params.k();
    let upper = S::from_f64((k - 1) as f64);
    let dz_scaled = dz * S::from_f64(1.0 / k as f64);
    let mut branch_upstream: Vec<Option<Array1<S>>> = vec![None; k];
    let mut dk_raw = Array1::zeros(k);
    for (i, cell) in trace.cells.iter().enumerate() {
        let (w_lo, w_hi) = match params.convention() {
            BilinearConvention::Paper => (cell.weight_p, cell.weight_q),
            BilinearConvention::Standard => (cell.weight_q, cell.weight_p),
        };
        let b_lo = trace.branch_out[cell.lo].as_ref().expect("evaluated in forward");
        let b_hi = trace.branch_out[cell.hi].as_ref().expect("evaluated in forward");
        let d_w_lo = dz_scaled.dot(b_lo);
        let d_w_hi = dz_scaled.dot(b_hi);
        accumulate(&mut branch_upstream[cell.lo], &dz_scaled, w_lo);
        accumulate(&mut branch_upstream[cell.hi], &dz_scaled, w_hi);
        let (d_w_p, d_w_q) = match params.convention() {
            BilinearConvention::Paper => (d_w_lo, d_w_hi),
            BilinearConvention::Standard => (d_w_hi, d_w_lo),
        };
        // 2-way softmax of (K - floor, ceil - K): the logit difference moves
        // at rate 2 per unit K within a cell, so dw_p/dK = 2 * w_p * w_q.
        let dk = S::from_f64(2.0) * cell.weight_p * cell.weight_q * (d_w_p - d_w_q);
        // clamp: zero gradient at and beyond the design-space boundaries
        let raw = trace.ks_raw[i];
        dk_raw[i] = if raw > S::zero() && raw < upper { dk } else { S::zero() };
    }

    // coefficient FC: K_raw = W s + b
    for i in 0..k {
        let d = dk_raw[i];
        grads.coeff_bias_mut()[i] += d;
        if d != S::zero() {
            for (j, &xj) in x.iter().enumerate() {
                grads.coeff_weight_mut()[(i, j)] += d * xj;
            }
        }
    }
    let ds = params.coeff_weight().t().dot(&dk_raw);

    let mut dx = Array1::zeros(params.in_len());
    for (b, upstream) in branch_upstream.iter().enumerate() {
        if let Some(db) = upstream {
            branch_backward(params.branch(b), x, db, grads.branch_mut(b), &mut dx);
        }
    }
    (dx, ds)
}

fn accumulate<S: Scalar>(slot: &mut Option<Array1<S>>, v: &Array1<S>, w: S) {
    match slot {
        Some(acc) => acc.scaled_add(w, v),
        None => *slot = Some(v * w),
    }
}

fn branch_backward<S: Scalar>(
    branch: &GroupFcParams<S>,
    x: &Array1<S>,
    dy: &Array1<S>,
    grads: &mut GroupFcParams<S>,
    dx: &mut Array1<S>,
) {
    let n = branch.n_groups();
    let in_chunk = branch.in_len() / n;
    let out_chunk = branch.out_len() / n;
    for g in 0..n {
        let dy_g = dy.slice(ndarray::s![g * out_chunk..(g + 1) * out_chunk]);
        let x_g = x.slice(ndarray::s![g * in_chunk..(g + 1) * in_chunk]);
        for r in 0..out_chunk {
            let d = dy_g[r];
            grads.bias_mut(g)[r] += d;
            if d != S::zero() {
                for c in 0..in_chunk {
                    grads.weight_mut(g)[(r, c)] += d * x_g[c];
                }
            }
        }
        let dx_g = branch.weight(g).t().dot(&dy_g);
        dx.slice_mut(ndarray::s![g * in_chunk..(g + 1) * in_chunk])
            .scaled_add(S::one(), &dx_g);
    }
}

// ---------------------------------------------------------------------------
// finite differences
// ---------------------------------------------------------------------------

/// Discrete selector states of one forward pass plus the smallest distance
/// to any switching point.
#[derive(Debug, Clone, PartialEq)]
struct SelectorStates {
    relu: Vec<bool>,
    argmax: Vec<usize>,
    cells1: Vec<(usize, usize, bool)>,
    cells2: Vec<(usize, usize, bool)>,
}

struct Signature {
    states: SelectorStates,
    kink_distance: f64,
}

fn stage_states<S: Scalar>(trace: &DeGroTrace<S>, k: usize) -> (Vec<(usize, usize, bool)>, f64) {
    let mut cells = Vec::with_capacity(trace.cells.len());
    let mut dist = f64::INFINITY;
    for (i, cell) in trace.cells.iter().enumerate() {
        let raw = trace.ks_raw[i].as_f64();
        let open = raw > 0.0 && raw < (k - 1) as f64;
        cells.push((cell.lo, cell.hi, open));
        if k > 1 {
            for point in 0..k {
                dist = dist.min((raw - point as f64).abs());
            }
        }
    }
    (cells, dist)
}

fn signature_of<S: Scalar>(trace: &Trace<S>, p: &TransDenoParams<S>) -> Signature {
    let relu: Vec<bool> = trace.hidden_pre.iter().map(|&v| v > S::zero()).collect();
    let relu_dist = trace
        .hidden_pre
        .iter()
        .map(|v| v.abs().as_f64())
        .fold(f64::INFINITY, f64::min);
    let (cells1, d1) = stage_states(&trace.stage1, p.stage1().k());
    let (cells2, d2) = stage_states(&trace.stage2, p.stage2().k());
    Signature {
        states: SelectorStates {
            relu,
            argmax: trace.argmax.clone(),
            cells1,
            cells2,
        },
        kink_distance: trace.pool_gap.min(relu_dist).min(d1).min(d2),
    }
}

fn mse_loss_with_signature(
    p: &TransDenoParams<f64>,
    input: &FeatureMap<f64>,
    target: &FeatureMap<f64>,
) -> Result<(f64, Signature)> {
    let (out, trace) = forward_trace(input, p)?;
    let loss = mse(&out, target)?;
    Ok((loss, signature_of(&trace, p)))
}

#[derive(Debug, Clone)]
pub struct FdEntry {
    pub path: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
    pub kink_adjacent: bool,
}

/// Central-difference comparison report, sorted by relative error,
/// worst first. Kink-adjacent scalars are listed but excluded from
/// `max_rel_err` and the verdict.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub entries: Vec<FdEntry>,
    pub max_rel_err: f64,
    pub worst_param_path: String,
    pub checked: usize,
    pub excluded: usize,
}

impl FdReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance
    }
}

/// Relative error with an absolute resolution floor: gaps the central
/// difference cannot resolve (below `atol`) count as matching.
fn relative_error(a: f64, b: f64, atol: f64) -> f64 {
    let gap = (a - b).abs();
    if gap <= atol {
        return 0.0;
    }
    gap / a.abs().max(b.abs())
}

/// Verifies the analytic MSE gradient of every scalar parameter against
/// central finite differences at step `eps`. 64-bit only.
pub fn finite_diff_check(
    params: &TransDenoParams<f64>,
    input: &FeatureMap<f64>,
    target: &FeatureMap<f64>,
    eps: f64,
) -> Result<FdReport> {
    let (out, trace) = forward_trace(input, params)?;
    let numel = out.data().len() as f64;
    let upstream = FeatureMap::new((out.data() - target.data()) * (2.0 / numel))?;
    let (bundle, _) = backward_with_trace(params, &trace, &upstream)?;
    finite_diff_check_with(params, input, target, eps, &bundle)
}

/// Same as [`finite_diff_check`] but verifying a caller-supplied analytic
/// gradient; useful for fault injection.
pub fn finite_diff_check_with(
    params: &TransDenoParams<f64>,
    input: &FeatureMap<f64>,
    target: &FeatureMap<f64>,
    eps: f64,
    analytic: &GradientBundle<f64>,
) -> Result<FdReport> {
    if eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let (base_loss, _) = mse_loss_with_signature(params, input, target)?;
    let atol = FD_NOISE_SAFETY * f64::EPSILON * base_loss.abs().max(1e-9) / eps;
    let mut probe = params.clone();
    let mut entries = Vec::new();
    for id in params.param_ids() {
        let len = params.param_slice(id).expect("own id").len();
        for index in 0..len {
            let original = probe.param_slice(id).unwrap()[index];
            probe.param_slice_mut(id).unwrap()[index] = original + eps;
            let (loss_plus, sig_plus) = mse_loss_with_signature(&probe, input, target)?;
            probe.param_slice_mut(id).unwrap()[index] = original - eps;
            let (loss_minus, sig_minus) = mse_loss_with_signature(&probe, input, target)?;
            probe.param_slice_mut(id).unwrap()[index] = original;

            let numeric = (loss_plus - loss_minus) / (2.0 * eps);
            let a = analytic.grad_slice(id).expect("matching structure")[index];
            let kink_adjacent = sig_plus.states != sig_minus.states
                || sig_plus.kink_distance <= KINK_MARGIN
                || sig_minus.kink_distance <= KINK_MARGIN;
            entries.push(FdEntry {
                path: id.path(),
                index,
                analytic: a,
                numeric,
                rel_err: relative_error(a, numeric, atol),
                kink_adjacent,
            });
        }
    }
    entries.sort_by(|x, y| y.rel_err.total_cmp(&x.rel_err));
    let checked = entries.len();
    let excluded = entries.iter().filter(|e| e.kink_adjacent).count();
    let worst = entries
        .iter()
        .filter(|e| !e.kink_adjacent)
        .max_by(|x, y| x.rel_err.total_cmp(&y.rel_err));
    let (max_rel_err, worst_param_path) = match worst {
        Some(e) => (e.rel_err, format!("{}[{}]", e.path, e.index)),
        None => (0.0, String::new()),
    };
    Ok(FdReport {
        entries,
        max_rel_err,
        worst_param_path,
        checked,
        excluded,
    })
}

/// The canonical small verification instance: C = 2, H = W = 4, reduction 2,
/// candidate group counts [2, 4], seeded parameters and data.
pub fn gradcheck_instance(
    seed: u64,
) -> (TransDenoParams<f64>, FeatureMap<f64>, FeatureMap<f64>) {
    let config = TransDenoConfig {
        reduction: 2,
        group_counts: vec![2, 4],
        convention: BilinearConvention::Paper,
        axis: AttentionAxis::Spatial,
    };
    let params = TransDenoParams::init(2, 4, 4, config, seed).expect("valid instance dims");
    let mut rng = CounterRng::derive(seed, 10);
    let input = FeatureMap::new(ndarray::Array3::from_shape_fn((2, 4, 4), |_| {
        rng.uniform_in(-1.0, 1.0)
    }))
    .expect("nonzero dims");
    let target = FeatureMap::new(ndarray::Array3::from_shape_fn((2, 4, 4), |_| {
        rng.uniform_in(-1.0, 1.0)
    }))
    .expect("nonzero dims");
    (params, input, target)
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    Mse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if self.steps == 0 || self.batch == 0 {
            return Err(Error::InvalidArgument(
                "steps and batch must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Mean MSE of the gated forward over a whole data set. Non-finite values
/// propagate into the result rather than erroring, so the trainer can
/// report divergence with its step index.
pub fn dataset_loss<S: Scalar>(
    params: &TransDenoParams<S>,
    data: &[(FeatureMap<S>, FeatureMap<S>)],
) -> Result<f64> {
    let mut total = 0.0;
    for (noisy, clean) in data {
        let (out, _) = forward_trace(noisy, params)?;
        total += mse(&out, clean)?.as_f64();
    }
    Ok(total / data.len() as f64)
}

/// Plain SGD on the mean-squared error between the gated forward of the
/// noisy map and its clean counterpart.
///
/// The loss history holds the full-dataset loss before each step plus one
/// final entry after the last update (`steps + 1` values), so a zero
/// learning rate yields a literally flat history. Batch composition is
/// drawn from a counter-based stream keyed by the seed, independent of how
/// the pairs were produced.
pub fn train_denoiser<S: Scalar>(
    cfg: &TrainConfig,
    data: &[(FeatureMap<S>, FeatureMap<S>)],
    mut params: TransDenoParams<S>,
) -> Result<(TransDenoParams<S>, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training data is empty".into()));
    }
    for (noisy, clean) in data {
        params.check_input(noisy)?;
        params.check_input(clean)?;
    }
    let mut rng = CounterRng::derive(cfg.seed, 3);
    let lr = S::from_f64(cfg.learning_rate);
    let inv_batch = S::from_f64(1.0 / cfg.batch as f64);
    let mut history = Vec::with_capacity(cfg.steps + 1);
    for step in 0..cfg.steps {
        let loss = dataset_loss(&params, data)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        history.push(loss);

        let mut grads = GradientBundle::zeros_like(&params);
        for _ in 0..cfg.batch {
            let (noisy, clean) = &data[rng.index(data.len())];
            let (out, trace) = forward_trace(noisy, &params)?;
            let numel = S::from_f64(out.data().len() as f64);
            let upstream = FeatureMap::new(
                (out.data() - clean.data()).mapv(|d| d + d) / numel,
            )?;
            let (pair_grads, _) = backward_with_trace(&params, &trace, &upstream)?;
            grads.add_assign(&pair_grads);
        }
        grads.scale(inv_batch);
        grads.apply_sgd(&mut params, lr);
    }
    let final_loss = dataset_loss(&params, data)?;
    if !final_loss.is_finite() {
        return Err(Error::Divergence { step: cfg.steps });
    }
    history.push(final_loss);
    Ok((params, history))
}
