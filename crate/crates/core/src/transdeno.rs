//! The end-to-end denoising operator: DCT, flatten, pooled spectrum
//! descriptor, two-stage deformable grouped attention, dynamic
//! soft-threshold shrinkage, unflatten, inverse DCT.
//!
//! Both the threshold path ([`transdeno_forward`]) and the algebraically
//! equivalent gated path ([`transdeno_forward_gated`]) are public; their
//! agreement is the executable form of the attention-as-shrinkage identity.

use ndarray::{Array1, Array2, Axis, Ix2};

use crate::error::{Error, Result};
use crate::groupfc::{BilinearConvention, DeGroFcParams};
use crate::rng::CounterRng;
use crate::scalar::{sigmoid, Scalar};
use crate::shrinkage::{gate_to_threshold, soft_map, GateMap};
use crate::spectral::{flatten, unflatten, DctPlan, FeatureMap, FlattenedSpectrum, SpectralMap};

/// Bias magnitude that saturates the output sigmoid for the forced
/// open-gate configuration.
const SATURATION_BIAS: f64 = 40.0;

/// Which axis the attention runs over.
///
/// `Spatial` pools over channels and attends over the `H*W` frequency
/// positions; `Channel` transposes the roles (pools over positions, attends
/// over channels) as an ablation hook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttentionAxis {
    #[default]
    Spatial,
    Channel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransDenoConfig {
    /// Bottleneck reduction ratio between the two stages.
    pub reduction: usize,
    /// Candidate group counts shared by both stages.
    pub group_counts: Vec<usize>,
    pub convention: BilinearConvention,
    pub axis: AttentionAxis,
}

impl Default for TransDenoConfig {
    fn default() -> Self {
        TransDenoConfig {
            reduction: 4,
            group_counts: vec![2, 4, 8, 16],
            convention: BilinearConvention::default(),
            axis: AttentionAxis::default(),
        }
    }
}

/// Channel-pooled spectrum summary; length `H*W` for spatial attention
/// (`C` under the transposed variant).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumDescriptor<S>(Array1<S>);

impl<S: Scalar> SpectrumDescriptor<S> {
    pub fn new(values: Array1<S>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::non_finite(
                &format!("spectrum descriptor (value {v})"),
                format!("[{i}]"),
            ));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn data(&self) -> &Array1<S> {
        &self.0
    }

    pub fn into_data(self) -> Array1<S> {
        self.0
    }
}

/// All learnable parameters of the module: two cascaded deformable grouped
/// FC stages bound to fixed `C, H, W` and configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TransDenoParams<S> {
    channels: usize,
    height: usize,
    width: usize,
    config: TransDenoConfig,
    stage1: DeGroFcParams<S>,
    stage2: DeGroFcParams<S>,
}

impl<S: Scalar> TransDenoParams<S> {
    fn lens(c: usize, h: usize, w: usize, config: &TransDenoConfig) -> Result<(usize, usize)> {
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive, got C={c}, H={h}, W={w}"
            )));
        }
        let attend = match config.axis {
            AttentionAxis::Spatial => h * w,
            AttentionAxis::Channel => c,
        };
        if config.reduction == 0 || attend % config.reduction != 0 {
            return Err(Error::InvalidArgument(format!(
                "attended length {attend} is not divisible by reduction ratio {}",
                config.reduction
            )));
        }
        let hidden = attend / config.reduction;
        for &n in &config.group_counts {
            if attend % n != 0 || hidden % n != 0 {
                return Err(Error::InvalidArgument(format!(
                    "attended length {attend} and hidden length {hidden} must both be divisible by group count {n}"
                )));
            }
        }
        Ok((attend, hidden))
    }

    pub fn zeros(c: usize, h: usize, w: usize, config: TransDenoConfig) -> Result<Self> {
        let (attend, hidden) = Self::lens(c, h, w, &config)?;
        let stage1 = DeGroFcParams::zeros(
            config.group_counts.clone(),
            attend,
            attend,
            hidden,
            config.convention,
        )?;
        let stage2 = DeGroFcParams::zeros(
            config.group_counts.clone(),
            hidden,
            hidden,
            attend,
            config.convention,
        )?;
        Ok(TransDenoParams {
            channels: c,
            height: h,
            width: w,
            config,
            stage1,
            stage2,
        })
    }

    /// Seeded fan-in initialization of both stages.
    pub fn init(c: usize, h: usize, w: usize, config: TransDenoConfig, seed: u64) -> Result<Self> {
        let (attend, hidden) = Self::lens(c, h, w, &config)?;
        let mut rng1 = CounterRng::derive(seed, 1);
        let mut rng2 = CounterRng::derive(seed, 2);
        let stage1 = DeGroFcParams::init(
            config.group_counts.clone(),
            attend,
            attend,
            hidden,
            config.convention,
            &mut rng1,
        )?;
        let stage2 = DeGroFcParams::init(
            config.group_counts.clone(),
            hidden,
            hidden,
            attend,
            config.convention,
            &mut rng2,
        )?;
        Ok(TransDenoParams {
            channels: c,
            height: h,
            width: w,
            config,
            stage1,
            stage2,
        })
    }

    /// Zero parameters except a large positive bias in every stage-2 branch,
    /// which saturates the sigmoid so the gate is (numerically) fully open
    /// and the whole module reduces to a DCT round trip.
    pub fn open_gate(c: usize, h: usize, w: usize, config: TransDenoConfig) -> Result<Self> {
        let mut p = Self::zeros(c, h, w, config)?;
        let bias = S::from_f64(SATURATION_BIAS);
        for i in 0..p.stage2.k() {
            let n = p.stage2.branch(i).n_groups();
            for g in 0..n {
                p.stage2.branch_mut(i).bias_mut(g).fill(bias);
            }
        }
        Ok(p)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn config(&self) -> &TransDenoConfig {
        &self.config
    }

    /// Length of the attended axis (`H*W` spatial, `C` transposed).
    pub fn attend_len(&self) -> usize {
        self.stage1.in_len()
    }

    pub fn hidden_len(&self) -> usize {
        self.stage2.in_len()
    }

    pub fn stage1(&self) -> &DeGroFcParams<S> {
        &self.stage1
    }

    pub fn stage2(&self) -> &DeGroFcParams<S> {
        &self.stage2
    }

    pub fn stage1_mut(&mut self) -> &mut DeGroFcParams<S> {
        &mut self.stage1
    }

    pub fn stage2_mut(&mut self) -> &mut DeGroFcParams<S> {
        &mut self.stage2
    }

    pub fn check_input(&self, m: &FeatureMap<S>) -> Result<()> {
        let got = (m.channels(), m.height(), m.width());
        let bound = (self.channels, self.height, self.width);
        if got != bound {
            return Err(Error::shape(
                "transdeno input",
                format!("{bound:?}"),
                format!("{got:?}"),
            ));
        }
        Ok(())
    }

    fn stage_ref(&self, stage: u8) -> &DeGroFcParams<S> {
        match stage {
            1 => &self.stage1,
            _ => &self.stage2,
        }
    }

    fn stage_mut_ref(&mut self, stage: u8) -> &mut DeGroFcParams<S> {
        match stage {
            1 => &mut self.stage1,
            _ => &mut self.stage2,
        }
    }

    /// All parameter tensors in a stable enumeration order.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for stage in [1u8, 2] {
            let s = self.stage_ref(stage);
            ids.push(ParamId { stage, kind: ParamKind::CoeffWeight, count: 0, block: 0 });
            ids.push(ParamId { stage, kind: ParamKind::CoeffBias, count: 0, block: 0 });
            for (i, &count) in s.group_counts().iter().enumerate() {
                for block in 0..s.branch(i).n_groups() {
                    ids.push(ParamId { stage, kind: ParamKind::BranchWeight, count, block });
                    ids.push(ParamId { stage, kind: ParamKind::BranchBias, count, block });
                }
            }
        }
        ids
    }

    pub fn param_dims(&self, id: ParamId) -> Option<Vec<usize>> {
        let s = self.stage_ref(id.stage);
        match id.kind {
            ParamKind::CoeffWeight => {
                let (r, c) = s.coeff_weight().dim();
                Some(vec![r, c])
            }
            ParamKind::CoeffBias => Some(vec![s.coeff_bias().len()]),
            ParamKind::BranchWeight => {
                let b = s.group_counts().iter().position(|&c| c == id.count)?;
                let (r, c) = s.branch(b).weight(id.block).dim();
                Some(vec![r, c])
            }
            ParamKind::BranchBias => {
                let b = s.group_counts().iter().position(|&c| c == id.count)?;
                Some(vec![s.branch(b).bias(id.block).len()])
            }
        }
    }

    /// Contiguous view of one parameter tensor's values.
    pub fn param_slice(&self, id: ParamId) -> Option<&[S]> {
        let s = self.stage_ref(id.stage);
        match id.kind {
            ParamKind::CoeffWeight => s.coeff_weight().as_slice(),
            ParamKind::CoeffBias => s.coeff_bias().as_slice(),
            ParamKind::BranchWeight => {
                let b = s.group_counts().iter().position(|&c| c == id.count)?;
                s.branch(b).weight(id.block).as_slice()
            }
            ParamKind::BranchBias => {
                let b = s.group_counts().iter().position(|&c| c == id.count)?;
                s.branch(b).bias(id.block).as_slice()
            }
        }
    }

    pub fn param_slice_mut(&mut self, id: ParamId) -> Option<&mut [S]> {
        let s = self.stage_mut_ref(id.stage);
        match id.kind {
            ParamKind::CoeffWeight => s.coeff_weight_mut().as_slice_mut(),
            ParamKind::CoeffBias => s.coeff_bias_mut().as_slice_mut(),
            ParamKind::BranchWeight => {
                let b = s.group_counts().iter().position(|&c| c == id.count)?;
                s.branch_mut(b).weight_mut(id.block).as_slice_mut()
            }
            ParamKind::BranchBias => {
                let b = s.group_counts().iter().position(|&c| c == id.count)?;
                s.branch_mut(b).bias_mut(id.block).as_slice_mut()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    CoeffWeight,
    CoeffBias,
    BranchWeight,
    BranchBias,
}

/// Stable address of one parameter tensor. Branches are keyed by their
/// candidate group count (not list position), blocks by group index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId {
    pub stage: u8,
    pub kind: ParamKind,
    /// Group count of the branch; 0 for coefficient-FC parameters.
    pub count: usize,
    /// Block index within the branch; 0 for coefficient-FC parameters.
    pub block: usize,
}

impl ParamId {
    pub fn path(&self) -> String {
        match self.kind {
            ParamKind::CoeffWeight => format!("stage{}.coeff.weight", self.stage),
            ParamKind::CoeffBias => format!("stage{}.coeff.bias", self.stage),
            ParamKind::BranchWeight => {
                format!("stage{}.branch[{}].weight[{}]", self.stage, self.count, self.block)
            }
            ParamKind::BranchBias => {
                format!("stage{}.branch[{}].bias[{}]", self.stage, self.count, self.block)
            }
        }
    }

    pub fn parse(path: &str) -> Option<ParamId> {
        let mut parts = path.split('.');
        let stage_part = parts.next()?;
        let stage: u8 = stage_part.strip_prefix("stage")?.parse().ok()?;
        if !(stage == 1 || stage == 2) {
            return None;
        }
        let mid = parts.next()?;
        let last = parts.next()?;
        if parts.next().is_some() {
            return None;
        }
        let bracketed = |s: &str, prefix: &str| -> Option<usize> {
            s.strip_prefix(prefix)?
                .strip_prefix('[')?
                .strip_suffix(']')?
                .parse()
                .ok()
        };
        if mid == "coeff" {
            let kind = match last {
                "weight" => ParamKind::CoeffWeight,
                "bias" => ParamKind::CoeffBias,
                _ => return None,
            };
            return Some(ParamId { stage, kind, count: 0, block: 0 });
        }
        let count = bracketed(mid, "branch")?;
        if let Some(block) = bracketed(last, "weight") {
            return Some(ParamId { stage, kind: ParamKind::BranchWeight, count, block });
        }
        let block = bracketed(last, "bias")?;
        Some(ParamId { stage, kind: ParamKind::BranchBias, count, block })
    }
}

/// Per spatial-frequency position: mean over channels plus max over
/// channels, flattened row-major to length `H*W`.
pub fn pooled_spectrum<S: Scalar>(m: &SpectralMap<S>) -> SpectrumDescriptor<S> {
    SpectrumDescriptor(descriptor_over(flatten(m).data(), AttentionAxis::Spatial))
}

/// mean + max reduction over the non-attended axis of the flattened
/// spectrum: rows (positions) attend under `Spatial`, columns (channels)
/// under `Channel`.
pub(crate) fn descriptor_over<S: Scalar>(flat: &Array2<S>, axis: AttentionAxis) -> Array1<S> {
    let reduce = |lane: ndarray::ArrayView1<S>| {
        let mut sum = S::zero();
        let mut max = S::neg_infinity();
        for &v in lane.iter() {
            sum += v;
            if v > max {
                max = v;
            }
        }
        sum / S::from_f64(lane.len() as f64) + max
    };
    match axis {
        AttentionAxis::Spatial => flat.map_axis(Axis(1), reduce),
        AttentionAxis::Channel => flat.map_axis(Axis(0), reduce),
    }
}

/// Two-stage cascade `sigmoid(stage2(relu(stage1(s))))`; each stage derives
/// its blend coefficients from its own input. Entries are sigmoid outputs,
/// strictly inside (0, 1) up to floating-point saturation.
pub fn attention_map<S: Scalar>(
    s: &SpectrumDescriptor<S>,
    p: &TransDenoParams<S>,
) -> Result<GateMap<S, ndarray::Ix1>> {
    if s.len() != p.attend_len() {
        return Err(Error::shape(
            "attention_map",
            format!("{}", p.attend_len()),
            format!("{}", s.len()),
        ));
    }
    let hidden = p.stage1().forward(s.data(), s.data())?.mapv(|v| v.max(S::zero()));
    let logits = p.stage2().forward(&hidden, &hidden)?;
    GateMap::new(logits.mapv(sigmoid))
}

pub(crate) fn broadcast_gate<S: Scalar>(
    gate: &Array1<S>,
    positions: usize,
    channels: usize,
    axis: AttentionAxis,
) -> Array2<S> {
    match axis {
        AttentionAxis::Spatial => Array2::from_shape_fn((positions, channels), |(p, _)| gate[p]),
        AttentionAxis::Channel => Array2::from_shape_fn((positions, channels), |(_, c)| gate[c]),
    }
}

fn forward_impl<S: Scalar>(
    m: &FeatureMap<S>,
    p: &TransDenoParams<S>,
    gated: bool,
) -> Result<FeatureMap<S>> {
    p.check_input(m)?;
    let plan = DctPlan::new(p.height(), p.width());
    let spectrum = plan.forward(m)?;
    let flat = flatten(&spectrum);
    let descriptor = SpectrumDescriptor(descriptor_over(flat.data(), p.config().axis));
    let gate = attention_map(&descriptor, p)?;
    let gate_full: GateMap<S, Ix2> = GateMap::new(broadcast_gate(
        gate.data(),
        flat.positions(),
        flat.channels(),
        p.config().axis,
    ))?;
    let shrunk = if gated {
        flat.data() * gate_full.data()
    } else {
        let theta = gate_to_threshold(&gate_full, flat.data())?;
        soft_map(flat.data(), &theta)?
    };
    let shrunk = FlattenedSpectrum::new(shrunk)?;
    plan.inverse(&unflatten(&shrunk, p.height(), p.width())?)
}

/// Threshold path: shrinks DCT coefficients with the dynamic threshold
/// `(1 - a) * |coefficient|` broadcast across the non-attended axis.
pub fn transdeno_forward<S: Scalar>(
    m: &FeatureMap<S>,
    p: &TransDenoParams<S>,
) -> Result<FeatureMap<S>> {
    forward_impl(m, p, false)
}

/// Gated path: multiplies coefficients by the attention map directly.
/// Algebraically identical to [`transdeno_forward`].
pub fn transdeno_forward_gated<S: Scalar>(
    m: &FeatureMap<S>,
    p: &TransDenoParams<S>,
) -> Result<FeatureMap<S>> {
    forward_impl(m, p, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{dct2_forward, dct2_inverse, squared_norm};
    use ndarray::Array3;

    fn tiny_config() -> TransDenoConfig {
        TransDenoConfig {
            reduction: 2,
            group_counts: vec![2, 4],
            convention: BilinearConvention::Paper,
            axis: AttentionAxis::Spatial,
        }
    }

    fn random_map<S: Scalar>(c: usize, h: usize, w: usize, seed: u64) -> FeatureMap<S> {
        let mut rng = CounterRng::new(seed);
        FeatureMap::new(Array3::from_shape_fn((c, h, w), |_| {
            S::from_f64(rng.uniform_in(-1.5, 1.5))
        }))
        .unwrap()
    }

    fn max_abs<S: Scalar>(m: &FeatureMap<S>) -> f64 {
        m.data().iter().map(|v| v.abs().as_f64()).fold(0.0, f64::max)
    }

    fn max_diff<S: Scalar>(a: &FeatureMap<S>, b: &FeatureMap<S>) -> f64 {
        a.data()
            .iter()
            .zip(b.data().iter())
            .map(|(&x, &y)| (x - y).abs().as_f64())
            .fold(0.0, f64::max)
    }

    #[test]
    fn pooled_spectrum_examples() {
        // two channels holding 1 and 3 at every position: mean 2 + max 3 = 5
        let mut data = Array3::zeros((2, 2, 2));
        data.index_axis_mut(Axis(0), 0).fill(1.0f64);
        data.index_axis_mut(Axis(0), 1).fill(3.0);
        let m = SpectralMap::new(data).unwrap();
        let s = pooled_spectrum(&m);
        assert_eq!(s.len(), 4);
        assert!(s.data().iter().all(|&v| v == 5.0));

        // single channel: avg = max = value, so descriptor = 2 * flattened
        let single = SpectralMap::new(Array3::from_shape_fn((1, 2, 3), |(_, i, j)| {
            (i * 3 + j) as f64
        }))
        .unwrap();
        let s = pooled_spectrum(&single);
        for p in 0..6 {
            assert_eq!(s.data()[p], 2.0 * p as f64);
        }
    }

    #[test]
    fn pooled_spectrum_matches_scalar_loop() {
        let m = dct2_forward(&random_map::<f64>(3, 2, 4, 5)).unwrap();
        let s = pooled_spectrum(&m);
        let (c_n, h, w) = m.data().dim();
        for i in 0..h {
            for j in 0..w {
                let mut sum = 0.0;
                let mut max = f64::NEG_INFINITY;
                for c in 0..c_n {
                    let v = m.data()[(c, i, j)];
                    sum += v;
                    max = max.max(v);
                }
                let expect = sum / c_n as f64 + max;
                assert!((s.data()[i * w + j] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_parameters_give_half_gate() {
        let p = TransDenoParams::<f64>::zeros(2, 2, 4, tiny_config()).unwrap();
        let m = dct2_forward(&random_map(2, 2, 4, 9)).unwrap();
        let gate = attention_map(&pooled_spectrum(&m), &p).unwrap();
        assert!(gate.data().iter().all(|&g| g == 0.5));
    }

    #[test]
    fn gate_entries_stay_in_unit_interval() {
        for seed in 0..20 {
            let p = TransDenoParams::<f32>::init(2, 2, 4, tiny_config(), seed).unwrap();
            let m = dct2_forward(&random_map(2, 2, 4, seed + 100)).unwrap();
            let gate = attention_map(&pooled_spectrum(&m), &p).unwrap();
            assert!(gate.data().iter().all(|&g| g > 0.0 && g < 1.0));
        }
    }

    /// Straight-line scalar reimplementation of the attention cascade on a
    /// fixed tiny instance (HW = 8, r = 2, counts [2, 4]).
    #[test]
    fn attention_map_matches_straight_line_oracle() {
        let p = TransDenoParams::<f64>::init(1, 2, 4, tiny_config(), 77).unwrap();
        let m = dct2_forward(&random_map(1, 2, 4, 78)).unwrap();
        let s = pooled_spectrum(&m);
        let fast = attention_map(&s, &p).unwrap();

        // scalar re-evaluation from plain copies of the parameter values
        let stage = |stage: &DeGroFcParams<f64>, x: &[f64]| -> Vec<f64> {
            let k = stage.k();
            let mut out = vec![0.0; stage.out_len()];
            for i in 0..k {
                let mut k_i = stage.coeff_bias()[i];
                for (j, &xj) in x.iter().enumerate() {
                    k_i += stage.coeff_weight()[(i, j)] * xj;
                }
                k_i = k_i.clamp(0.0, (k - 1) as f64);
                let (lo, hi) = (k_i.floor() as usize, k_i.ceil() as usize);
                let (raw_p, raw_q) = (k_i - k_i.floor(), k_i.ceil() - k_i);
                let (ep, eq) = (raw_p.exp(), raw_q.exp());
                let (w_lo, w_hi) = (ep / (ep + eq), eq / (ep + eq));
                for (branch, weight) in [(lo, w_lo), (hi, w_hi)] {
                    let b = stage.branch(branch);
                    let n = b.n_groups();
                    let (ic, oc) = (b.in_len() / n, b.out_len() / n);
                    for g in 0..n {
                        for r in 0..oc {
                            let mut acc = b.bias(g)[r];
                            for cc in 0..ic {
                                acc += b.weight(g)[(r, cc)] * x[g * ic + cc];
                            }
                            out[g * oc + r] += weight * acc;
                        }
                    }
                }
            }
            out.iter().map(|v| v / k as f64).collect()
        };
        let s_vec: Vec<f64> = s.data().to_vec();
        let hidden: Vec<f64> = stage(p.stage1(), &s_vec).iter().map(|&v| v.max(0.0)).collect();
        let logits = stage(p.stage2(), &hidden);
        for (i, &l) in logits.iter().enumerate() {
            let expect = 1.0 / (1.0 + (-l).exp());
            assert!(
                (fast.data()[i] - expect).abs() < 1e-12,
                "gate {i}: {} vs {expect}",
                fast.data()[i]
            );
        }
    }

    #[test]
    fn open_gate_is_identity_within_roundtrip_tolerance() {
        let p = TransDenoParams::<f32>::open_gate(2, 4, 4, tiny_config()).unwrap();
        let m = random_map::<f32>(2, 4, 4, 3);
        let out = transdeno_forward(&m, &p).unwrap();
        assert!(max_diff(&m, &out) <= 1e-4);
    }

    #[test]
    fn closed_gate_annihilates_the_map() {
        let mut p = TransDenoParams::<f32>::zeros(2, 4, 4, tiny_config()).unwrap();
        for i in 0..p.stage2().k() {
            let n = p.stage2().branch(i).n_groups();
            for g in 0..n {
                p.stage2_mut().branch_mut(i).bias_mut(g).fill(-40.0);
            }
        }
        let m = random_map::<f32>(2, 4, 4, 4);
        let out = transdeno_forward(&m, &p).unwrap();
        assert!(max_abs(&out) <= 1e-4 * max_abs(&m));
    }

    #[test]
    fn threshold_and_gated_paths_agree() {
        for seed in 0..10 {
            let p = TransDenoParams::<f32>::init(3, 4, 4, tiny_config(), seed).unwrap();
            let m = random_map::<f32>(3, 4, 4, seed + 50);
            let a = transdeno_forward(&m, &p).unwrap();
            let b = transdeno_forward_gated(&m, &p).unwrap();
            let rel = max_diff(&a, &b) / max_abs(&b).max(1e-12);
            assert!(rel <= 1e-6, "seed {seed}: relative gap {rel}");
        }
    }

    #[test]
    fn spectrum_energy_contracts() {
        let p = TransDenoParams::<f64>::init(2, 4, 4, tiny_config(), 8).unwrap();
        let m = random_map::<f64>(2, 4, 4, 80);
        let out = transdeno_forward_gated(&m, &p).unwrap();
        assert!(squared_norm(out.data()) <= squared_norm(m.data()) * (1.0 + 1e-12));
    }

    #[test]
    fn output_shape_matches_input() {
        let p = TransDenoParams::<f32>::init(2, 2, 8, tiny_config(), 1).unwrap();
        let m = random_map::<f32>(2, 2, 8, 2);
        let out = transdeno_forward(&m, &p).unwrap();
        assert_eq!(out.data().dim(), m.data().dim());
    }

    #[test]
    fn forward_is_deterministic() {
        let p = TransDenoParams::<f32>::init(2, 4, 4, tiny_config(), 5).unwrap();
        let m = random_map::<f32>(2, 4, 4, 6);
        let a = transdeno_forward(&m, &p).unwrap();
        let b = transdeno_forward(&m, &p).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn attention_is_channel_equivariant() {
        let p = TransDenoParams::<f64>::init(3, 4, 4, tiny_config(), 11).unwrap();
        let m = random_map::<f64>(3, 4, 4, 12);
        let out = transdeno_forward_gated(&m, &p).unwrap();
        // rotate channels 0 <- 1 <- 2 <- 0
        let perm = [1usize, 2, 0];
        let permuted = FeatureMap::new(Array3::from_shape_fn((3, 4, 4), |(c, i, j)| {
            m.data()[(perm[c], i, j)]
        }))
        .unwrap();
        let out_perm = transdeno_forward_gated(&permuted, &p).unwrap();
        for ((c, i, j), &v) in out_perm.data().indexed_iter() {
            assert!((v - out.data()[(perm[c], i, j)]).abs() <= 1e-12);
        }
    }

    #[test]
    fn transposed_variant_passes_equivalence_and_bounds() {
        let config = TransDenoConfig {
            reduction: 2,
            group_counts: vec![2, 4],
            convention: BilinearConvention::Paper,
            axis: AttentionAxis::Channel,
        };
        for seed in 0..5 {
            let p = TransDenoParams::<f32>::init(8, 3, 5, config.clone(), seed).unwrap();
            let m = random_map::<f32>(8, 3, 5, seed + 30);
            let spectrum = dct2_forward(&m).unwrap();
            let flat = flatten(&spectrum);
            let descriptor =
                SpectrumDescriptor::new(descriptor_over(flat.data(), AttentionAxis::Channel)).unwrap();
            let gate = attention_map(&descriptor, &p).unwrap();
            assert_eq!(gate.data().len(), 8);
            assert!(gate.data().iter().all(|&g| g > 0.0 && g < 1.0));
            let a = transdeno_forward(&m, &p).unwrap();
            let b = transdeno_forward_gated(&m, &p).unwrap();
            assert!(max_diff(&a, &b) / max_abs(&b).max(1e-12) <= 1e-6);
        }
    }

    #[test]
    fn construction_rejects_indivisible_dims() {
        let bad_reduction = TransDenoConfig {
            reduction: 5,
            ..tiny_config()
        };
        let err = TransDenoParams::<f32>::zeros(1, 2, 4, bad_reduction).unwrap_err();
        assert!(err.to_string().contains("reduction"), "{err}");

        let bad_groups = TransDenoConfig {
            reduction: 2,
            group_counts: vec![2, 6],
            ..tiny_config()
        };
        assert!(TransDenoParams::<f32>::zeros(1, 2, 4, bad_groups).is_err());
    }

    #[test]
    fn forward_rejects_mismatched_dims() {
        let p = TransDenoParams::<f32>::init(2, 4, 4, tiny_config(), 5).unwrap();
        let m = random_map::<f32>(2, 4, 8, 6);
        assert!(transdeno_forward(&m, &p).is_err());
    }

    #[test]
    fn gated_path_equals_manual_spectral_gating() {
        let p = TransDenoParams::<f64>::init(2, 2, 4, tiny_config(), 21).unwrap();
        let m = random_map::<f64>(2, 2, 4, 22);
        let spectrum = dct2_forward(&m).unwrap();
        let flat = flatten(&spectrum);
        let gate = attention_map(&pooled_spectrum(&spectrum), &p).unwrap();
        let mut gated = flat.data().clone();
        for ((pos, _), v) in gated.indexed_iter_mut() {
            *v *= gate.data()[pos];
        }
        let manual = dct2_inverse(
            &unflatten(&FlattenedSpectrum::new(gated).unwrap(), 2, 4).unwrap(),
        )
        .unwrap();
        let fast = transdeno_forward_gated(&m, &p).unwrap();
        assert!(max_diff(&manual, &fast) <= 1e-12);
    }
}
