//! Grouped fully-connected layers over contiguous frequency subspaces and the
//! deformable layer that blends between candidate group counts.
//!
//! A grouped FC with `n` groups splits its input into `n` contiguous chunks
//! and maps each with its own weight block, so the equivalent full matrix is
//! block-diagonal. The deformable layer keeps one such branch per candidate
//! count, derives `k` fractional coefficients from a side input, and blends
//! the two branches adjacent to each coefficient with softmaxed offset
//! weights. Blend weights always form a convex pair, so an integer
//! coefficient degenerates to a plain (0.5, 0.5) pick of a single branch
//! rather than annihilating the term.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::scalar::Scalar;

/// Which branch receives which softmaxed offset weight.
///
/// `Paper` pairs the floor branch with the fractional-part offset, which is
/// the opposite of standard bilinear interpolation; `Standard` swaps the
/// pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BilinearConvention {
    #[default]
    Paper,
    Standard,
}

/// Parameters of one grouped fully-connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFcParams<S> {
    n_groups: usize,
    in_len: usize,
    out_len: usize,
    /// One `[out_len/n, in_len/n]` block per group.
    weights: Vec<Array2<S>>,
    /// One `[out_len/n]` bias per group.
    biases: Vec<Array1<S>>,
}

impl<S: Scalar> GroupFcParams<S> {
    pub fn new(
        n_groups: usize,
        in_len: usize,
        out_len: usize,
        weights: Vec<Array2<S>>,
        biases: Vec<Array1<S>>,
    ) -> Result<Self> {
        Self::check_lens(n_groups, in_len, out_len)?;
        if weights.len() != n_groups || biases.len() != n_groups {
            return Err(Error::InvalidArgument(format!(
                "expected {n_groups} weight/bias blocks, got {}/{}",
                weights.len(),
                biases.len()
            )));
        }
        let block = (out_len / n_groups, in_len / n_groups);
        for (g, w) in weights.iter().enumerate() {
            if w.dim() != block {
                return Err(Error::shape(
                    "group weight block",
                    format!("{:?} (group {g})", block),
                    format!("{:?}", w.dim()),
                ));
            }
        }
        for (g, b) in biases.iter().enumerate() {
            if b.len() != block.0 {
                return Err(Error::shape(
                    "group bias",
                    format!("{} (group {g})", block.0),
                    format!("{}", b.len()),
                ));
            }
        }
        Ok(GroupFcParams {
            n_groups,
            in_len,
            out_len,
            weights,
            biases,
        })
    }

    fn check_lens(n_groups: usize, in_len: usize, out_len: usize) -> Result<()> {
        if n_groups == 0 {
            return Err(Error::InvalidArgument("n_groups must be positive".into()));
        }
        if in_len == 0 || out_len == 0 || in_len % n_groups != 0 || out_len % n_groups != 0 {
            return Err(Error::InvalidArgument(format!(
                "in_len {in_len} and out_len {out_len} must be positive and divisible by n_groups {n_groups}"
            )));
        }
        Ok(())
    }

    pub fn zeros(n_groups: usize, in_len: usize, out_len: usize) -> Result<Self> {
        Self::check_lens(n_groups, in_len, out_len)?;
        let block = (out_len / n_groups, in_len / n_groups);
        Ok(GroupFcParams {
            n_groups,
            in_len,
            out_len,
            weights: (0..n_groups).map(|_| Array2::zeros(block)).collect(),
            biases: (0..n_groups).map(|_| Array1::zeros(block.0)).collect(),
        })
    }

    /// Fan-in scaled uniform init: each block uniform in
    /// `[-1/sqrt(in_len/n), +1/sqrt(in_len/n)]`, biases zero.
    pub fn init(n_groups: usize, in_len: usize, out_len: usize, rng: &mut CounterRng) -> Result<Self> {
        let mut p = Self::zeros(n_groups, in_len, out_len)?;
        let bound = 1.0 / ((in_len / n_groups) as f64).sqrt();
        for w in &mut p.weights {
            w.mapv_inplace(|_| S::from_f64(rng.uniform_in(-bound, bound)));
        }
        Ok(p)
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    pub fn weight(&self, group: usize) -> &Array2<S> {
        &self.weights[group]
    }

    pub fn bias(&self, group: usize) -> &Array1<S> {
        &self.biases[group]
    }

    pub fn weight_mut(&mut self, group: usize) -> &mut Array2<S> {
        &mut self.weights[group]
    }

    pub fn bias_mut(&mut self, group: usize) -> &mut Array1<S> {
        &mut self.biases[group]
    }

    /// Splits `x` into `n_groups` contiguous chunks, maps chunk `g` through
    /// weight block `g` plus bias, and concatenates the results.
    pub fn forward(&self, x: &Array1<S>) -> Result<Array1<S>> {
        if x.len() != self.in_len {
            return Err(Error::shape("group_fc_forward", format!("{}", self.in_len), format!("{}", x.len())));
        }
        let in_chunk = self.in_len / self.n_groups;
        let out_chunk = self.out_len / self.n_groups;
        let mut out = Array1::zeros(self.out_len);
        for g in 0..self.n_groups {
            let xg = x.slice(ndarray::s![g * in_chunk..(g + 1) * in_chunk]);
            let yg = self.weights[g].dot(&xg) + &self.biases[g];
            out.slice_mut(ndarray::s![g * out_chunk..(g + 1) * out_chunk])
                .assign(&yg);
        }
        Ok(out)
    }
}

/// Two-way softmax, numerically stable.
pub(crate) fn softmax_pair<S: Scalar>(a: S, b: S) -> (S, S) {
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    let total = ea + eb;
    (ea / total, eb / total)
}

/// Raw offsets `(K - floor(K), ceil(K) - K)` followed by a 2-way softmax.
/// The softmaxed pair always sums to 1; an integer `K` yields (0.5, 0.5)
/// where the raw pair would be (0, 0).
pub fn offsets<S: Scalar>(k_i: S, k: usize) -> Result<(S, S)> {
    let upper = S::from_f64((k - 1) as f64);
    if !(k_i >= S::zero() && k_i <= upper) {
        return Err(Error::InvalidArgument(format!(
            "coefficient {k_i} outside [0, {}]",
            k - 1
        )));
    }
    let raw_p = k_i - k_i.floor();
    let raw_q = k_i.ceil() - k_i;
    Ok(softmax_pair(raw_p, raw_q))
}

/// Parameters of one deformable grouped FC layer: a coefficient FC plus one
/// grouped-FC branch per candidate group count.
#[derive(Debug, Clone, PartialEq)]
pub struct DeGroFcParams<S> {
    group_counts: Vec<usize>,
    /// `[k, coeff_in_len]`
    coeff_weight: Array2<S>,
    /// `[k]`
    coeff_bias: Array1<S>,
    branches: Vec<GroupFcParams<S>>,
    convention: BilinearConvention,
}

impl<S: Scalar> DeGroFcParams<S> {
    pub fn new(
        group_counts: Vec<usize>,
        coeff_weight: Array2<S>,
        coeff_bias: Array1<S>,
        branches: Vec<GroupFcParams<S>>,
        convention: BilinearConvention,
    ) -> Result<Self> {
        if group_counts.is_empty() {
            return Err(Error::InvalidArgument("group_counts must be non-empty".into()));
        }
        if !group_counts.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(format!(
                "group_counts must be strictly increasing, got {group_counts:?}"
            )));
        }
        let k = group_counts.len();
        if branches.len() != k {
            return Err(Error::InvalidArgument(format!(
                "expected {k} branches, got {}",
                branches.len()
            )));
        }
        let (in_len, out_len) = (branches[0].in_len(), branches[0].out_len());
        for (i, b) in branches.iter().enumerate() {
            if b.n_groups() != group_counts[i] {
                return Err(Error::InvalidArgument(format!(
                    "branch {i} has {} groups, expected {}",
                    b.n_groups(),
                    group_counts[i]
                )));
            }
            if b.in_len() != in_len || b.out_len() != out_len {
                return Err(Error::InvalidArgument(format!(
                    "branch {i} dims [{}->{}] differ from [{in_len}->{out_len}]",
                    b.in_len(),
                    b.out_len()
                )));
            }
        }
        if coeff_weight.dim().0 != k || coeff_bias.len() != k {
            return Err(Error::shape(
                "coefficient FC",
                format!("{k} outputs"),
                format!("{} weights, {} biases", coeff_weight.dim().0, coeff_bias.len()),
            ));
        }
        Ok(DeGroFcParams {
            group_counts,
            coeff_weight,
            coeff_bias,
            branches,
            convention,
        })
    }

    pub fn zeros(
        group_counts: Vec<usize>,
        coeff_in_len: usize,
        in_len: usize,
        out_len: usize,
        convention: BilinearConvention,
    ) -> Result<Self> {
        let k = group_counts.len();
        let branches = group_counts
            .iter()
            .map(|&n| GroupFcParams::zeros(n, in_len, out_len))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            group_counts,
            Array2::zeros((k, coeff_in_len)),
            Array1::zeros(k),
            branches,
            convention,
        )
    }

    /// Seeded init: fan-in uniform weights everywhere; coefficient bias set
    /// to `(k-1)/2` so the initial blend starts mid design space.
    pub fn init(
        group_counts: Vec<usize>,
        coeff_in_len: usize,
        in_len: usize,
        out_len: usize,
        convention: BilinearConvention,
        rng: &mut CounterRng,
    ) -> Result<Self> {
        let k = group_counts.len();
        let branches = group_counts
            .iter()
            .map(|&n| GroupFcParams::init(n, in_len, out_len, rng))
            .collect::<Result<Vec<_>>>()?;
        let bound = 1.0 / (coeff_in_len as f64).sqrt();
        let coeff_weight =
            Array2::from_shape_fn((k, coeff_in_len), |_| S::from_f64(rng.uniform_in(-bound, bound)));
        let coeff_bias = Array1::from_elem(k, S::from_f64((k - 1) as f64 / 2.0));
        Self::new(group_counts, coeff_weight, coeff_bias, branches, convention)
    }

    pub fn k(&self) -> usize {
        self.group_counts.len()
    }

    pub fn group_counts(&self) -> &[usize] {
        &self.group_counts
    }

    pub fn in_len(&self) -> usize {
        self.branches[0].in_len()
    }

    pub fn out_len(&self) -> usize {
        self.branches[0].out_len()
    }

    pub fn coeff_in_len(&self) -> usize {
        self.coeff_weight.dim().1
    }

    pub fn convention(&self) -> BilinearConvention {
        self.convention
    }

    pub fn branch(&self, i: usize) -> &GroupFcParams<S> {
        &self.branches[i]
    }

    pub fn branch_mut(&mut self, i: usize) -> &mut GroupFcParams<S> {
        &mut self.branches[i]
    }

    pub fn coeff_weight(&self) -> &Array2<S> {
        &self.coeff_weight
    }

    pub fn coeff_bias(&self) -> &Array1<S> {
        &self.coeff_bias
    }

    pub fn coeff_weight_mut(&mut self) -> &mut Array2<S> {
        &mut self.coeff_weight
    }

    pub fn coeff_bias_mut(&mut self) -> &mut Array1<S> {
        &mut self.coeff_bias
    }

    /// Raw affine coefficients hard-clamped into `[0, k-1]`.
    pub fn coefficients(&self, s: &Array1<S>) -> Result<Array1<S>> {
        Ok(self.raw_coefficients(s)?.mapv(|v| self.clamp_coeff(v)))
    }

    pub(crate) fn raw_coefficients(&self, s: &Array1<S>) -> Result<Array1<S>> {
        if s.len() != self.coeff_in_len() {
            return Err(Error::shape(
                "coefficients",
                format!("{}", self.coeff_in_len()),
                format!("{}", s.len()),
            ));
        }
        Ok(self.coeff_weight.dot(s) + &self.coeff_bias)
    }

    pub(crate) fn clamp_coeff(&self, v: S) -> S {
        let upper = S::from_f64((self.k() - 1) as f64);
        v.max(S::zero()).min(upper)
    }

    /// Maps a softmaxed offset pair onto (floor-branch, ceil-branch) weights
    /// according to the configured convention.
    pub(crate) fn pair_weights(&self, softmaxed: (S, S)) -> (S, S) {
        match self.convention {
            BilinearConvention::Paper => softmaxed,
            BilinearConvention::Standard => (softmaxed.1, softmaxed.0),
        }
    }

    /// Deformable forward: blends the two branches adjacent to each
    /// coefficient and averages the `k` blended terms. Only referenced
    /// branches are evaluated.
    pub fn forward(&self, x: &Array1<S>, s: &Array1<S>) -> Result<Array1<S>> {
        Ok(self.forward_traced(x, s)?.0)
    }

    /// Forward pass that additionally records everything the backward pass
    /// needs: raw and clamped coefficients, per-term cell selections with
    /// their softmaxed offset pairs, and evaluated branch outputs.
    pub(crate) fn forward_traced(
        &self,
        x: &Array1<S>,
        s: &Array1<S>,
    ) -> Result<(Array1<S>, DeGroTrace<S>)> {
        let ks_raw = self.raw_coefficients(s)?;
        let ks = ks_raw.mapv(|v| self.clamp_coeff(v));
        let k = self.k();
        let mut branch_out: Vec<Option<Array1<S>>> = vec![None; k];
        let mut cells = Vec::with_capacity(k);
        let mut acc = Array1::zeros(self.out_len());
        for &k_i in ks.iter() {
            let lo = k_i.floor().as_f64() as usize;
            let hi = k_i.ceil().as_f64() as usize;
            let pair = offsets(k_i, k)?;
            let (w_lo, w_hi) = self.pair_weights(pair);
            if branch_out[lo].is_none() {
                branch_out[lo] = Some(self.branches[lo].forward(x)?);
            }
            if branch_out[hi].is_none() {
                branch_out[hi] = Some(self.branches[hi].forward(x)?);
            }
            acc.scaled_add(w_lo, branch_out[lo].as_ref().unwrap());
            acc.scaled_add(w_hi, branch_out[hi].as_ref().unwrap());
            cells.push(BlendCell {
                lo,
                hi,
                weight_p: pair.0,
                weight_q: pair.1,
            });
        }
        let inv_k = S::from_f64(1.0 / k as f64);
        Ok((acc * inv_k, DeGroTrace { ks_raw, cells, branch_out }))
    }
}

/// One term of the deformable blend: selected branch indices plus the
/// softmaxed offset pair in raw (floor-offset, ceil-offset) order.
#[derive(Debug, Clone)]
pub(crate) struct BlendCell<S> {
    pub lo: usize,
    pub hi: usize,
    pub weight_p: S,
    pub weight_q: S,
}

/// Intermediates of one deformable forward pass.
#[derive(Debug, Clone)]
pub(crate) struct DeGroTrace<S> {
    pub ks_raw: Array1<S>,
    pub cells: Vec<BlendCell<S>>,
    pub branch_out: Vec<Option<Array1<S>>>,
}
