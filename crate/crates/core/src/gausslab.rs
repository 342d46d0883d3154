//! Covariance machinery for leaf martingales of a context tree and Monte-Carlo
//! checks of the Gaussian max-coupling and anti-concentration bounds.
//!
//! Matrices indexed by `T × A` use the row order "node-major": row
//! `i * |A| + a` belongs to node `i` (in [`SOperator::nodes`] order) and
//! symbol `a`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::normal;
use crate::rng::{self, Rng};
use crate::sequences::{is_suffix, sample_vlmc, Sym, SuffixStr, VlmcModel};

/// Eigenvalues above this (negative) level are clipped to zero when
/// factoring; anything lower is rejected.
pub const PSD_CLIP: f64 = -1e-8;
/// Number of pooled-quantile points on which Kolmogorov distances are read.
pub const KS_GRID: usize = 512;

/// A symmetric covariance matrix with optional coordinate labels.
#[derive(Clone, Debug, PartialEq)]
pub struct CovSpec {
    pub v: DMatrix<f64>,
    pub labels: Option<Vec<String>>,
}

impl CovSpec {
    pub fn new(v: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        if !v.is_square() {
            return Err(Error::OutOfDomain("covariance must be square".into()));
        }
        let asym = (&v - v.transpose()).amax();
        if !(asym <= 1e-12) {
            return Err(Error::OutOfDomain(format!("covariance not symmetric ({asym:e})")));
        }
        if let Some(l) = &labels {
            if l.len() != v.nrows() {
                return Err(Error::OutOfDomain("label count differs from dimension".into()));
            }
        }
        Ok(Self { v, labels })
    }

    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        SymmetricEigen::new(self.v.clone()).eigenvalues.min()
    }

    pub fn max_variance(&self) -> f64 {
        self.v.diagonal().max()
    }
}

/// `L` with `L L' = V`, from an eigendecomposition with small negative
/// eigenvalues clipped to zero.
pub fn psd_factor(v: &CovSpec) -> Result<DMatrix<f64>> {
    if v.dim() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(v.v.clone());
    let min = eig.eigenvalues.min();
    if min < PSD_CLIP {
        return Err(Error::NotPsd(min));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

fn check_prob_vector(p: &[f64]) -> Result<()> {
    let s: f64 = p.iter().sum();
    if p.is_empty() || p.iter().any(|&x| !(x >= 0.0)) || (s - 1.0).abs() > 1e-12 {
        return Err(Error::NotAProbabilityVector(format!("{p:?}")));
    }
    Ok(())
}

/// `C = diag(p) - p p'`.
pub fn cw_matrix(p: &[f64]) -> Result<DMatrix<f64>> {
    check_prob_vector(p)?;
    let pv = DVector::from_column_slice(p);
    Ok(DMatrix::from_diagonal(&pv) - &pv * pv.transpose())
}

/// `C^{1/2} = (I - p 1') diag(√p)`, a square root with `M M' = C`.
pub fn cw_sqrt(p: &[f64]) -> Result<DMatrix<f64>> {
    check_prob_vector(p)?;
    let k = p.len();
    Ok(DMatrix::from_fn(k, k, |i, j| {
        let proj = if i == j { 1.0 } else { 0.0 } - p[i];
        proj * p[j].sqrt()
    }))
}

/// The operator `S: e_w ↦ Σ_{x ⪯ w} √(π(w)/π(x)) e_x` from leaves to all
/// nodes of a complete tree.
#[derive(Clone, Debug)]
pub struct SOperator {
    pub nodes: Vec<SuffixStr>,
    pub leaves: Vec<SuffixStr>,
    pub node_pi: Vec<f64>,
    pub leaf_pi: Vec<f64>,
    /// `|nodes| × |leaves|`.
    pub matrix: DMatrix<f64>,
}

impl SOperator {
    /// `S ⊗ I_A`, acting on node-major `T × A` coordinates.
    pub fn kron_identity(&self, a: usize) -> DMatrix<f64> {
        let s = &self.matrix;
        DMatrix::from_fn(s.nrows() * a, s.ncols() * a, |r, c| {
            if r % a == c % a {
                s[(r / a, c / a)]
            } else {
                0.0
            }
        })
    }
}

/// `S` for `model`, using the leaf `pi` stored in the model or, when absent,
/// the stationary law.
pub fn s_operator(model: &VlmcModel) -> Result<SOperator> {
    let leaf_pi = match model.leaves().iter().all(|l| l.pi.is_some()) {
        true => model.leaves().iter().map(|l| l.pi.unwrap()).collect(),
        false => model.leaf_pi(&model.stationary()?)?,
    };
    let nodes = model.nodes();
    let node_pi: HashMap<SuffixStr, f64> = nodes
        .iter()
        .map(|x| {
            let s = model
                .leaves()
                .iter()
                .zip(&leaf_pi)
                .filter(|(l, _)| x.is_suffix_of(&l.path))
                .map(|(_, p)| p)
                .sum();
            (x.clone(), s)
        })
        .collect();
    s_operator_with_pi(model, &node_pi)
}

/// `S` for `model` with explicit node probabilities, which must be positive
/// and satisfy `π(x) = Σ_b π(bx)` at every internal node.
pub fn s_operator_with_pi(model: &VlmcModel, pi: &HashMap<SuffixStr, f64>) -> Result<SOperator> {
    let nodes = model.nodes();
    let leaves: Vec<SuffixStr> = model.leaves().iter().map(|l| l.path.clone()).collect();
    let a = model.alphabet().len();
    let get = |x: &SuffixStr| {
        pi.get(x)
            .copied()
            .ok_or_else(|| Error::InconsistentPi(format!("no probability for node {x}")))
    };
    let node_pi = nodes.iter().map(get).collect::<Result<Vec<_>>>()?;
    let leaf_pi = leaves.iter().map(get).collect::<Result<Vec<_>>>()?;
    for (x, &px) in nodes.iter().zip(&node_pi) {
        if !(px > 0.0) {
            return Err(Error::InconsistentPi(format!("π({x}) = {px} is not positive")));
        }
        if leaves.contains(x) {
            continue;
        }
        let kids: f64 = (0..a as Sym).map(|b| get(&x.child(b))).sum::<Result<f64>>()?;
        if (kids - px).abs() > 1e-10 {
            return Err(Error::InconsistentPi(format!(
                "π({x}) = {px} but its children sum to {kids}"
            )));
        }
    }
    let root = node_pi[0];
    if (root - 1.0).abs() > 1e-10 {
        return Err(Error::InconsistentPi(format!("root probability {root}")));
    }
    let matrix = DMatrix::from_fn(nodes.len(), leaves.len(), |i, j| {
        if nodes[i].is_suffix_of(&leaves[j]) {
            (leaf_pi[j] / node_pi[i]).sqrt()
        } else {
            0.0
        }
    });
    Ok(SOperator {
        nodes,
        leaves,
        node_pi,
        leaf_pi,
        matrix,
    })
}

fn block_diag(blocks: &[DMatrix<f64>], a: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(blocks.len() * a, blocks.len() * a);
    for (i, b) in blocks.iter().enumerate() {
        m.view_mut((i * a, i * a), (a, a)).copy_from(b);
    }
    m
}

fn node_labels(model: &VlmcModel, nodes: &[SuffixStr]) -> Vec<String> {
    let alpha = model.alphabet();
    nodes
        .iter()
        .flat_map(|x| {
            let p = alpha.format_path(x.as_slice());
            alpha.tokens().iter().map(move |t| format!("{p}:{t}"))
        })
        .collect()
}

/// `V = S (⊕_w C_w) S'` and `V_δ = S (⊕_w (ε C_w + (1+ε)(2√|A|+1) γ I)) S'`.
pub fn build_v(model: &VlmcModel, eps: f64, gamma: f64) -> Result<(CovSpec, CovSpec)> {
    if !(0.0..1.0).contains(&eps) || !(gamma >= 0.0) {
        return Err(Error::OutOfDomain(format!("need eps in [0,1) and gamma >= 0 (got {eps}, {gamma})")));
    }
    let s = s_operator(model)?;
    let a = model.alphabet().len();
    let big_s = s.kron_identity(a);
    let inflate = (1.0 + eps) * (2.0 * (a as f64).sqrt() + 1.0) * gamma;
    let mut blocks = Vec::new();
    let mut blocks_delta = Vec::new();
    for leaf in model.leaves() {
        let c = cw_matrix(&leaf.probs)?;
        blocks_delta.push(&c * eps + DMatrix::identity(a, a) * inflate);
        blocks.push(c);
    }
    let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
    let v = sym(&big_s * block_diag(&blocks, a) * big_s.transpose());
    let vd = sym(&big_s * block_diag(&blocks_delta, a) * big_s.transpose());
    let labels = node_labels(model, &s.nodes);
    Ok((CovSpec::new(v, Some(labels.clone()))?, CovSpec::new(vd, Some(labels))?))
}

/// `λ_min(diag(q) - qq' + (2√|A|+1) max_a |p_a - q_a| I - (diag(p) - pp'))`,
/// which is nonnegative for any two probability vectors.
pub fn cw_perturbation_gap(p: &[f64], q: &[f64]) -> Result<f64> {
    let (cp, cq) = (cw_matrix(p)?, cw_matrix(q)?);
    let a = p.len();
    let dist = p.iter().zip(q).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let m = cq + DMatrix::identity(a, a) * ((2.0 * (a as f64).sqrt() + 1.0) * dist) - cp;
    Ok(SymmetricEigen::new(m).eigenvalues.min())
}

/// `‖S (Q - Q̃) S'‖_∞ - max_w ‖Q_w - Q̃_w‖_∞` (entrywise norms) for
/// block-diagonal `Q`, `Q̃`; nonpositive by construction of `S`.
pub fn s_transfer_excess(s: &SOperator, q: &[DMatrix<f64>], q_tilde: &[DMatrix<f64>]) -> f64 {
    let a = q[0].nrows();
    let diffs: Vec<DMatrix<f64>> = q.iter().zip(q_tilde).map(|(x, y)| x - y).collect();
    let rhs = diffs.iter().map(|d| d.amax()).fold(0.0, f64::max);
    let big_s = s.kron_identity(a);
    let lhs = (&big_s * block_diag(&diffs, a) * big_s.transpose()).amax();
    lhs - rhs
}

/// `max_{x ⪯ y} Σ_{leaves w ⪰ y} π(w) / √(π(x) π(y))` over comparable node
/// pairs; at most 1 for consistent `π`.
pub fn subtree_mass_ratio(s: &SOperator) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, x) in s.nodes.iter().enumerate() {
        for (j, y) in s.nodes.iter().enumerate() {
            if !x.is_suffix_of(y) {
                continue;
            }
            let mass: f64 = s
                .leaves
                .iter()
                .zip(&s.leaf_pi)
                .filter(|(w, _)| y.is_suffix_of(w))
                .map(|(_, p)| p)
                .sum();
            worst = worst.max(mass / (s.node_pi[i] * s.node_pi[j]).sqrt());
        }
    }
    worst
}

/// Uniform draw from the simplex, with a coordinate forced to zero now and
/// then so boundary cases are exercised.
pub fn random_prob_vector(a: usize, rng: &mut impl RngCore) -> Vec<f64> {
    let mut p: Vec<f64> = (0..a).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    if a > 1 && rng.random::<f64>() < 0.1 {
        p[rng.random_range(0..a)] = 0.0;
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

/// Random complete tree with random leaf laws and random positive leaf `pi`.
pub fn random_pi_tree(alphabet_size: usize, max_depth: usize, rng: &mut impl RngCore) -> VlmcModel {
    let tokens: Vec<String> = (0..alphabet_size).map(|i| ((b'a' + i as u8) as char).to_string()).collect();
    let alphabet = crate::sequences::Alphabet::new(tokens).expect("distinct tokens");
    let mut leaves = Vec::new();
    let mut stack = vec![SuffixStr::empty()];
    while let Some(w) = stack.pop() {
        let split = w.len() < max_depth && (w.is_empty() || rng.random::<f64>() < 0.55);
        if split {
            (0..alphabet_size as Sym).for_each(|b| stack.push(w.child(b)));
        } else {
            leaves.push(w);
        }
    }
    let weights: Vec<f64> = leaves.iter().map(|_| 0.01 + rng.random::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    let mut pis: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let drift: f64 = 1.0 - pis.iter().sum::<f64>();
    pis[0] += drift;
    let ctx = leaves
        .into_iter()
        .zip(pis)
        .map(|(path, pi)| crate::sequences::Context {
            path,
            probs: random_prob_vector(alphabet_size, rng),
            pi: Some(pi),
        })
        .collect();
    VlmcModel::new(alphabet, ctx).expect("random tree is complete")
}

/// Anti-concentration bound for the maximum of a centered Gaussian vector,
/// valid for `t >= σ̄ Φ⁻¹(0.95)` and `ε < t/8`:
/// `2ε (√log d / σ̄)(√(2 log 2d) + 3)`.
pub fn anticoncentration_bound(d: usize, sigma_bar: f64, t: f64, eps: f64) -> Result<f64> {
    if d < 2 || !(sigma_bar > 0.0) {
        return Err(Error::OutOfDomain(format!("need d >= 2 and sigma_bar > 0 (got {d}, {sigma_bar})")));
    }
    if !(t >= sigma_bar * normal::inv_cdf(0.95)) || !(eps >= 0.0 && eps < t / 8.0) {
        return Err(Error::OutOfDomain(format!(
            "need t >= sigma_bar * z_0.95 and 0 <= eps < t/8 (got t={t}, eps={eps})"
        )));
    }
    let d = d as f64;
    Ok(2.0 * eps * d.ln().sqrt() / sigma_bar * ((2.0 * (2.0 * d).ln()).sqrt() + 3.0))
}

/// Bound using the smallest variance as well, valid uniformly over
/// `t >= 2σ̄` for `ε ∈ (0, σ̄/4)`:
/// `2ε (√(2 log 2d) + 3) min(1/σ_min, √log d / σ̄)`.
pub fn anticoncentration_bound_min(d: usize, sigma_bar: f64, sigma_min: f64, eps: f64) -> Result<f64> {
    if d < 2 || !(sigma_bar > 0.0) || !(sigma_min >= 0.0 && sigma_min <= sigma_bar) {
        return Err(Error::OutOfDomain(format!(
            "need d >= 2 and 0 <= sigma_min <= sigma_bar, sigma_bar > 0 (got {d}, {sigma_min}, {sigma_bar})"
        )));
    }
    if !(eps > 0.0 && eps < sigma_bar / 4.0) {
        return Err(Error::OutOfDomain(format!("need eps in (0, sigma_bar/4) (got {eps})")));
    }
    let d = d as f64;
    let inv_min = if sigma_min > 0.0 { 1.0 / sigma_min } else { f64::INFINITY };
    let factor = inv_min.min(d.ln().sqrt() / sigma_bar);
    Ok(2.0 * eps * ((2.0 * (2.0 * d).ln()).sqrt() + 3.0) * factor)
}

/// Gaussian vectors that can be sampled without a dense factor when the
/// structure allows it.
#[derive(Clone, Debug)]
pub enum GaussianDesign {
    /// Independent coordinates with the given standard deviations.
    Independent { sigmas: Vec<f64> },
    /// Unit variances scaled by `sigma`, pairwise correlation `rho >= 0`.
    Equicorrelated { d: usize, rho: f64, sigma: f64 },
    /// `H = L z` for a factor `L` of the covariance.
    Factor(DMatrix<f64>),
}

impl GaussianDesign {
    pub fn from_cov(v: &CovSpec) -> Result<Self> {
        Ok(Self::Factor(psd_factor(v)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Independent { sigmas } => sigmas.len(),
            Self::Equicorrelated { d, .. } => *d,
            Self::Factor(l) => l.nrows(),
        }
    }

    /// Largest coordinate standard deviation.
    pub fn sigma_bar(&self) -> f64 {
        match self {
            Self::Independent { sigmas } => sigmas.iter().copied().fold(0.0, f64::max),
            Self::Equicorrelated { sigma, .. } => *sigma,
            Self::Factor(l) => l.row_iter().map(|r| r.norm()).fold(0.0, f64::max),
        }
    }

    /// Smallest coordinate standard deviation.
    pub fn sigma_min(&self) -> f64 {
        match self {
            Self::Independent { sigmas } => sigmas.iter().copied().fold(f64::INFINITY, f64::min),
            Self::Equicorrelated { sigma, .. } => *sigma,
            Self::Factor(l) => l.row_iter().map(|r| r.norm()).fold(f64::INFINITY, f64::min),
        }
    }

    /// Covariance matrix of the design.
    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            Self::Independent { sigmas } => {
                DMatrix::from_diagonal(&DVector::from_iterator(sigmas.len(), sigmas.iter().map(|s| s * s)))
            }
            Self::Equicorrelated { d, rho, sigma } => DMatrix::from_fn(*d, *d, |i, j| {
                sigma * sigma * if i == j { 1.0 } else { *rho }
            }),
            Self::Factor(l) => l * l.transpose(),
        }
    }

    /// Fills `out` with one draw.
    pub fn draw(&self, rng: &mut Rng, out: &mut [f64]) {
        match self {
            Self::Independent { sigmas } => {
                for (o, s) in out.iter_mut().zip(sigmas) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = s * z;
                }
            }
            Self::Equicorrelated { rho, sigma, .. } => {
                let common: f64 = StandardNormal.sample(rng);
                let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
                for o in out.iter_mut() {
                    let e: f64 = StandardNormal.sample(rng);
                    *o = sigma * (a * common + b * e);
                }
            }
            Self::Factor(l) => {
                let z = DVector::from_fn(l.ncols(), |_, _| StandardNormal.sample(rng));
                let h = l * z;
                out.copy_from_slice(h.as_slice());
            }
        }
    }

    /// `max_j H_j` for one draw.
    pub fn draw_max(&self, rng: &mut Rng) -> f64 {
        let mut buf = vec![0.0; self.dim()];
        self.draw(rng, &mut buf);
        buf.into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `max_j H_j` over `draws` independent draws; draw `i` uses stream `i`.
pub fn sample_maxima(design: &GaussianDesign, draws: usize, seed: u64) -> Vec<f64> {
    if design.dim() == 0 {
        return vec![0.0; draws];
    }
    (0..draws)
        .into_par_iter()
        .map(|i| design.draw_max(&mut rng::stream(seed, i as u64)))
        .collect()
}

/// Fraction of `values` within `eps` of `t`.
pub fn band_frequency(values: &[f64], t: f64, eps: f64) -> f64 {
    values.iter().filter(|&&x| (x - t).abs() <= eps).count() as f64 / values.len() as f64
}

/// Empirical `(1-δ)` quantile of `max_j H_j`, `H ~ N(0, V)`.
pub fn max_gaussian_quantile(v: &CovSpec, delta: f64, draws: usize, seed: u64) -> Result<f64> {
    crate::penalties::check_delta(delta)?;
    if draws < 1000 {
        return Err(Error::OutOfDomain(format!("need at least 1000 draws (got {draws})")));
    }
    let design = GaussianDesign::from_cov(v)?;
    let mut maxima = sample_maxima(&design, draws, seed);
    Ok(rng::upper_quantile(&mut maxima, delta))
}

/// Largest gap between two empirical CDFs, read at [`KS_GRID`] quantiles of
/// the pooled sample.
pub fn kolmogorov_distance(x: &[f64], y: &[f64]) -> f64 {
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let (xs, ys) = (sorted(x), sorted(y));
    let mut pooled = [xs.as_slice(), ys.as_slice()].concat();
    pooled.sort_by(f64::total_cmp);
    let ecdf = |s: &[f64], t: f64| s.partition_point(|&v| v <= t) as f64 / s.len() as f64;
    (0..KS_GRID)
        .map(|k| {
            let q = (k as f64 + 0.5) / KS_GRID as f64;
            let t = pooled[((q * pooled.len() as f64) as usize).min(pooled.len() - 1)];
            (ecdf(&xs, t) - ecdf(&ys, t)).abs()
        })
        .fold(0.0, f64::max)
}

/// A martingale-difference array `ξ_1..ξ_n` in `R^d`.
pub trait MartingaleGenerator: Sync {
    fn dim(&self) -> usize;
    fn steps(&self) -> usize;
    /// Terminal value `Σ_t ξ_t` of one path.
    fn terminal(&self, rng: &mut Rng) -> Vec<f64>;
}

/// `ξ_t = H_t / √n` with `H_t` i.i.d. from a Gaussian design.
#[derive(Clone, Debug)]
pub struct GaussianSteps {
    pub design: GaussianDesign,
    pub n: usize,
}

impl MartingaleGenerator for GaussianSteps {
    fn dim(&self) -> usize {
        self.design.dim()
    }

    fn steps(&self) -> usize {
        self.n
    }

    fn terminal(&self, rng: &mut Rng) -> Vec<f64> {
        let d = self.dim();
        let mut sum = vec![0.0; d];
        let mut buf = vec![0.0; d];
        for _ in 0..self.n {
            self.design.draw(rng, &mut buf);
            sum.iter_mut().zip(&buf).for_each(|(s, b)| *s += b);
        }
        let scale = (self.n as f64).sqrt();
        sum.iter_mut().for_each(|s| *s /= scale);
        sum
    }
}

/// One-dimensional `ξ_t = ±1/√n` with fair signs.
#[derive(Clone, Copy, Debug)]
pub struct RademacherSteps {
    pub n: usize,
}

impl MartingaleGenerator for RademacherSteps {
    fn dim(&self) -> usize {
        1
    }

    fn steps(&self) -> usize {
        self.n
    }

    fn terminal(&self, rng: &mut Rng) -> Vec<f64> {
        let mut plus = 0u64;
        let mut left = self.n;
        while left > 0 {
            let take = left.min(64);
            let bits = rng.next_u64() & if take == 64 { u64::MAX } else { (1u64 << take) - 1 };
            plus += bits.count_ones() as u64;
            left -= take;
        }
        vec![(2.0 * plus as f64 - self.n as f64) / (self.n as f64).sqrt()]
    }
}

/// Bounded increments with deterministic conditional covariance
/// `V/n`, `V` equicorrelated with parameter `rho`:
/// `ξ_tj = s_t (√ρ c_t + √(1-ρ) e_tj) / √n`, where `c_t`, `e_tj` are fair
/// signs and `s_t = ±1` is the sign of the running sum of coordinate 0.
/// The predictable flip keeps the array a martingale difference without
/// independent increments.
#[derive(Clone, Copy, Debug)]
pub struct EquicorrelatedSigns {
    pub d: usize,
    pub n: usize,
    pub rho: f64,
}

impl EquicorrelatedSigns {
    pub fn covariance(&self) -> GaussianDesign {
        GaussianDesign::Equicorrelated {
            d: self.d,
            rho: self.rho,
            sigma: 1.0,
        }
    }
}

impl MartingaleGenerator for EquicorrelatedSigns {
    fn dim(&self) -> usize {
        self.d
    }

    fn steps(&self) -> usize {
        self.n
    }

    fn terminal(&self, rng: &mut Rng) -> Vec<f64> {
        let (a, b) = (self.rho.sqrt(), (1.0 - self.rho).sqrt());
        let scale = 1.0 / (self.n as f64).sqrt();
        let mut sum = vec![0.0; self.d];
        let mut bits = 0u64;
        let mut avail = 0;
        let mut sign = || {
            if avail == 0 {
                bits = rng.next_u64();
                avail = 64;
            }
            avail -= 1;
            let s = if bits & 1 == 1 { 1.0 } else { -1.0 };
            bits >>= 1;
            s
        };
        for _ in 0..self.n {
            let flip = if sum[0] >= 0.0 { 1.0 } else { -1.0 };
            let common = a * sign();
            for s in sum.iter_mut() {
                *s += flip * scale * (common + b * sign());
            }
        }
        sum
    }
}

/// Kolmogorov distance between the law of `max_j Σ_t ξ_tj` and that of
/// `max_j H_j`, `H` from `reference`, each from `draws` independent runs.
pub fn coupling_distance(
    gen: &dyn MartingaleGenerator,
    reference: &GaussianDesign,
    draws: usize,
    seed: u64,
) -> f64 {
    let z_seed = rng::derive_seed(seed, 1);
    let z: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|i| {
            gen.terminal(&mut rng::stream(z_seed, i as u64))
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let h = sample_maxima(reference, draws, rng::derive_seed(seed, 2));
    kolmogorov_distance(&z, &h)
}

/// Monte-Carlo frequency of `max_{w ∈ T} |N_{n-1}(w) / (π(w) n) - 1| > ε`,
/// with transitions counted from position `max(1, max |w|) + 1` on.
pub fn typicality_estimate(
    model: &VlmcModel,
    tree: &[Vec<Sym>],
    eps: f64,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let stat = model.stationary()?;
    let pis = tree
        .iter()
        .map(|w| {
            let p = stat.string_prob(model, w)?;
            if p > 0.0 {
                Ok(p)
            } else {
                Err(Error::ZeroProbabilitySuffix(model.alphabet().format_path(w)))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let h = tree.iter().map(Vec::len).max().unwrap_or(0).max(1);
    if n <= h {
        return Err(Error::SampleTooShort { n, h_star: h });
    }
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<bool> {
            let path = sample_vlmc(model, n, None, rng::derive_seed(seed, t as u64))?;
            let x = &path.symbols;
            for (w, &p) in tree.iter().zip(&pis) {
                let count = (h..n).filter(|&i| x[..i].ends_with(w)).count();
                if (count as f64 / (p * n as f64) - 1.0).abs() > eps {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().filter(|&&b| b).count() as f64 / trials as f64)
}

/// Ratio of the empirical `E‖ξ̃_t‖³_∞` along a simulated path to
/// `Σ_{leaves} π(w)^{-1/2}`, where `ξ̃_t = √n ξ_t` is the increment of the
/// full martingale at scale one. Stays at most 1.
pub fn third_moment_ratio(model: &VlmcModel, steps: usize, seed: u64) -> Result<f64> {
    let s = s_operator(model)?;
    let path = sample_vlmc(model, steps, None, seed)?;
    let mut hist = path.prefix.clone();
    let mut acc = 0.0;
    for &x in &path.symbols {
        let leaf = model.context_index(&hist)?;
        let probs = &model.leaves()[leaf].probs;
        let dev = probs
            .iter()
            .enumerate()
            .map(|(a, p)| ((a == x as usize) as u8 as f64 - p).abs())
            .fold(0.0, f64::max);
        let lp = &model.leaves()[leaf].path;
        let smallest = s
            .nodes
            .iter()
            .zip(&s.node_pi)
            .filter(|(n, _)| is_suffix(n.as_slice(), lp.as_slice()))
            .map(|(_, p)| *p)
            .fold(f64::INFINITY, f64::min);
        acc += (dev / smallest.sqrt()).powi(3);
        hist.push(x);
    }
    let bound: f64 = s.leaf_pi.iter().filter(|&&p| p > 0.0).map(|p| p.powf(-0.5)).sum();
    Ok(acc / steps as f64 / bound)
}
