//! Per-node confidence radii `cf(w)`.
//!
//! Two rules are provided:
//!
//! * the self-normalized bound
//!   `sqrt((4 / N) (2 ln(2 + log2 N) + ln(n² |A| / δ)))`, with `N = N_{n-1}(w)`;
//! * the multiplier bootstrap: `ĉv(δ)` is the conditional `(1 - δ)` quantile of
//!   `max_{w ∈ T, a} |Σ_k g_k d̂_k(w, a)|` over i.i.d. standard Gaussian
//!   multipliers `g`, and `cf(w) = ĉv(δ) / sqrt(N_{n-1}(w))` on the tuning set
//!   `T`. Nodes outside `T` fall back to the self-normalized rule at `δ / n`.
//!
//! A bootstrap replicate never rescans the sample. Multipliers are added at
//! the depth-`h_star` context of each transition and summed towards the root,
//! using `N*(w) = Σ_b N*(bw)`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::{CountedTree, NodeId};
use crate::error::{Error, Result};
use crate::rng;
use crate::sequences::Sym;

pub const MIN_REPLICATES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltySource {
    Bootstrap,
    SelfNorm,
}

impl PenaltySource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Bootstrap => "bootstrap",
            Self::SelfNorm => "selfnorm",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub cf: f64,
    pub source: PenaltySource,
}

/// Confidence radii for every node of one [`CountedTree`], indexed by
/// [`NodeId`].
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyTable {
    pub delta: f64,
    pub cv_hat: Option<f64>,
    pub entries: Vec<Penalty>,
}

impl PenaltyTable {
    pub fn cf(&self, id: NodeId) -> f64 {
        self.entries[id.index()].cf
    }

    pub fn get(&self, id: NodeId) -> Option<&Penalty> {
        self.entries.get(id.index())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rows `(path, N_ctx, cf, source)` in node order.
    pub fn rows(&self, tree: &CountedTree) -> Vec<PenaltyRow> {
        tree.node_ids()
            .zip(&self.entries)
            .map(|(id, p)| PenaltyRow {
                path: tree.path_text(id),
                n_ctx: tree.count_ctx(id),
                cf: p.cf,
                source: p.source,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyRow {
    pub path: String,
    pub n_ctx: u64,
    pub cf: f64,
    pub source: PenaltySource,
}

/// How the bootstrap tuning set `T` is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningRule {
    /// Nodes with `N_{n-1}(w) >= ceil(sqrt(n))`.
    SqrtN,
    /// Nodes with `N_{n-1}(w) >= t`.
    MinCount(u64),
    /// Fixed list of node paths.
    Nodes(Vec<Vec<Sym>>),
}

/// Bootstrap configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootCfg {
    pub replicates: usize,
    pub delta: f64,
    pub tuning: TuningRule,
    pub seed: u64,
    /// Divisor applied to `δ` for nodes outside `T`; `None` means `n`.
    pub fallback_delta_scale: Option<f64>,
}

impl BootCfg {
    pub fn new(replicates: usize, delta: f64, seed: u64) -> Self {
        Self {
            replicates,
            delta,
            tuning: TuningRule::SqrtN,
            seed,
            fallback_delta_scale: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_delta(self.delta)?;
        if self.replicates < MIN_REPLICATES {
            return Err(Error::Config(format!(
                "at least {MIN_REPLICATES} bootstrap replicates are required, got {}",
                self.replicates
            )));
        }
        match &self.tuning {
            TuningRule::MinCount(0) => Err(Error::Config("tuning threshold must be >= 1".into())),
            _ => Ok(()),
        }?;
        match self.fallback_delta_scale {
            Some(s) if !(s >= 1.0) => Err(Error::Config(format!(
                "fallback delta scale must be >= 1, got {s}"
            ))),
            _ => Ok(()),
        }
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::BadConfidence(delta))
    }
}

/// Self-normalized radius for a node with context count `count`.
pub fn cf_selfnorm(count: u64, n: usize, alphabet_size: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if count == 0 || n < 2 || alphabet_size < 2 {
        return Err(Error::OutOfDomain(format!(
            "cf_selfnorm needs N >= 1, n >= 2, |A| >= 2 (got {count}, {n}, {alphabet_size})"
        )));
    }
    let nn = count as f64;
    let n = n as f64;
    let loglog = 2.0 * (2.0 + nn.log2()).ln();
    let union = (n * n * alphabet_size as f64 / delta).ln();
    Ok((4.0 / nn * (loglog + union)).sqrt())
}

/// Self-normalized radius at confidence `delta` for every node.
pub fn selfnorm_table(tree: &CountedTree, delta: f64) -> Result<PenaltyTable> {
    let entries = tree
        .node_ids()
        .map(|id| {
            Ok(Penalty {
                cf: cf_selfnorm(tree.count_ctx(id), tree.sample_len(), tree.alphabet_size(), delta)?,
                source: PenaltySource::SelfNorm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PenaltyTable {
        delta,
        cv_hat: None,
        entries,
    })
}

/// Resolves the tuning set to node ids (sorted, deduplicated).
pub fn resolve_tuning_set(tree: &CountedTree, rule: &TuningRule) -> Result<Vec<NodeId>> {
    let ids: Vec<NodeId> = match rule {
        TuningRule::SqrtN => {
            let t = (tree.sample_len() as f64).sqrt().ceil() as u64;
            tree.node_ids().filter(|&id| tree.count_ctx(id) >= t).collect()
        }
        TuningRule::MinCount(t) => tree.node_ids().filter(|&id| tree.count_ctx(id) >= *t).collect(),
        TuningRule::Nodes(paths) => {
            let mut ids = paths
                .iter()
                .map(|p| tree.lookup(p))
                .collect::<Result<Vec<_>>>()?;
            ids.sort();
            ids.dedup();
            ids
        }
    };
    if ids.is_empty() {
        return Err(Error::EmptyTuningSet);
    }
    Ok(ids)
}

/// Reusable buffer for multiplier sums, `nodes × |A|`.
pub struct StarSums {
    a: usize,
    sums: Vec<f64>,
}

impl StarSums {
    pub fn new(tree: &CountedTree) -> Self {
        let a = tree.alphabet_size();
        Self {
            a,
            sums: vec![0.0; tree.len() * a],
        }
    }

    /// `N*_n(wa) = Σ_k g_k 1{context ends with w, X_k = a}` for every node,
    /// accumulated from the deepest contexts up to the root.
    pub fn accumulate(&mut self, tree: &CountedTree, g: &[f64]) {
        let a = self.a;
        self.sums.iter_mut().for_each(|x| *x = 0.0);
        for (tr, &gk) in tree.transitions().iter().zip(g) {
            self.sums[tr.context.index() * a + tr.next as usize] += gk;
        }
        for id in tree.node_ids().rev() {
            if let Some(parent) = tree.parent(id) {
                let (lo, hi) = self.sums.split_at_mut(id.index() * a);
                let child = &hi[..a];
                lo[parent.index() * a..parent.index() * a + a]
                    .iter_mut()
                    .zip(child)
                    .for_each(|(p, c)| *p += c);
            }
        }
    }

    pub fn row(&self, id: NodeId) -> &[f64] {
        &self.sums[id.index() * self.a..(id.index() + 1) * self.a]
    }
}

/// `max_{w ∈ T, a} |(N*(wa) − p̂(a|w) N*(w)) / sqrt(N_{n-1}(w))|` for the
/// current multiplier sums.
///
/// The numerator is evaluated as `(N(w) N*(wa) − N(wa) N*(w)) / N(w)`, which
/// is exactly zero whenever every multiplier is 1.
pub fn max_stat(tree: &CountedTree, tuning: &[NodeId], sums: &StarSums) -> f64 {
    let mut best = 0.0f64;
    for &id in tuning {
        let row = sums.row(id);
        let star_w: f64 = row.iter().sum();
        let count = tree.count_ctx(id) as f64;
        let scale = count * count.sqrt();
        for (&star_wa, &count_wa) in row.iter().zip(tree.next_counts(id)) {
            let num = count * star_wa - count_wa as f64 * star_w;
            best = best.max(num.abs() / scale);
        }
    }
    best
}

/// Bootstrap statistic for one multiplier vector `g` (one entry per counted
/// transition).
pub fn bootstrap_stat(tree: &CountedTree, tuning: &[NodeId], g: &[f64]) -> Result<f64> {
    if tuning.is_empty() {
        return Err(Error::EmptyTuningSet);
    }
    if g.len() != tree.transitions().len() {
        return Err(Error::OutOfDomain(format!(
            "expected {} multipliers, got {}",
            tree.transitions().len(),
            g.len()
        )));
    }
    let mut sums = StarSums::new(tree);
    sums.accumulate(tree, g);
    Ok(max_stat(tree, tuning, &sums))
}

/// `B` bootstrap replicates; replicate `r` draws from stream `(seed, r)`, so
/// the result does not depend on thread scheduling.
pub fn bootstrap_replicates(
    tree: &CountedTree,
    tuning: &[NodeId],
    replicates: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if tuning.is_empty() {
        return Err(Error::EmptyTuningSet);
    }
    let m = tree.transitions().len();
    Ok((0..replicates as u64)
        .into_par_iter()
        .map_init(
            || (StarSums::new(tree), vec![0.0; m]),
            |(sums, g), r| {
                let mut rng = rng::stream(seed, r);
                g.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
                sums.accumulate(tree, g);
                max_stat(tree, tuning, sums)
            },
        )
        .collect())
}

/// Bootstrap penalty table.
pub fn cf_bootstrap(tree: &CountedTree, cfg: &BootCfg) -> Result<PenaltyTable> {
    cfg.validate()?;
    let tuning = resolve_tuning_set(tree, &cfg.tuning)?;
    let mut stats = bootstrap_replicates(tree, &tuning, cfg.replicates, cfg.seed)?;
    let cv = rng::upper_quantile(&mut stats, cfg.delta);
    table_from_cv(tree, &tuning, cv, cfg)
}

/// Fills the table for a known critical value.
pub fn table_from_cv(
    tree: &CountedTree,
    tuning: &[NodeId],
    cv: f64,
    cfg: &BootCfg,
) -> Result<PenaltyTable> {
    let n = tree.sample_len();
    let scale = cfg.fallback_delta_scale.unwrap_or(n as f64);
    let fallback_delta = cfg.delta / scale;
    let mut in_t = vec![false; tree.len()];
    tuning.iter().for_each(|id| in_t[id.index()] = true);
    let entries = tree
        .node_ids()
        .map(|id| {
            let count = tree.count_ctx(id);
            Ok(if in_t[id.index()] {
                Penalty {
                    cf: cv / (count as f64).sqrt(),
                    source: PenaltySource::Bootstrap,
                }
            } else {
                Penalty {
                    cf: cf_selfnorm(count, n, tree.alphabet_size(), fallback_delta)?,
                    source: PenaltySource::SelfNorm,
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PenaltyTable {
        delta: cfg.delta,
        cv_hat: Some(cv),
        entries,
    })
}
