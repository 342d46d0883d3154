//! Lepski-type pruning of the empirical tree and the resulting estimator.
//!
//! `CanRmv(w)` holds when every pair `(w', w'')` with `w'` extending `w` and
//! `w''` extending `par(w)` (both in `E_n`) satisfies
//! `max_a |p̂(a|w') - p̂(a|w'')| <= c (cf(w') + cf(w''))`. The pair condition
//! splits into two one-sided inequalities, so it is enough to keep, per node
//! and symbol, the largest lower end `p̂ - c·cf` and the smallest upper end
//! `p̂ + c·cf` over the subtree. Every node then costs `O(|A|)`.

use std::collections::HashMap;

use crate::counting::{pbar_table, CountedTree, NodeId};
use crate::error::{Error, Result};
use crate::penalties::PenaltyTable;
use crate::sequences::{is_suffix, Alphabet, Context, FitInfo, Sym, SuffixStr, VlmcModel};

pub const DEFAULT_C: f64 = 1.1;

fn check_c(c: f64) -> Result<()> {
    if c > 1.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::BadConstant(c))
    }
}

fn check_table(tree: &CountedTree, pen: &PenaltyTable) -> Result<()> {
    if pen.len() != tree.len() {
        return Err(Error::MissingPenalty(format!(
            "table has {} entries for {} nodes",
            pen.len(),
            tree.len()
        )));
    }
    Ok(())
}

/// Per-node, per-symbol interval envelopes over each subtree.
#[derive(Clone, Debug)]
pub struct Envelopes {
    a: usize,
    lo_max: Vec<f64>,
    hi_min: Vec<f64>,
}

impl Envelopes {
    pub fn new(tree: &CountedTree, pen: &PenaltyTable, c: f64) -> Result<Self> {
        check_c(c)?;
        check_table(tree, pen)?;
        let a = tree.alphabet_size();
        let mut lo_max = vec![f64::NEG_INFINITY; a * tree.len()];
        let mut hi_min = vec![f64::INFINITY; a * tree.len()];
        for id in tree.node_ids().rev() {
            let r = c * pen.cf(id);
            let base = id.index() * a;
            for s in 0..a {
                let p = tree.phat(id, s as Sym);
                lo_max[base + s] = lo_max[base + s].max(p - r);
                hi_min[base + s] = hi_min[base + s].min(p + r);
            }
            if let Some(par) = tree.parent(id) {
                let pb = par.index() * a;
                for s in 0..a {
                    lo_max[pb + s] = lo_max[pb + s].max(lo_max[base + s]);
                    hi_min[pb + s] = hi_min[pb + s].min(hi_min[base + s]);
                }
            }
        }
        Ok(Self { a, lo_max, hi_min })
    }

    /// `CanRmv` for a node; the root is never removable.
    pub fn can_remove(&self, tree: &CountedTree, id: NodeId) -> bool {
        let Some(par) = tree.parent(id) else {
            return false;
        };
        let (w, p) = (id.index() * self.a, par.index() * self.a);
        (0..self.a).all(|s| {
            self.lo_max[w + s] <= self.hi_min[p + s] && self.lo_max[p + s] <= self.hi_min[w + s]
        })
    }
}

/// `CanRmv(w)` for the node at `path`.
pub fn can_remove(tree: &CountedTree, pen: &PenaltyTable, c: f64, path: &[Sym]) -> Result<bool> {
    let id = tree.lookup(path)?;
    Ok(Envelopes::new(tree, pen, c)?.can_remove(tree, id))
}

/// The pruned tree `T̂_n` with its estimated transition laws.
#[derive(Clone, Debug)]
pub struct EstimatorOutput {
    alphabet: Alphabet,
    kept: Vec<Vec<Sym>>,
    probs: Vec<Vec<f64>>,
    index: HashMap<Vec<Sym>, usize>,
    depth: usize,
    pub c: f64,
    pub h_star: usize,
    pub penalties: PenaltyTable,
}

/// Prunes `tree`: keeps exactly the nodes with `CanRmv = false`.
pub fn prune(tree: &CountedTree, pen: &PenaltyTable, c: f64) -> Result<EstimatorOutput> {
    let env = Envelopes::new(tree, pen, c)?;
    let mut kept = Vec::new();
    let mut probs = Vec::new();
    for id in tree.node_ids() {
        if !env.can_remove(tree, id) {
            kept.push(tree.path(id).to_vec());
            probs.push(tree.phat_row(id));
        }
    }
    let index = kept.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
    let depth = kept.iter().map(Vec::len).max().unwrap_or(0);
    Ok(EstimatorOutput {
        alphabet: tree.alphabet().clone(),
        kept,
        probs,
        index,
        depth,
        c,
        h_star: tree.h_star(),
        penalties: pen.clone(),
    })
}

impl EstimatorOutput {
    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// Nodes of `T̂_n`, ordered by depth then path.
    pub fn nodes(&self) -> &[Vec<Sym>] {
        &self.kept
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn contains(&self, w: &[Sym]) -> bool {
        self.index.contains_key(w)
    }

    /// `p̂(·|w)` for a kept node.
    pub fn probs(&self, w: &[Sym]) -> Option<&[f64]> {
        self.index.get(w).map(|&i| self.probs[i].as_slice())
    }

    /// Longest suffix of `history` in `T̂_n`.
    pub fn context(&self, history: &[Sym]) -> &[Sym] {
        let mut best = 0;
        for d in 1..=history.len().min(self.depth) {
            match self.index.get(&history[history.len() - d..]) {
                Some(&i) => best = i,
                None => break,
            }
        }
        &self.kept[best]
    }

    /// `P̂_n(a|x) = p̂_n(a|T̂_n(x))`.
    pub fn predict(&self, history: &[Sym], a: Sym) -> f64 {
        self.probs(self.context(history)).expect("context is kept")[a as usize]
    }

    /// Whether every node of `T̂_n` is a node of the model's tree.
    pub fn is_contained_in(&self, model: &VlmcModel) -> bool {
        self.kept.iter().all(|w| model.contains_node(w))
    }

    /// Completes `T̂_n` into a context tree: each missing child of an internal
    /// node becomes a leaf carrying its parent's law.
    pub fn to_model(&self) -> Result<VlmcModel> {
        let a = self.alphabet.len();
        let mut leaves = Vec::new();
        for (w, probs) in self.kept.iter().zip(&self.probs) {
            let internal = (0..a as Sym).any(|b| self.index.contains_key(&child_path(w, b)));
            if !internal {
                leaves.push(leaf(w.clone(), probs));
                continue;
            }
            for b in 0..a as Sym {
                let ch = child_path(w, b);
                if !self.index.contains_key(&ch) {
                    leaves.push(leaf(ch, probs));
                }
            }
        }
        let info = FitInfo {
            h_star: self.h_star,
            c: self.c,
            delta: self.penalties.delta,
            kept: self.kept.iter().map(|w| self.alphabet.format_path(w)).collect(),
        };
        Ok(VlmcModel::new(self.alphabet.clone(), leaves)?.with_fitted(info))
    }

    /// JSON in the model schema, loadable with [`VlmcModel::from_json`].
    pub fn to_json(&self) -> Result<String> {
        Ok(self.to_model()?.to_json())
    }
}

fn child_path(w: &[Sym], b: Sym) -> Vec<Sym> {
    let mut p = Vec::with_capacity(w.len() + 1);
    p.push(b);
    p.extend_from_slice(w);
    p
}

fn leaf(path: Vec<Sym>, probs: &[f64]) -> Context {
    Context {
        path: SuffixStr::new(path),
        probs: probs.to_vec(),
        pi: None,
    }
}

/// Result of checking the `Good_*` event.
#[derive(Clone, Debug, PartialEq)]
pub struct GoodEvent {
    pub holds: bool,
    /// Node and symbol with the largest `|p̄ - p̂| - cf`.
    pub worst: Option<Offender>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Offender {
    pub node: NodeId,
    pub symbol: Sym,
    pub gap: f64,
    pub cf: f64,
}

/// Checks `|p̄_n(a|w) - p̂_n(a|w)| <= cf(w)` over all nodes and symbols.
/// `prefix` holds the symbols drawn before the sample.
pub fn good_event_check(
    tree: &CountedTree,
    model: &VlmcModel,
    prefix: &[Sym],
    pen: &PenaltyTable,
) -> Result<GoodEvent> {
    check_table(tree, pen)?;
    let pbar = pbar_table(tree, model, prefix)?;
    let mut worst: Option<Offender> = None;
    for id in tree.node_ids() {
        let cf = pen.cf(id);
        for (s, &pb) in pbar[id.index()].iter().enumerate() {
            let gap = (pb - tree.phat(id, s as Sym)).abs();
            if worst.as_ref().is_none_or(|o| gap - cf > o.gap - o.cf) {
                worst = Some(Offender {
                    node: id,
                    symbol: s as Sym,
                    gap,
                    cf,
                });
            }
        }
    }
    let holds = worst.as_ref().is_none_or(|o| o.gap <= o.cf);
    Ok(GoodEvent { holds, worst })
}

/// `inf_{w ⪯ x, w ∈ E_n} (2c+2)/(c-1)·γ(w) + (1+2c)·cf(w)`.
pub fn oracle_bound(
    model: &VlmcModel,
    tree: &CountedTree,
    pen: &PenaltyTable,
    c: f64,
    x: &[Sym],
) -> Result<f64> {
    check_c(c)?;
    check_table(tree, pen)?;
    let stat = model.stationary()?;
    let coef = (2.0 * c + 2.0) / (c - 1.0);
    let mut best = f64::INFINITY;
    for id in tree.ancestors(tree.longest_suffix(x)) {
        debug_assert!(is_suffix(tree.path(id), x));
        let gamma = model.continuity_rate_with(&stat, tree.path(id))?;
        best = best.min(coef * gamma + (1.0 + 2.0 * c) * pen.cf(id));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::build_empirical_tree;
    use crate::penalties::{cf_bootstrap, selfnorm_table, BootCfg, Penalty, PenaltySource};
    use crate::reference;
    use crate::sequences::sample_vlmc;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn table(values: Vec<f64>) -> PenaltyTable {
        PenaltyTable {
            delta: 0.05,
            cv_hat: None,
            entries: values
                .into_iter()
                .map(|cf| Penalty {
                    cf,
                    source: PenaltySource::SelfNorm,
                })
                .collect(),
        }
    }

    fn subtree(tree: &CountedTree, id: NodeId) -> Vec<NodeId> {
        tree.node_ids()
            .filter(|&v| is_suffix(tree.path(id), tree.path(v)))
            .collect()
    }

    /// Pairwise enumeration straight from the definition.
    fn brute_can_remove(tree: &CountedTree, pen: &PenaltyTable, c: f64, id: NodeId) -> bool {
        let Some(par) = tree.parent(id) else {
            return false;
        };
        for u in subtree(tree, id) {
            for v in subtree(tree, par) {
                for s in 0..tree.alphabet_size() as Sym {
                    let diff = (tree.phat(u, s) - tree.phat(v, s)).abs();
                    if diff > c * (pen.cf(u) + pen.cf(v)) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn random_tree(seed: u64) -> CountedTree {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = rng.random_range(2..=3usize);
        let n = rng.random_range(8..=60usize);
        let h = rng.random_range(1..=4usize);
        let sample: Vec<Sym> = (0..n).map(|_| rng.random_range(0..a) as Sym).collect();
        let names = ["x", "y", "z"];
        build_empirical_tree(&sample, &Alphabet::new(names[..a].iter().copied()).unwrap(), h).unwrap()
    }

    fn ref_fit(seed: u64, n: usize) -> (VlmcModel, crate::sequences::SimulatedPath, CountedTree) {
        let m = reference::order3_binary();
        let path = sample_vlmc(&m, n, None, seed).unwrap();
        let tree = build_empirical_tree(&path.symbols, m.alphabet(), 6).unwrap();
        (m, path, tree)
    }

    #[test]
    fn root_is_never_removable() {
        let tree = random_tree(3);
        let pen = table(vec![10.0; tree.len()]);
        assert!(!can_remove(&tree, &pen, 1.5, &[]).unwrap());
    }

    #[test]
    fn rejects_bad_constant_and_short_table() {
        let tree = random_tree(4);
        let pen = table(vec![0.1; tree.len()]);
        assert_eq!(can_remove(&tree, &pen, 1.0, &[]), Err(Error::BadConstant(1.0)));
        assert!(matches!(prune(&tree, &pen, 0.5), Err(Error::BadConstant(_))));
        let short = table(vec![0.1; tree.len() - 1]);
        assert!(matches!(prune(&tree, &short, 1.1), Err(Error::MissingPenalty(_))));
        assert!(matches!(
            can_remove(&tree, &pen, 1.1, &[0, 0, 0, 0, 0, 0]),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn envelope_matches_pairwise_enumeration() {
        for seed in 0..300 {
            let tree = random_tree(seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 10_000);
            let scale = [0.0, 0.02, 0.1, 0.3][seed as usize % 4];
            let pen = table((0..tree.len()).map(|_| scale * rng.random::<f64>()).collect());
            let c = 1.0 + rng.random::<f64>();
            let env = Envelopes::new(&tree, &pen, c).unwrap();
            for id in tree.node_ids() {
                assert_eq!(
                    env.can_remove(&tree, id),
                    brute_can_remove(&tree, &pen, c, id),
                    "seed {seed} node {}",
                    tree.path_text(id)
                );
            }
        }
    }

    #[test]
    fn two_leaf_violation() {
        // sample "ab" repeated: p̂(·|a) = (0,1), p̂(·|b) = (1,0)
        let ab = Alphabet::new(["a", "b"]).unwrap();
        let sample = ab.parse_path("abababab").unwrap();
        let tree = build_empirical_tree(&sample, &ab, 1).unwrap();
        let pen = table(vec![0.2; tree.len()]);
        // |p̂(a|a) - p̂(a|b)| = 1 > 1.1 * 0.4
        assert!(!can_remove(&tree, &pen, 1.1, &[0]).unwrap());
        let wide = table(vec![0.5; tree.len()]);
        assert!(can_remove(&tree, &wide, 1.1, &[0]).unwrap());
    }

    #[test]
    fn half_gap_against_radius_sum() {
        // p̂(·|a) = (0.5, 0.5) and p̂(·|b) = (0, 1): gap 0.5 against
        // c (cf + cf) = 0.4, so the pair (a, b) forbids removing "a".
        let ab = Alphabet::new(["a", "b"]).unwrap();
        let sample = ab.parse_path("aabbb").unwrap();
        let tree = build_empirical_tree(&sample, &ab, 1).unwrap();
        let a = tree.lookup(&[0]).unwrap();
        let b = tree.lookup(&[1]).unwrap();
        assert_eq!(tree.phat_row(a), vec![0.5, 0.5]);
        assert_eq!(tree.phat_row(b), vec![0.0, 1.0]);
        let c = 2.0;
        let pen = table(vec![0.1; tree.len()]);
        assert!(!brute_can_remove(&tree, &pen, c, a));
        assert!(!can_remove(&tree, &pen, c, &[0]).unwrap());
    }

    #[test]
    fn identical_rows_prune_to_root() {
        // every node of a periodic "aab" tree at depth 1 has its own law, so
        // use a constant sample where all rows coincide
        let ab = Alphabet::new(["a", "b"]).unwrap();
        let sample = ab.parse_path("aaaaaaaa").unwrap();
        let tree = build_empirical_tree(&sample, &ab, 3).unwrap();
        let pen = table(vec![0.01; tree.len()]);
        for id in tree.node_ids().skip(1) {
            assert!(can_remove(&tree, &pen, 1.1, tree.path(id)).unwrap());
        }
        let est = prune(&tree, &pen, 1.1).unwrap();
        assert_eq!(est.nodes(), &[Vec::<Sym>::new()]);
        assert_eq!(est.predict(&[0, 0, 0], 0), 1.0);
    }

    #[test]
    fn zero_radii_keep_ancestors_of_differing_rows() {
        let ab = Alphabet::new(["a", "b"]).unwrap();
        let sample = ab.parse_path("aabbabaabbbaab").unwrap();
        let tree = build_empirical_tree(&sample, &ab, 2).unwrap();
        let pen = table(vec![0.0; tree.len()]);
        let est = prune(&tree, &pen, 1.1).unwrap();
        for id in tree.node_ids() {
            let differs = tree
                .node_ids()
                .filter(|&v| is_suffix(tree.path(id), tree.path(v)))
                .any(|v| tree.phat_row(v) != tree.phat_row(id));
            if differs {
                assert!(est.contains(tree.path(id)), "{}", tree.path_text(id));
            }
        }
    }

    #[test]
    fn huge_radii_keep_only_root() {
        let (_, _, tree) = ref_fit(5, 500);
        let pen = table(vec![1.0; tree.len()]);
        let est = prune(&tree, &pen, 1.1).unwrap();
        assert_eq!(est.len(), 1);
        let root = tree.phat_row(NodeId::ROOT);
        assert_eq!(est.predict(&[1, 0, 1, 1], 1), root[1]);
    }

    #[test]
    fn predict_uses_longest_kept_suffix() {
        let (_, _, tree) = ref_fit(6, 3000);
        let pen = selfnorm_table(&tree, 0.05).unwrap();
        let est = prune(&tree, &pen, 1.1).unwrap();
        for w in est.nodes() {
            let p = est.probs(w).unwrap().to_vec();
            let lw = est.context(w).to_vec();
            assert_eq!(&lw, w);
            assert_eq!(est.predict(w, 0), p[0]);
            let mut longer = vec![1, 0, 0, 1, 1, 1, 0, 1];
            longer.extend_from_slice(w);
            let ctx = est.context(&longer);
            assert!(ctx.len() >= w.len());
            if ctx == w.as_slice() {
                assert_eq!(est.predict(&longer, 1), p[1]);
            }
        }
    }

    #[test]
    fn output_is_a_tree_with_normalized_rows() {
        for seed in 0..40 {
            let tree = random_tree(seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pen = table((0..tree.len()).map(|_| 0.3 * rng.random::<f64>()).collect());
            let est = prune(&tree, &pen, 1.2).unwrap();
            assert!(est.contains(&[]));
            for w in est.nodes() {
                if !w.is_empty() {
                    assert!(est.contains(&w[1..]));
                }
                let s: f64 = est.probs(w).unwrap().iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn model_round_trip() {
        let (_, _, tree) = ref_fit(7, 4000);
        let pen = selfnorm_table(&tree, 0.05).unwrap();
        let est = prune(&tree, &pen, 1.1).unwrap();
        let json = est.to_json().unwrap();
        let model = VlmcModel::from_json(&json).unwrap();
        assert_eq!(model.fitted().unwrap().kept.len(), est.len());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let hist: Vec<Sym> = (0..8).map(|_| rng.random_range(0..2)).collect();
            let p = model.probs_for(&hist).unwrap();
            assert_eq!(p[0], est.predict(&hist, 0));
            assert_eq!(p[1], est.predict(&hist, 1));
        }
        let again = VlmcModel::from_json(&model.to_json()).unwrap();
        assert_eq!(again, model);
        assert_eq!(again.to_json(), json);
    }

    #[test]
    fn bootstrap_fit_is_contained_in_truth() {
        let (m, path, tree) = ref_fit(8, 5000);
        let pen = cf_bootstrap(&tree, &BootCfg::new(200, 0.05, 8)).unwrap();
        let good = good_event_check(&tree, &m, &path.prefix, &pen).unwrap();
        let est = prune(&tree, &pen, DEFAULT_C).unwrap();
        if good.holds {
            assert!(est.is_contained_in(&m));
        }
        assert!(est.len() > 1);
    }

    #[test]
    fn good_event_trivial_radii() {
        let (m, path, tree) = ref_fit(9, 2000);
        let ones = table(vec![1.0; tree.len()]);
        assert!(good_event_check(&tree, &m, &path.prefix, &ones).unwrap().holds);
        let zeros = table(vec![0.0; tree.len()]);
        let res = good_event_check(&tree, &m, &path.prefix, &zeros).unwrap();
        assert!(!res.holds);
        assert!(res.worst.unwrap().gap > 0.0);
    }

    #[test]
    fn oracle_bound_enumeration() {
        let (m, _, tree) = ref_fit(10, 2000);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let pen = table((0..tree.len()).map(|_| 0.05 + 0.2 * rng.random::<f64>()).collect());
        let c = 1.5;
        let x: Vec<Sym> = vec![1, 1, 0, 1, 0, 0];
        let mut expect = f64::INFINITY;
        for d in 0..=x.len() {
            if let Some(id) = tree.find(&x[x.len() - d..]) {
                let g = m.continuity_rate(tree.path(id)).unwrap();
                expect = expect.min(10.0 * g + 4.0 * pen.cf(id));
            }
        }
        let got = oracle_bound(&m, &tree, &pen, c, &x).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
        assert!(matches!(oracle_bound(&m, &tree, &pen, 1.0, &x), Err(Error::BadConstant(_))));
    }

    #[test]
    fn oracle_bound_without_bias() {
        // the true tree has depth 3, so every depth-3 suffix has γ = 0
        let (m, _, tree) = ref_fit(11, 2000);
        let pen = table(vec![0.1; tree.len()]);
        let c = 3.0;
        let x = vec![0, 1, 0, 0];
        let got = oracle_bound(&m, &tree, &pen, c, &x).unwrap();
        assert!((got - 7.0 * 0.1).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn larger_radii_never_grow_the_tree(seed in 0u64..10_000, bump in 1.0f64..3.0) {
            let tree = random_tree(seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let base: Vec<f64> = (0..tree.len()).map(|_| 0.2 * rng.random::<f64>()).collect();
            let bigger: Vec<f64> = base.iter().map(|v| v * bump + 0.01 * rng.random::<f64>()).collect();
            let small = prune(&tree, &table(base), 1.1).unwrap();
            let large = prune(&tree, &table(bigger), 1.1).unwrap();
            for w in large.nodes() {
                prop_assert!(small.contains(w));
            }
        }
    }
}
