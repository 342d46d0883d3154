//! Empirical suffix tree with transition counts.
//!
//! A sample `X_1..X_n` yields `n - h_star` transitions: positions
//! `k = h_star + 1..=n` (1-based) whose full context `X_{k-h_star}..X_{k-1}`
//! lies inside the sample. For a string `w` with `|w| <= h_star`:
//!
//! * `N_{n-1}(w)` (`count_ctx`) counts transitions whose context ends with `w`;
//! * `N_n(wa)` (`next_count(w, a)`) counts those followed by `a`.
//!
//! Counting every node over the same set of transitions makes
//! `N_{n-1}(w) = Σ_a N_n(wa)` and `N_{n-1}(w) = Σ_b N_{n-1}(bw)` (for
//! `|w| < h_star`) hold exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequences::{Alphabet, Sym, VlmcModel};

/// Index of a node in a [`CountedTree`]. Node 0 is the root; ids are ordered
/// by depth then path, so parents always precede their children.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug)]
struct Node {
    path: Vec<Sym>,
    parent: Option<NodeId>,
    children: Vec<Option<NodeId>>,
    count_ctx: u64,
    count_full: u64,
    next: Vec<u64>,
}

/// One counted transition: the depth-`h_star` context node and the next
/// symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub context: NodeId,
    pub next: Sym,
}

/// The empirical tree `E_n` of a sample.
#[derive(Clone, Debug)]
pub struct CountedTree {
    alphabet: Alphabet,
    h_star: usize,
    sample: Vec<Sym>,
    nodes: Vec<Node>,
    transitions: Vec<Transition>,
}

/// `ceil(ln n / ln |A|)`, kept within `1..n`.
pub fn default_h_star(n: usize, alphabet_size: usize) -> usize {
    let h = ((n as f64).ln() / (alphabet_size as f64).ln()).ceil() as usize;
    h.clamp(1, n.saturating_sub(1).max(1))
}

/// Builds `E_n` with counts for every suffix of length at most `h_star`.
pub fn build_empirical_tree(
    sample: &[Sym],
    alphabet: &Alphabet,
    h_star: usize,
) -> Result<CountedTree> {
    let n = sample.len();
    if h_star == 0 {
        return Err(Error::OutOfDomain("h_star must be at least 1".into()));
    }
    if n <= h_star {
        return Err(Error::SampleTooShort { n, h_star });
    }
    let a = alphabet.len();
    if let Some(&s) = sample.iter().find(|&&s| s as usize >= a) {
        return Err(Error::UnknownSymbol(format!("index {s}")));
    }

    let new_node = |path: Vec<Sym>, parent: Option<NodeId>| Node {
        path,
        parent,
        children: vec![None; a],
        count_ctx: 0,
        count_full: 0,
        next: vec![0; a],
    };
    let mut nodes = vec![new_node(Vec::new(), None)];
    let mut deepest = Vec::with_capacity(n - h_star);
    for i in h_star..n {
        let next = sample[i] as usize;
        let mut cur = 0usize;
        nodes[0].count_ctx += 1;
        nodes[0].next[next] += 1;
        for d in 1..=h_star {
            let s = sample[i - d];
            cur = match nodes[cur].children[s as usize] {
                Some(id) => id.index(),
                None => {
                    let path = sample[i - d..i].to_vec();
                    nodes.push(new_node(path, Some(NodeId(cur as u32))));
                    let id = nodes.len() - 1;
                    nodes[cur].children[s as usize] = Some(NodeId(id as u32));
                    id
                }
            };
            nodes[cur].count_ctx += 1;
            nodes[cur].next[next] += 1;
        }
        deepest.push((cur, sample[i]));
    }

    // canonical order: depth, then path
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&x, &y| {
        (nodes[x].path.len(), &nodes[x].path).cmp(&(nodes[y].path.len(), &nodes[y].path))
    });
    let mut remap = vec![0u32; nodes.len()];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new as u32;
    }
    let fix = |id: NodeId| NodeId(remap[id.index()]);
    let mut sorted: Vec<Node> = order
        .iter()
        .map(|&old| {
            let mut node = nodes[old].clone();
            node.parent = node.parent.map(fix);
            node.children.iter_mut().for_each(|c| *c = c.map(fix));
            node
        })
        .collect();
    let transitions = deepest
        .into_iter()
        .map(|(id, next)| Transition {
            context: NodeId(remap[id]),
            next,
        })
        .collect();

    let mut tree = CountedTree {
        alphabet: alphabet.clone(),
        h_star,
        sample: sample.to_vec(),
        nodes: Vec::new(),
        transitions,
    };
    // N_n(w) for w = u·a is the transition count of u followed by a
    let full: Vec<u64> = sorted
        .iter()
        .map(|node| match node.path.split_last() {
            None => node.count_ctx,
            Some((&last, head)) => {
                // u need not be a node when w only occurs before the first
                // counted transition
                find_in(&sorted, head).map_or(0, |u| sorted[u.index()].next[last as usize])
            }
        })
        .collect();
    for (node, f) in sorted.iter_mut().zip(full) {
        node.count_full = f;
    }
    tree.nodes = sorted;
    Ok(tree)
}

fn find_in(nodes: &[Node], path: &[Sym]) -> Option<NodeId> {
    let mut cur = NodeId::ROOT;
    for d in 1..=path.len() {
        cur = nodes[cur.index()].children[path[path.len() - d] as usize]?;
    }
    Some(cur)
}

impl CountedTree {
    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet.len()
    }

    pub fn h_star(&self) -> usize {
        self.h_star
    }

    /// Sample length `n`.
    pub fn sample_len(&self) -> usize {
        self.sample.len()
    }

    pub fn sample(&self) -> &[Sym] {
        &self.sample
    }

    /// Number of nodes in `E_n`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_ids(&self) -> impl DoubleEndedIterator<Item = NodeId> + ExactSizeIterator {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    /// Counted transitions, in sample order.
    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn find(&self, path: &[Sym]) -> Option<NodeId> {
        find_in(&self.nodes, path)
    }

    /// Like [`Self::find`], with `UnknownNode` for absent paths.
    pub fn lookup(&self, path: &[Sym]) -> Result<NodeId> {
        self.find(path)
            .ok_or_else(|| Error::UnknownNode(self.alphabet.format_path(path)))
    }

    pub fn path(&self, id: NodeId) -> &[Sym] {
        &self.nodes[id.index()].path
    }

    pub fn path_text(&self, id: NodeId) -> String {
        self.alphabet.format_path(self.path(id))
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.nodes[id.index()].path.len()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.index()].parent
    }

    pub fn child(&self, id: NodeId, b: Sym) -> Option<NodeId> {
        self.nodes[id.index()].children[b as usize]
    }

    pub fn children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes[id.index()].children.iter().flatten().copied()
    }

    /// `N_{n-1}(w)`.
    pub fn count_ctx(&self, id: NodeId) -> u64 {
        self.nodes[id.index()].count_ctx
    }

    /// `N_n(w)`.
    pub fn count_full(&self, id: NodeId) -> u64 {
        self.nodes[id.index()].count_full
    }

    /// `N_n(wa)`.
    pub fn next_count(&self, id: NodeId, a: Sym) -> u64 {
        self.nodes[id.index()].next[a as usize]
    }

    pub fn next_counts(&self, id: NodeId) -> &[u64] {
        &self.nodes[id.index()].next
    }

    /// `p̂_n(a|w) = N_n(wa) / N_{n-1}(w)`.
    pub fn phat(&self, id: NodeId, a: Sym) -> f64 {
        let node = &self.nodes[id.index()];
        node.next[a as usize] as f64 / node.count_ctx as f64
    }

    pub fn phat_row(&self, id: NodeId) -> Vec<f64> {
        let node = &self.nodes[id.index()];
        let total = node.count_ctx as f64;
        node.next.iter().map(|&c| c as f64 / total).collect()
    }

    /// Longest suffix of `history` present in the tree.
    pub fn longest_suffix(&self, history: &[Sym]) -> NodeId {
        let mut cur = NodeId::ROOT;
        for d in 1..=history.len().min(self.h_star) {
            match self.child(cur, history[history.len() - d]) {
                Some(next) => cur = next,
                None => break,
            }
        }
        cur
    }

    /// Nodes on the path from `id` up to the root, `id` first.
    pub fn ancestors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::successors(Some(id), move |&x| self.parent(x))
    }

    /// JSON-ready dump of every node.
    pub fn dump(&self) -> Vec<NodeDump> {
        self.node_ids()
            .map(|id| NodeDump {
                path: self.path_text(id),
                n_full: self.count_full(id),
                n_ctx: self.count_ctx(id),
                phat: self.phat_row(id),
            })
            .collect()
    }
}

/// Node record of the counted-tree dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDump {
    pub path: String,
    #[serde(rename = "N_full")]
    pub n_full: u64,
    #[serde(rename = "N_ctx")]
    pub n_ctx: u64,
    pub phat: Vec<f64>,
}

/// `p̂_n(a|w)` addressed by path.
pub fn phat(tree: &CountedTree, w: &[Sym], a: Sym) -> Result<f64> {
    Ok(tree.phat(tree.lookup(w)?, a))
}

/// `p̄_n(·|w)` for every node: the average true next-symbol law over the
/// transitions whose context ends with `w`. `prefix` holds the symbols that
/// preceded the sample (as returned by the simulator) and must be long
/// enough for the model to resolve every context.
pub fn pbar_table(tree: &CountedTree, model: &VlmcModel, prefix: &[Sym]) -> Result<Vec<Vec<f64>>> {
    let a = tree.alphabet_size();
    if model.alphabet().len() != a {
        return Err(Error::InvalidModel("model and sample alphabets differ".into()));
    }
    let mut full = Vec::with_capacity(prefix.len() + tree.sample_len());
    full.extend_from_slice(prefix);
    full.extend_from_slice(tree.sample());
    let mut sums = vec![vec![0.0; a]; tree.len()];
    for (j, tr) in tree.transitions().iter().enumerate() {
        let i = prefix.len() + tree.h_star() + j;
        let probs = model.probs_for(&full[..i])?;
        for id in tree.ancestors(tr.context) {
            sums[id.index()]
                .iter_mut()
                .zip(probs)
                .for_each(|(s, p)| *s += p);
        }
    }
    for (id, row) in tree.node_ids().zip(sums.iter_mut()) {
        let total = tree.count_ctx(id) as f64;
        row.iter_mut().for_each(|s| *s /= total);
    }
    Ok(sums)
}

/// `p̄_n(a|w)` for a single node.
pub fn pbar_oracle(
    tree: &CountedTree,
    model: &VlmcModel,
    prefix: &[Sym],
    w: &[Sym],
    a: Sym,
) -> Result<f64> {
    let id = tree.lookup(w)?;
    Ok(pbar_table(tree, model, prefix)?[id.index()][a as usize])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use crate::sequences::sample_vlmc;

    fn ab() -> Alphabet {
        Alphabet::new(["a", "b"]).unwrap()
    }

    /// Window scanner straight from the definitions.
    fn naive_counts(sample: &[Sym], h: usize, w: &[Sym], a: usize) -> (u64, Vec<u64>) {
        let mut ctx = 0;
        let mut next = vec![0; a];
        for i in h..sample.len() {
            if sample[..i].ends_with(w) {
                ctx += 1;
                next[sample[i] as usize] += 1;
            }
        }
        (ctx, next)
    }

    #[test]
    fn constant_sample() {
        let sample = ab().parse_path("aaaa").unwrap();
        let tree = build_empirical_tree(&sample, &ab(), 1).unwrap();
        let a = tree.lookup(&[0]).unwrap();
        assert_eq!(tree.count_ctx(a), 3);
        assert_eq!(tree.count_full(a), 3);
        assert_eq!(tree.count_ctx(NodeId::ROOT), 3);
        assert!(tree.find(&[1]).is_none());
        assert_eq!(tree.len(), 2);
    }

    #[test]
    fn root_counts_every_transition() {
        let sample: Vec<Sym> = (0..37).map(|i| ((i * 7 + i / 3) % 3) as Sym).collect();
        let abc = Alphabet::new(["a", "b", "c"]).unwrap();
        for h in 1..5 {
            let tree = build_empirical_tree(&sample, &abc, h).unwrap();
            assert_eq!(tree.count_ctx(NodeId::ROOT), (sample.len() - h) as u64);
            assert_eq!(tree.transitions().len(), sample.len() - h);
        }
    }

    #[test]
    fn minimal_sample_has_one_transition() {
        let tree = build_empirical_tree(&[0, 1, 1], &ab(), 2).unwrap();
        assert_eq!(tree.count_ctx(NodeId::ROOT), 1);
        assert!(matches!(
            build_empirical_tree(&[0, 1], &ab(), 2),
            Err(Error::SampleTooShort { n: 2, h_star: 2 })
        ));
    }

    #[test]
    fn phat_examples() {
        let sample = ab().parse_path("abababababab").unwrap();
        let tree = build_empirical_tree(&sample, &ab(), 2).unwrap();
        assert_eq!(phat(&tree, &[0], 1).unwrap(), 1.0);
        assert_eq!(phat(&tree, &[0], 0).unwrap(), 0.0);
        assert!(matches!(phat(&tree, &[0, 0], 0), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn phat_ratio() {
        // context "a" followed by "b" 30 times out of 100
        let mut sample = vec![0];
        for i in 0..100 {
            sample.push(if i < 30 { 1 } else { 0 });
            sample.push(0);
        }
        let tree = build_empirical_tree(&sample, &ab(), 1).unwrap();
        let id = tree.lookup(&[1]).unwrap();
        assert_eq!(tree.phat(id, 0), 1.0);
        let a = tree.lookup(&[0]).unwrap();
        let expected = naive_counts(&sample, 1, &[0], 2);
        assert_eq!(tree.count_ctx(a), expected.0);
        assert_eq!(tree.next_counts(a), expected.1.as_slice());
    }

    #[test]
    fn pbar_iid_uniform_is_exact() {
        let m = VlmcModel::from_paths(ab(), &[("", &[0.5, 0.5])]).unwrap();
        let path = sample_vlmc(&m, 300, None, 3).unwrap();
        let tree = build_empirical_tree(&path.symbols, &ab(), 3).unwrap();
        let table = pbar_table(&tree, &m, &path.prefix).unwrap();
        assert!(table.iter().flatten().all(|&p| p == 0.5));
    }

    #[test]
    fn pbar_matches_context_when_deep_enough() {
        let m = reference::order1_binary([0.9, 0.1], [0.3, 0.7]);
        let bin = m.alphabet().clone();
        let path = sample_vlmc(&m, 500, None, 4).unwrap();
        let tree = build_empirical_tree(&path.symbols, &bin, 2).unwrap();
        let p = pbar_oracle(&tree, &m, &path.prefix, &[1], 0).unwrap();
        assert!((p - 0.3).abs() < 1e-12);
        let p = pbar_oracle(&tree, &m, &path.prefix, &[1, 0], 1).unwrap();
        assert!((p - 0.1).abs() < 1e-12);
    }

    #[test]
    fn pbar_shallow_node_direct_summation() {
        let m = reference::order3_binary();
        let bin = m.alphabet().clone();
        let path = sample_vlmc(&m, 400, None, 8).unwrap();
        let h = 3;
        let tree = build_empirical_tree(&path.symbols, &bin, h).unwrap();
        let table = pbar_table(&tree, &m, &path.prefix).unwrap();
        let mut full = path.prefix.clone();
        full.extend_from_slice(&path.symbols);
        let off = path.prefix.len();
        for w in [vec![0u16], vec![0, 0], vec![]] {
            let (mut num, mut den) = (0.0, 0.0);
            for i in h..path.symbols.len() {
                if path.symbols[..i].ends_with(&w) {
                    num += m.probs_for(&full[..off + i]).unwrap()[1];
                    den += 1.0;
                }
            }
            let id = tree.lookup(&w).unwrap();
            assert!((table[id.index()][1] - num / den).abs() < 1e-12);
        }
        // depth-1 node "0": mixture of contexts 000,100,010,110
        let id = tree.lookup(&[0]).unwrap();
        let v = table[id.index()][1];
        assert!((0.2..=0.8).contains(&v));
    }

    #[test]
    fn pbar_needs_enough_history() {
        let m = reference::order3_binary();
        let bin = m.alphabet().clone();
        // first context is "0", an internal node of the model
        let sample = [0, 0, 0, 1, 0, 1, 1, 0];
        let tree = build_empirical_tree(&sample, &bin, 1).unwrap();
        let err = pbar_table(&tree, &m, &[]);
        assert!(matches!(err, Err(Error::NoMatchingContext { .. })));
    }

    #[test]
    fn default_h_star_values() {
        assert_eq!(default_h_star(5000, 2), 13);
        assert_eq!(default_h_star(1000, 10), 3);
        assert_eq!(default_h_star(3, 2), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (usize, usize, Vec<Sym>)> {
            (2usize..=3, 1usize..=4).prop_flat_map(|(a, h)| {
                (
                    Just(a),
                    Just(h),
                    proptest::collection::vec(0..a as Sym, h + 1..=50),
                )
            })
        }

        proptest! {
            #[test]
            fn counts_match_window_scanner((a, h, sample) in instance()) {
                let alpha = Alphabet::new((0..a).map(|i| i.to_string())).unwrap();
                let tree = build_empirical_tree(&sample, &alpha, h).unwrap();
                for id in tree.node_ids() {
                    let (ctx, next) = naive_counts(&sample, h, tree.path(id), a);
                    prop_assert_eq!(tree.count_ctx(id), ctx);
                    prop_assert_eq!(tree.next_counts(id), next.as_slice());
                    prop_assert!(ctx > 0);
                }
                // every string of length <= h with positive count is present
                let mut total = 0;
                for i in h..sample.len() {
                    for d in 0..=h {
                        total += 1;
                        prop_assert!(tree.find(&sample[i - d..i]).is_some());
                    }
                }
                prop_assert!(total > 0);
            }

            #[test]
            fn children_sum_identities((a, h, sample) in instance()) {
                let alpha = Alphabet::new((0..a).map(|i| i.to_string())).unwrap();
                let tree = build_empirical_tree(&sample, &alpha, h).unwrap();
                for id in tree.node_ids() {
                    let next_sum: u64 = tree.next_counts(id).iter().sum();
                    prop_assert_eq!(tree.count_ctx(id), next_sum);
                    if tree.depth(id) < h {
                        let child_sum: u64 = tree.children(id).map(|c| tree.count_ctx(c)).sum();
                        prop_assert_eq!(tree.count_ctx(id), child_sum);
                    }
                    if let Some(p) = tree.parent(id) {
                        prop_assert!(tree.path(id).ends_with(tree.path(p)));
                    }
                    let row_sum: f64 = tree.phat_row(id).iter().sum();
                    prop_assert!((row_sum - 1.0).abs() < 1e-12);
                }
                let again = build_empirical_tree(&sample, &alpha, h).unwrap();
                prop_assert_eq!(tree.dump(), again.dump());
            }
        }
    }
}
