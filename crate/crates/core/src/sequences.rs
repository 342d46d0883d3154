//! Alphabets, suffix-ordered strings and complete context tree models.
//!
//! Strings are stored oldest symbol first, so the most recent symbol of a
//! history is its last element. The parent of `w` drops the oldest symbol and
//! a child of `w` prepends one, which makes `w ⪯ w'` (suffix order) the same
//! as `w'.ends_with(w)`.

use std::collections::{HashMap, HashSet};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Encoded symbol: an index into an [`Alphabet`].
pub type Sym = u16;

/// Largest number of model states for which the stationary law is solved by
/// a dense linear system; deeper models fall back to power iteration.
const DENSE_STATE_LIMIT: usize = 1024;
const MAX_STATES: usize = 1 << 20;

/// Finite, ordered set of symbol tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    tokens: Vec<String>,
    index: HashMap<String, Sym>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Result<Self> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.len() < 2 {
            return Err(Error::InvalidAlphabet(format!(
                "need at least 2 symbols, got {}",
                tokens.len()
            )));
        }
        if tokens.len() > Sym::MAX as usize + 1 {
            return Err(Error::InvalidAlphabet("too many symbols".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::InvalidAlphabet(format!(
                    "token {tok:?} is empty or contains whitespace"
                )));
            }
            if index.insert(tok.clone(), i as Sym).is_some() {
                return Err(Error::InvalidAlphabet(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Alphabet made of the distinct tokens in first-seen order.
    pub fn infer<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut order = Vec::new();
        for tok in tokens {
            if seen.insert(tok) {
                order.push(tok.to_string());
            }
        }
        Self::new(order)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, sym: Sym) -> &str {
        &self.tokens[sym as usize]
    }

    pub fn encode(&self, token: &str) -> Result<Sym> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| Error::UnknownSymbol(token.to_string()))
    }

    pub fn encode_all<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Result<Vec<Sym>> {
        tokens.into_iter().map(|t| self.encode(t)).collect()
    }

    fn single_char(&self) -> bool {
        self.tokens.iter().all(|t| t.chars().count() == 1)
    }

    /// Text form of a string: tokens concatenated when every token is a
    /// single character, space-separated otherwise. The root is `""`.
    pub fn format_path(&self, syms: &[Sym]) -> String {
        let sep = if self.single_char() { "" } else { " " };
        syms.iter()
            .map(|&s| self.token(s))
            .collect::<Vec<_>>()
            .join(sep)
    }

    pub fn parse_path(&self, text: &str) -> Result<Vec<Sym>> {
        if self.single_char() {
            text.chars()
                .map(|c| self.encode(c.encode_utf8(&mut [0; 4])))
                .collect()
        } else {
            self.encode_all(text.split_whitespace())
        }
    }
}

/// A finite string indexed `-k..-1`, stored oldest symbol first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SuffixStr(Vec<Sym>);

impl SuffixStr {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn new(syms: Vec<Sym>) -> Self {
        Self(syms)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Sym] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Sym> {
        self.0
    }

    /// `w` without its oldest symbol; `None` for the empty string.
    pub fn parent(&self) -> Option<Self> {
        (!self.0.is_empty()).then(|| Self(self.0[1..].to_vec()))
    }

    /// `b·w`: one step deeper into the past.
    pub fn child(&self, b: Sym) -> Self {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(b);
        v.extend_from_slice(&self.0);
        Self(v)
    }

    /// `self ⪯ other`.
    pub fn is_suffix_of(&self, other: &SuffixStr) -> bool {
        is_suffix(&self.0, &other.0)
    }
}

impl From<Vec<Sym>> for SuffixStr {
    fn from(v: Vec<Sym>) -> Self {
        Self(v)
    }
}

impl fmt::Display for SuffixStr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("e");
        }
        let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        f.write_str(&parts.join("."))
    }
}

/// True iff `w` equals the last `|w|` symbols of `w2`.
pub fn is_suffix(w: &[Sym], w2: &[Sym]) -> bool {
    w2.ends_with(w)
}

#[derive(Clone, Debug)]
struct TrieNode {
    children: Option<Vec<usize>>,
    leaf: Option<usize>,
}

/// Leaf of a context tree with its next-symbol distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Context {
    pub path: SuffixStr,
    pub probs: Vec<f64>,
    pub pi: Option<f64>,
}

/// A complete context tree with per-leaf transition probabilities.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct VlmcModel {
    alphabet: Alphabet,
    leaves: Vec<Context>,
    trie: Vec<TrieNode>,
    depth: usize,
    fitted: Option<FitInfo>,
}

impl PartialEq for VlmcModel {
    fn eq(&self, other: &Self) -> bool {
        self.alphabet == other.alphabet && self.leaves == other.leaves
    }
}

impl VlmcModel {
    /// Builds and validates a model from its leaves (any order).
    pub fn new(alphabet: Alphabet, mut leaves: Vec<Context>) -> Result<Self> {
        let a = alphabet.len();
        leaves.sort_by(|x, y| (x.path.len(), &x.path).cmp(&(y.path.len(), &y.path)));
        let mut trie = vec![TrieNode {
            children: None,
            leaf: None,
        }];
        for (li, leaf) in leaves.iter().enumerate() {
            validate_probs(&leaf.probs, a)
                .map_err(|m| Error::InvalidModel(format!("leaf {}: {m}", leaf.path)))?;
            let path = leaf.path.as_slice();
            let mut node = 0;
            for d in 0..path.len() {
                let s = path[path.len() - 1 - d] as usize;
                if s >= a {
                    return Err(Error::InvalidModel(format!("symbol {s} out of range")));
                }
                if trie[node].leaf.is_some() {
                    return Err(Error::InvalidModel(format!(
                        "leaf {} extends another leaf",
                        leaf.path
                    )));
                }
                if trie[node].children.is_none() {
                    trie[node].children = Some(vec![usize::MAX; a]);
                }
                let next = trie[node].children.as_ref().unwrap()[s];
                node = if next == usize::MAX {
                    trie.push(TrieNode {
                        children: None,
                        leaf: None,
                    });
                    let id = trie.len() - 1;
                    trie[node].children.as_mut().unwrap()[s] = id;
                    id
                } else {
                    next
                };
            }
            if trie[node].leaf.is_some() || trie[node].children.is_some() {
                return Err(Error::InvalidModel(format!(
                    "leaf {} is duplicated or has descendants",
                    leaf.path
                )));
            }
            trie[node].leaf = Some(li);
        }
        for node in &trie {
            match (&node.children, node.leaf) {
                (Some(ch), None) if ch.iter().all(|&c| c != usize::MAX) => {}
                (None, Some(_)) => {}
                _ => {
                    return Err(Error::InvalidModel(
                        "tree is not complete (every node needs 0 or |A| children)".into(),
                    ))
                }
            }
        }
        if leaves.iter().any(|l| l.pi.is_some()) {
            if leaves.iter().any(|l| l.pi.is_none()) {
                return Err(Error::InvalidModel("pi given for some leaves only".into()));
            }
            let total: f64 = leaves.iter().map(|l| l.pi.unwrap()).sum();
            if leaves.iter().any(|l| l.pi.unwrap() < 0.0) || (total - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidModel(format!(
                    "leaf pi must be nonnegative and sum to 1 (sum {total})"
                )));
            }
        }
        let depth = leaves.iter().map(|l| l.path.len()).max().unwrap_or(0);
        Ok(Self {
            alphabet,
            leaves,
            trie,
            depth,
            fitted: None,
        })
    }

    /// Convenience constructor from `(path, probs)` pairs in text form.
    pub fn from_paths(alphabet: Alphabet, leaves: &[(&str, &[f64])]) -> Result<Self> {
        let ctx = leaves
            .iter()
            .map(|(p, probs)| {
                Ok(Context {
                    path: alphabet.parse_path(p)?.into(),
                    probs: probs.to_vec(),
                    pi: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(alphabet, ctx)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn leaves(&self) -> &[Context] {
        &self.leaves
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn fitted(&self) -> Option<&FitInfo> {
        self.fitted.as_ref()
    }

    pub(crate) fn with_fitted(mut self, info: FitInfo) -> Self {
        self.fitted = Some(info);
        self
    }

    /// Every node of the tree (internal and leaves), ordered by depth then
    /// path.
    pub fn nodes(&self) -> Vec<SuffixStr> {
        let mut set: HashSet<Vec<Sym>> = HashSet::new();
        for leaf in &self.leaves {
            let p = leaf.path.as_slice();
            for start in 0..=p.len() {
                set.insert(p[start..].to_vec());
            }
        }
        let mut out: Vec<SuffixStr> = set.into_iter().map(SuffixStr).collect();
        out.sort_by(|x, y| (x.len(), x).cmp(&(y.len(), y)));
        out
    }

    /// True if `w` is a node (internal or leaf) of the context tree.
    pub fn contains_node(&self, w: &[Sym]) -> bool {
        let mut node = 0;
        for d in 0..w.len() {
            match &self.trie[node].children {
                Some(ch) => node = ch[w[w.len() - 1 - d] as usize],
                None => return false,
            }
        }
        true
    }

    /// Index of the leaf matching the end of `history`.
    pub fn context_index(&self, history: &[Sym]) -> Result<usize> {
        let mut node = 0;
        let mut d = 0;
        loop {
            if let Some(li) = self.trie[node].leaf {
                return Ok(li);
            }
            if d == history.len() {
                return Err(Error::NoMatchingContext {
                    history_len: history.len(),
                });
            }
            let s = history[history.len() - 1 - d] as usize;
            node = self.trie[node].children.as_ref().unwrap()[s];
            d += 1;
        }
    }

    /// Next-symbol distribution given `history` (oldest first).
    pub fn probs_for(&self, history: &[Sym]) -> Result<&[f64]> {
        Ok(&self.leaves[self.context_index(history)?].probs)
    }

    /// Leaf whose path is a suffix of `w`, if one exists.
    fn leaf_below(&self, w: &[Sym]) -> Option<usize> {
        let mut node = 0;
        for d in 0..=w.len() {
            if let Some(li) = self.trie[node].leaf {
                return Some(li);
            }
            if d == w.len() {
                break;
            }
            node = self.trie[node].children.as_ref().unwrap()[w[w.len() - 1 - d] as usize];
        }
        None
    }

    /// Stationary law of the chain induced on the last `depth` symbols.
    pub fn stationary(&self) -> Result<Stationary> {
        let a = self.alphabet.len();
        let d = self.depth;
        let states = a
            .checked_pow(d as u32)
            .filter(|&s| s <= MAX_STATES)
            .ok_or_else(|| Error::InvalidModel("model too deep for a stationary solve".into()))?;
        // state index encodes the last d symbols, most recent least significant
        let mut trans: Vec<Vec<(usize, f64)>> = Vec::with_capacity(states);
        let mut hist = vec![0 as Sym; d];
        for s in 0..states {
            decode_state(s, a, &mut hist);
            let probs = self.probs_for(&hist)?;
            let shifted = (s * a) % states.max(1);
            let row = probs
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(sym, &p)| (if d == 0 { 0 } else { shifted + sym }, p))
                .collect();
            trans.push(row);
        }
        let probs = if states <= DENSE_STATE_LIMIT {
            solve_dense(&trans)?
        } else {
            solve_power(&trans)?
        };
        Ok(Stationary {
            alphabet_size: a,
            depth: d,
            probs,
        })
    }

    /// Stationary probability of each leaf, in [`Self::leaves`] order.
    pub fn leaf_pi(&self, stat: &Stationary) -> Result<Vec<f64>> {
        self.leaves
            .iter()
            .map(|l| match l.pi {
                Some(p) => Ok(p),
                None => stat.string_prob(self, l.path.as_slice()),
            })
            .collect()
    }

    /// Copy of the model with `pi` filled in on every leaf.
    pub fn with_leaf_pi(&self) -> Result<Self> {
        let stat = self.stationary()?;
        let pis = self.leaf_pi(&stat)?;
        let mut m = self.clone();
        for (leaf, p) in m.leaves.iter_mut().zip(pis) {
            leaf.pi = Some(p);
        }
        Ok(m)
    }

    /// Continuity rate `γ(w)`.
    pub fn continuity_rate(&self, w: &[Sym]) -> Result<f64> {
        self.continuity_rate_with(&self.stationary()?, w)
    }

    /// Continuity rate with a precomputed stationary law.
    pub fn continuity_rate_with(&self, stat: &Stationary, w: &[Sym]) -> Result<f64> {
        if stat.string_prob(self, w)? <= 0.0 {
            return Err(Error::ZeroProbabilitySuffix(self.alphabet.format_path(w)));
        }
        if self.leaf_below(w).is_some() {
            return Ok(0.0);
        }
        let a = self.alphabet.len();
        let mut lo = vec![f64::INFINITY; a];
        let mut hi = vec![f64::NEG_INFINITY; a];
        for leaf in &self.leaves {
            if !is_suffix(w, leaf.path.as_slice()) {
                continue;
            }
            if stat.string_prob(self, leaf.path.as_slice())? <= 0.0 {
                continue;
            }
            for (i, &p) in leaf.probs.iter().enumerate() {
                lo[i] = lo[i].min(p);
                hi[i] = hi[i].max(p);
            }
        }
        Ok(lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| if h >= l { h - l } else { 0.0 })
            .fold(0.0, f64::max))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidModel(e.to_string()))
    }
}

fn validate_probs(p: &[f64], a: usize) -> std::result::Result<(), String> {
    if p.len() != a {
        return Err(format!("expected {a} probabilities, got {}", p.len()));
    }
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err("negative or non-finite probability".into());
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(format!("probabilities sum to {s}"));
    }
    Ok(())
}

fn decode_state(mut s: usize, a: usize, hist: &mut [Sym]) {
    for slot in hist.iter_mut().rev() {
        *slot = (s % a) as Sym;
        s /= a;
    }
}

fn solve_dense(trans: &[Vec<(usize, f64)>]) -> Result<Vec<f64>> {
    let m = trans.len();
    // rows of (P' - I), last row replaced by the normalization constraint
    let mut mat = DMatrix::<f64>::zeros(m, m);
    for (from, row) in trans.iter().enumerate() {
        for &(to, p) in row {
            mat[(to, from)] += p;
        }
        mat[(from, from)] -= 1.0;
    }
    for j in 0..m {
        mat[(m - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(m);
    rhs[m - 1] = 1.0;
    let sol = mat
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NotErgodic("singular stationary system".into()))?;
    let mut pi: Vec<f64> = sol.iter().map(|&x| if x.abs() < 1e-15 { 0.0 } else { x }).collect();
    if pi.iter().any(|&x| x < -1e-9 || !x.is_finite()) {
        return Err(Error::NotErgodic("stationary solution has negative mass".into()));
    }
    for x in &mut pi {
        *x = x.max(0.0);
    }
    let s: f64 = pi.iter().sum();
    Ok(pi.into_iter().map(|x| x / s).collect())
}

fn solve_power(trans: &[Vec<(usize, f64)>]) -> Result<Vec<f64>> {
    let m = trans.len();
    let mut pi = vec![1.0 / m as f64; m];
    let mut next = vec![0.0; m];
    for _ in 0..200_000 {
        // lazy chain (I + P) / 2 has the same stationary law and is aperiodic
        next.iter_mut().zip(&pi).for_each(|(n, p)| *n = 0.5 * p);
        for (from, row) in trans.iter().enumerate() {
            let mass = 0.5 * pi[from];
            for &(to, p) in row {
                next[to] += mass * p;
            }
        }
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if diff < 1e-15 {
            return Ok(pi);
        }
    }
    Err(Error::NotErgodic("power iteration did not converge".into()))
}

/// Stationary law over the last `depth` symbols of a model.
#[derive(Clone, Debug)]
pub struct Stationary {
    alphabet_size: usize,
    depth: usize,
    probs: Vec<f64>,
}

impl Stationary {
    /// `π(w) = P(X_{-|w|..-1} = w)` under the stationary law.
    pub fn string_prob(&self, model: &VlmcModel, w: &[Sym]) -> Result<f64> {
        let (a, d) = (self.alphabet_size, self.depth);
        if w.len() <= d {
            let free = d - w.len();
            let block = a.pow(w.len() as u32);
            let tail = w.iter().fold(0usize, |acc, &s| acc * a + s as usize);
            // states whose last |w| symbols equal w: tail + k * block
            return Ok((0..a.pow(free as u32))
                .map(|k| self.probs[tail + k * block])
                .sum());
        }
        let head = &w[..d];
        let idx = head.iter().fold(0usize, |acc, &s| acc * a + s as usize);
        let mut p = self.probs[idx];
        for i in d..w.len() {
            if p == 0.0 {
                break;
            }
            p *= model.probs_for(&w[..i])?[w[i] as usize];
        }
        Ok(p)
    }
}

/// A simulated path: `prefix` holds the last `depth` symbols drawn before
/// `X_1`, so the true context of every sample position is available.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimulatedPath {
    pub prefix: Vec<Sym>,
    pub symbols: Vec<Sym>,
}

/// Burn-in used when none is given: `10 * depth + 100`.
pub fn default_burn_in(model: &VlmcModel) -> usize {
    10 * model.depth() + 100
}

/// Simulates `n` symbols after discarding `burn_in` draws.
///
/// The initial history is a uniformly chosen leaf context, padded on the left
/// with uniform symbols up to the model depth.
pub fn sample_vlmc(
    model: &VlmcModel,
    n: usize,
    burn_in: Option<usize>,
    seed: u64,
) -> Result<SimulatedPath> {
    let burn_in = burn_in.unwrap_or_else(|| default_burn_in(model));
    let depth = model.depth();
    if burn_in < depth {
        return Err(Error::OutOfDomain(format!(
            "burn_in {burn_in} is below model depth {depth}"
        )));
    }
    let a = model.alphabet().len();
    let mut rng = rng::stream(seed, 0);
    let start = &model.leaves()[rng.random_range(0..model.leaves().len())].path;
    let mut hist: Vec<Sym> = Vec::with_capacity(depth + burn_in + n);
    for _ in start.len()..depth {
        hist.push(rng.random_range(0..a) as Sym);
    }
    hist.extend_from_slice(start.as_slice());
    for _ in 0..burn_in + n {
        let probs = model.probs_for(&hist)?;
        let u: f64 = rng.random();
        hist.push(draw(probs, u));
    }
    let first = hist.len() - n;
    Ok(SimulatedPath {
        prefix: hist[first - depth..first].to_vec(),
        symbols: hist[first..].to_vec(),
    })
}

fn draw(probs: &[f64], u: f64) -> Sym {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i as Sym;
            }
        }
    }
    last as Sym
}

/// Provenance attached to a model produced by the estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub h_star: usize,
    pub c: f64,
    pub delta: f64,
    /// Nodes of the pruned tree, in text form.
    pub kept: Vec<String>,
}

/// JSON form of a [`VlmcModel`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub alphabet: Vec<String>,
    pub nodes: Vec<NodeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted: Option<FitInfo>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeRecord {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<f64>,
}

impl From<VlmcModel> for ModelFile {
    fn from(m: VlmcModel) -> Self {
        let leaf_of: HashMap<&SuffixStr, &Context> =
            m.leaves.iter().map(|l| (&l.path, l)).collect();
        let nodes = m
            .nodes()
            .into_iter()
            .map(|w| {
                let path = m.alphabet.format_path(w.as_slice());
                match leaf_of.get(&w) {
                    Some(leaf) => NodeRecord {
                        path,
                        children: None,
                        probs: Some(leaf.probs.clone()),
                        pi: leaf.pi,
                    },
                    None => NodeRecord {
                        path,
                        children: Some(
                            (0..m.alphabet.len())
                                .map(|b| m.alphabet.format_path(w.child(b as Sym).as_slice()))
                                .collect(),
                        ),
                        probs: None,
                        pi: None,
                    },
                }
            })
            .collect();
        ModelFile {
            alphabet: m.alphabet.tokens.clone(),
            nodes,
            fitted: m.fitted,
        }
    }
}

impl TryFrom<ModelFile> for VlmcModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let alphabet = Alphabet::new(f.alphabet)?;
        let mut leaves = Vec::new();
        let mut internal = HashSet::new();
        for rec in &f.nodes {
            let path: SuffixStr = alphabet.parse_path(&rec.path)?.into();
            match (&rec.children, &rec.probs) {
                (Some(children), None) => {
                    let expected: Vec<SuffixStr> = (0..alphabet.len())
                        .map(|b| path.child(b as Sym))
                        .collect();
                    let got = children
                        .iter()
                        .map(|c| alphabet.parse_path(c).map(SuffixStr::from))
                        .collect::<Result<Vec<_>>>()?;
                    if got != expected {
                        return Err(Error::InvalidModel(format!(
                            "node {:?} lists wrong children",
                            rec.path
                        )));
                    }
                    internal.insert(path);
                }
                (None, Some(probs)) => leaves.push(Context {
                    path,
                    probs: probs.clone(),
                    pi: rec.pi,
                }),
                _ => {
                    return Err(Error::InvalidModel(format!(
                        "node {:?} needs exactly one of children/probs",
                        rec.path
                    )))
                }
            }
        }
        let model = VlmcModel::new(alphabet, leaves)?;
        let real_internal: HashSet<SuffixStr> = model
            .nodes()
            .into_iter()
            .filter(|w| !model.leaves.iter().any(|l| &l.path == w))
            .collect();
        if !internal.is_subset(&real_internal) {
            return Err(Error::InvalidModel("internal node list does not match leaves".into()));
        }
        Ok(match f.fitted {
            Some(info) => model.with_fitted(info),
            None => model,
        })
    }
}
