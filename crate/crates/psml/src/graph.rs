//! Graph representation, file ingestion, synthetic benchmark generation,
//! anchor management, and the ablation transforms used by the baseline
//! comparison modes.
//!
//! Graphs are directed weighted multigraphs over string node ids. Loaders
//! prefix raw ids with a per-network namespace (e.g. `"s:"`, `"t:"`) so that
//! the two networks of an alignment problem never collide when merged into
//! one embedding universe. Parallel edges are kept and act as sampling-weight
//! multiplicity for the edge sampler.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::mix_seed;

pub type NodeIdx = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: NodeIdx,
    pub dst: NodeIdx,
    pub weight: f64,
}

/// Directed weighted multigraph with namespaced string node ids.
///
/// Undirected graphs store each edge once; adjacency lists mirror both
/// endpoints so neighborhood queries behave symmetrically.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    directed: bool,
    namespace: String,
    names: Vec<String>,
    index: HashMap<String, NodeIdx>,
    edges: Vec<Edge>,
    out_nbrs: Vec<Vec<NodeIdx>>,
    in_nbrs: Vec<Vec<NodeIdx>>,
}

impl Graph {
    pub fn new(directed: bool) -> Self {
        Graph {
            directed,
            ..Graph::default()
        }
    }

    /// Graph whose loader-facing ids are prefixed with `namespace`.
    pub fn with_namespace(directed: bool, namespace: impl Into<String>) -> Self {
        Graph {
            directed,
            namespace: namespace.into(),
            ..Graph::default()
        }
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn node_idx(&self, id: &str) -> Option<NodeIdx> {
        self.index.get(id).copied()
    }

    pub fn node_name(&self, idx: NodeIdx) -> &str {
        &self.names[idx]
    }

    /// Adds a node if absent; returns its index either way.
    pub fn add_node(&mut self, id: &str) -> NodeIdx {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.names.len();
        self.names.push(id.to_string());
        self.index.insert(id.to_string(), i);
        self.out_nbrs.push(Vec::new());
        self.in_nbrs.push(Vec::new());
        i
    }

    /// Adds an edge, creating missing endpoints. Weights must be positive.
    pub fn add_edge(&mut self, src: &str, dst: &str, weight: f64) -> Result<()> {
        if !(weight > 0.0) {
            return Err(Error::validation(format!(
                "edge ({src}, {dst}): weight must be positive, got {weight}"
            )));
        }
        let s = self.add_node(src);
        let d = self.add_node(dst);
        self.edges.push(Edge {
            src: s,
            dst: d,
            weight,
        });
        self.out_nbrs[s].push(d);
        self.in_nbrs[d].push(s);
        if !self.directed {
            self.out_nbrs[d].push(s);
            self.in_nbrs[s].push(d);
        }
        Ok(())
    }

    pub fn out_neighbors(&self, idx: NodeIdx) -> &[NodeIdx] {
        &self.out_nbrs[idx]
    }

    pub fn in_neighbors(&self, idx: NodeIdx) -> &[NodeIdx] {
        &self.in_nbrs[idx]
    }

    /// Distinct first-order neighbors (out and in), sorted by node id.
    pub fn neighbor_ids(&self, id: &str) -> Vec<String> {
        let Some(idx) = self.node_idx(id) else {
            return Vec::new();
        };
        let mut seen: Vec<NodeIdx> = self.out_nbrs[idx]
            .iter()
            .chain(&self.in_nbrs[idx])
            .copied()
            .filter(|&n| n != idx)
            .collect();
        seen.sort_unstable();
        seen.dedup();
        let mut ids: Vec<String> = seen.into_iter().map(|n| self.names[n].clone()).collect();
        ids.sort();
        ids
    }

    /// Weighted degree: sum of incident edge weights, each edge counted once
    /// per endpoint it touches. This is the unigram frequency the negative
    /// sampler raises to the 0.75 power.
    pub fn weighted_degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.node_count()];
        for e in &self.edges {
            deg[e.src] += e.weight;
            deg[e.dst] += e.weight;
        }
        deg
    }

    /// Clone of the node set with no edges; keeps namespace and direction.
    pub fn like(&self) -> Graph {
        Graph {
            directed: self.directed,
            namespace: self.namespace.clone(),
            names: self.names.clone(),
            index: self.index.clone(),
            edges: Vec::new(),
            out_nbrs: vec![Vec::new(); self.names.len()],
            in_nbrs: vec![Vec::new(); self.names.len()],
        }
    }

    /// Edge multiset as `(src-id, dst-id, weight)` strings, for comparisons.
    pub fn edge_triples(&self) -> Vec<(String, String, f64)> {
        self.edges
            .iter()
            .map(|e| {
                (
                    self.names[e.src].clone(),
                    self.names[e.dst].clone(),
                    e.weight,
                )
            })
            .collect()
    }

    fn strip_namespace<'a>(&self, id: &'a str) -> &'a str {
        id.strip_prefix(&self.namespace).unwrap_or(id)
    }

    /// Writes the edgelist with the graph's own namespace prefix stripped, so
    /// saved files round-trip through [`load_edgelist`] with the same
    /// namespace. Weight 1 edges omit the weight column.
    pub fn write_edgelist(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for e in &self.edges {
            let s = self.strip_namespace(&self.names[e.src]);
            let d = self.strip_namespace(&self.names[e.dst]);
            if e.weight == 1.0 {
                let _ = writeln!(out, "{s} {d}");
            } else {
                let _ = writeln!(out, "{s} {d} {}", e.weight);
            }
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Reads a whitespace-separated edgelist: `src dst [weight]`, `#` comments.
/// Raw ids are prefixed with `namespace` before insertion.
pub fn load_edgelist(path: &Path, directed: bool, namespace: &str) -> Result<Graph> {
    let text = fs::read_to_string(path)?;
    let mut g = Graph::with_namespace(directed, namespace);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let (src, dst, weight) = match tokens.as_slice() {
            [s, d] => (*s, *d, 1.0),
            [s, d, w] => {
                let w: f64 = w.parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("invalid weight '{w}'"),
                })?;
                (*s, *d, w)
            }
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("expected 'src dst [weight]', got {} token(s)", tokens.len()),
                })
            }
        };
        if !(weight > 0.0) {
            return Err(Error::validation(format!(
                "{}:{}: weight must be positive, got {weight}",
                path.display(),
                lineno + 1
            )));
        }
        g.add_edge(
            &format!("{namespace}{src}"),
            &format!("{namespace}{dst}"),
            weight,
        )?;
    }
    Ok(g)
}

/// One labeled cross-network identity pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorPair {
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitRole {
    Train,
    Test,
}

/// Labeled anchor pairs with an optional train/test tag per pair.
///
/// Invariant: no node id appears in more than one pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnchorSet {
    pairs: Vec<AnchorPair>,
    roles: Vec<Option<SplitRole>>,
}

impl AnchorSet {
    pub fn new() -> Self {
        AnchorSet::default()
    }

    pub fn push(&mut self, source: &str, target: &str) -> Result<()> {
        for p in &self.pairs {
            if p.source == source || p.target == target || p.source == target || p.target == source
            {
                return Err(Error::validation(format!(
                    "anchor node reused across pairs: ({source}, {target}) vs ({}, {})",
                    p.source, p.target
                )));
            }
        }
        self.pairs.push(AnchorPair {
            source: source.to_string(),
            target: target.to_string(),
        });
        self.roles.push(None);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[AnchorPair] {
        &self.pairs
    }

    pub fn role(&self, i: usize) -> Option<SplitRole> {
        self.roles[i]
    }

    pub fn train_pairs(&self) -> impl Iterator<Item = &AnchorPair> {
        self.pairs
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| **r == Some(SplitRole::Train))
            .map(|(p, _)| p)
    }

    pub fn test_pairs(&self) -> impl Iterator<Item = &AnchorPair> {
        self.pairs
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| **r == Some(SplitRole::Test))
            .map(|(p, _)| p)
    }

    pub fn train_count(&self) -> usize {
        self.roles
            .iter()
            .filter(|r| **r == Some(SplitRole::Train))
            .count()
    }

    pub fn test_count(&self) -> usize {
        self.roles
            .iter()
            .filter(|r| **r == Some(SplitRole::Test))
            .count()
    }

    /// Splits pairs into train/test: exactly `round(ratio * len)` train pairs
    /// (round half-up, floored at 1 so a 3% ratio never produces empty
    /// supervision), deterministic per seed.
    pub fn split(&self, train_ratio: f64, seed: u64) -> Result<AnchorSet> {
        if self.is_empty() {
            return Err(Error::validation("cannot split an empty anchor set"));
        }
        if !(train_ratio > 0.0 && train_ratio < 1.0) {
            return Err(Error::validation(format!(
                "train_ratio must be in (0,1), got {train_ratio}"
            )));
        }
        let k = ((train_ratio * self.len() as f64).round() as usize).max(1);
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let train: HashSet<usize> = order.into_iter().take(k).collect();
        let mut out = self.clone();
        for (i, role) in out.roles.iter_mut().enumerate() {
            *role = Some(if train.contains(&i) {
                SplitRole::Train
            } else {
                SplitRole::Test
            });
        }
        Ok(out)
    }

    /// Writes `src tgt` per line with the graphs' namespaces stripped.
    pub fn write(&self, path: &Path, gs: &Graph, gt: &Graph) -> Result<()> {
        let mut out = String::new();
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{} {}",
                gs.strip_namespace(&p.source),
                gt.strip_namespace(&p.target)
            );
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Reads `src_id tgt_id` lines, resolving ids against the two graphs. Raw
/// ids are tried with the graph's namespace prefix first, then verbatim.
/// Pairs come back untagged; call [`AnchorSet::split`] to assign roles.
pub fn load_anchors(path: &Path, gs: &Graph, gt: &Graph) -> Result<AnchorSet> {
    let text = fs::read_to_string(path)?;
    let mut set = AnchorSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let [s, t] = tokens.as_slice() else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected 'src_id tgt_id', got {} token(s)", tokens.len()),
            });
        };
        let src = resolve_id(gs, s).ok_or_else(|| {
            Error::validation(format!("anchor source id '{s}' not present in source graph"))
        })?;
        let tgt = resolve_id(gt, t).ok_or_else(|| {
            Error::validation(format!("anchor target id '{t}' not present in target graph"))
        })?;
        set.push(&src, &tgt)?;
    }
    Ok(set)
}

fn resolve_id(g: &Graph, raw: &str) -> Option<String> {
    let prefixed = format!("{}{raw}", g.namespace());
    if g.contains(&prefixed) {
        Some(prefixed)
    } else if g.contains(raw) {
        Some(raw.to_string())
    } else {
        None
    }
}

/// Parameters of the synthetic benchmark generator: one preferential-
/// attachment base graph copied twice with independent edge dropout.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SynthConfig {
    /// Nodes per network.
    pub nodes: usize,
    /// Edges added per new node during preferential attachment.
    pub attachment: usize,
    /// Fraction of nodes designated ground-truth anchors, in (0, 1].
    pub anchor_fraction: f64,
    /// Independent per-edge removal probability per copy, in [0, 1).
    pub edge_dropout: f64,
    /// Whether the generated graphs are treated as directed.
    pub directed: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            nodes: 1000,
            attachment: 3,
            anchor_fraction: 0.3,
            edge_dropout: 0.1,
            directed: false,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.attachment == 0 {
            return Err(Error::validation("attachment must be at least 1"));
        }
        if self.nodes < self.attachment + 1 {
            return Err(Error::validation(format!(
                "nodes ({}) must be at least attachment + 1 ({})",
                self.nodes,
                self.attachment + 1
            )));
        }
        if !(self.anchor_fraction > 0.0 && self.anchor_fraction <= 1.0) {
            return Err(Error::validation(format!(
                "anchor_fraction must be in (0,1], got {}",
                self.anchor_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.edge_dropout) {
            return Err(Error::validation(format!(
                "edge_dropout must be in [0,1), got {}",
                self.edge_dropout
            )));
        }
        Ok(())
    }
}

/// Barabasi-Albert edge list over integer node indices. Starts from
/// `m` seed nodes; each subsequent node attaches to `m` distinct existing
/// nodes sampled proportionally to degree.
pub(crate) fn preferential_attachment_edges(
    n: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity((n - m) * m);
    // Endpoint pool; each entry is one unit of degree mass.
    let mut repeated: Vec<usize> = Vec::with_capacity(2 * (n - m) * m);
    let mut targets: Vec<usize> = (0..m).collect();
    for v in m..n {
        for &t in &targets {
            edges.push((v, t));
        }
        repeated.extend_from_slice(&targets);
        repeated.extend(std::iter::repeat(v).take(m));
        if v + 1 < n {
            let mut next: Vec<usize> = Vec::with_capacity(m);
            while next.len() < m {
                let cand = repeated[rng.random_range(0..repeated.len())];
                if !next.contains(&cand) {
                    next.push(cand);
                }
            }
            targets = next;
        }
    }
    edges
}

/// Generates a synthetic alignment benchmark: one preferential-attachment
/// base graph, two copies with independent edge dropout, and an identity
/// anchor map over a random node subset. Source ids are prefixed `s:`,
/// target ids `t:`.
pub fn generate_pair(cfg: &SynthConfig) -> Result<(Graph, Graph, AnchorSet)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = preferential_attachment_edges(cfg.nodes, cfg.attachment, &mut rng);

    let mut gs = Graph::with_namespace(cfg.directed, "s:");
    let mut gt = Graph::with_namespace(cfg.directed, "t:");
    for i in 0..cfg.nodes {
        gs.add_node(&format!("s:{i}"));
        gt.add_node(&format!("t:{i}"));
    }
    for &(u, v) in &base {
        if rng.random::<f64>() >= cfg.edge_dropout {
            gs.add_edge(&format!("s:{u}"), &format!("s:{v}"), 1.0)?;
        }
    }
    for &(u, v) in &base {
        if rng.random::<f64>() >= cfg.edge_dropout {
            gt.add_edge(&format!("t:{u}"), &format!("t:{v}"), 1.0)?;
        }
    }

    let k = ((cfg.anchor_fraction * cfg.nodes as f64).round() as usize)
        .clamp(1, cfg.nodes);
    let mut order: Vec<usize> = (0..cfg.nodes).collect();
    order.shuffle(&mut rng);
    let mut chosen: Vec<usize> = order.into_iter().take(k).collect();
    chosen.sort_unstable();
    let mut anchors = AnchorSet::new();
    for i in chosen {
        anchors.push(&format!("s:{i}"), &format!("t:{i}"))?;
    }
    Ok((gs, gt, anchors))
}

/// Multiplies the weight of every edge incident to a train-anchor node by
/// `factor`. With the default factor 2 this is the "-AW" ablation.
pub fn ablation_add_weight(g: &Graph, anchors: &AnchorSet, factor: f64) -> Result<Graph> {
    if !(factor > 0.0) {
        return Err(Error::validation(format!(
            "weight factor must be positive, got {factor}"
        )));
    }
    let anchor_nodes: HashSet<NodeIdx> = anchors
        .train_pairs()
        .flat_map(|p| [p.source.as_str(), p.target.as_str()])
        .filter_map(|id| g.node_idx(id))
        .collect();
    let mut out = g.like();
    for e in g.edges() {
        let w = if anchor_nodes.contains(&e.src) || anchor_nodes.contains(&e.dst) {
            e.weight * factor
        } else {
            e.weight
        };
        out.add_edge(g.node_name(e.src), g.node_name(e.dst), w)?;
    }
    Ok(out)
}

/// Removes `round(rate * |E|)` uniformly chosen edges without replacement.
/// Nodes are retained even if isolated. This is the "--" ablation.
pub fn ablation_drop_edges(g: &Graph, rate: f64, seed: u64) -> Result<Graph> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::validation(format!(
            "drop rate must be in [0,1), got {rate}"
        )));
    }
    let k = (rate * g.edge_count() as f64).round() as usize;
    let mut order: Vec<usize> = (0..g.edge_count()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x0d70_9ed6));
    order.shuffle(&mut rng);
    let dropped: HashSet<usize> = order.into_iter().take(k).collect();
    let mut out = g.like();
    for (i, e) in g.edges().iter().enumerate() {
        if !dropped.contains(&i) {
            out.add_edge(g.node_name(e.src), g.node_name(e.dst), e.weight)?;
        }
    }
    Ok(out)
}

/// Stable digest over both graphs and the anchor list; recorded in run
/// manifests so paired runs can be checked for identical datasets.
pub fn dataset_digest(gs: &Graph, gt: &Graph, anchors: &AnchorSet) -> String {
    use crate::vecmath::fnv1a64;
    let mut h: u64 = 0xa5a5_a5a5;
    for g in [gs, gt] {
        let mut lines: Vec<String> = g
            .edge_triples()
            .into_iter()
            .map(|(s, d, w)| format!("{s}\t{d}\t{w}"))
            .collect();
        lines.sort();
        for l in lines {
            h = h.rotate_left(13) ^ fnv1a64(l.as_bytes());
        }
        h ^= g.node_count() as u64;
    }
    for p in anchors.pairs() {
        h = h.rotate_left(7) ^ fnv1a64(format!("{}\t{}", p.source, p.target).as_bytes());
    }
    format!("{h:016x}")
}
