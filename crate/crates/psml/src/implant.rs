//! Pseudo-anchor implantation: enumerable connection patterns, graph
//! surgery that adds mirrored pseudo nodes next to every train anchor in
//! both networks, one-step shift computations, and an executable
//! verification of the shift-decay chain along a path a-b-c.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{pair_gradient, EmbeddingSpace, PseudoInit, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::graph::{preferential_attachment_edges, AnchorSet, Graph};
use crate::vecmath::{axpy, dot, mix_seed, norm, sigmoid, sigmoid_prime, sub};

/// How one pseudo anchor links to its real anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorLink {
    /// Edge pseudo -> anchor.
    ToAnchor,
    /// Edge anchor -> pseudo.
    FromAnchor,
    Bidirectional,
}

/// How an unordered pseudo pair (i, j), i < j, is linked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PseudoLink {
    None,
    /// Edge i -> j.
    Forward,
    /// Edge j -> i.
    Backward,
    Bidirectional,
}

const ANCHOR_LINKS: [AnchorLink; 3] = [
    AnchorLink::ToAnchor,
    AnchorLink::FromAnchor,
    AnchorLink::Bidirectional,
];
const PSEUDO_LINKS: [PseudoLink; 4] = [
    PseudoLink::None,
    PseudoLink::Forward,
    PseudoLink::Backward,
    PseudoLink::Bidirectional,
];

/// Wiring scheme for the pseudo anchors of one real anchor: an anchor link
/// per pseudo index plus a link type per unordered pseudo pair. With `n`
/// pseudo anchors there are `3^n * 4^(n(n-1)/2)` distinct patterns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionPattern {
    anchor_links: Vec<AnchorLink>,
    pseudo_links: Vec<PseudoLink>,
}

impl ConnectionPattern {
    pub fn new(anchor_links: Vec<AnchorLink>, pseudo_links: Vec<PseudoLink>) -> Result<Self> {
        let n = anchor_links.len();
        if n == 0 {
            return Err(Error::validation(
                "a pattern needs at least one pseudo anchor",
            ));
        }
        if pseudo_links.len() != n * (n - 1) / 2 {
            return Err(Error::validation(format!(
                "expected {} pseudo-pair links for {n} pseudo anchors, got {}",
                n * (n - 1) / 2,
                pseudo_links.len()
            )));
        }
        Ok(ConnectionPattern {
            anchor_links,
            pseudo_links,
        })
    }

    /// The maximal-edge wiring: every link bidirectional. This is the default
    /// since patterns with more edges perform best.
    pub fn fully_bidirectional(n: usize) -> Result<Self> {
        ConnectionPattern::new(
            vec![AnchorLink::Bidirectional; n],
            vec![PseudoLink::Bidirectional; n * (n - 1) / 2],
        )
    }

    /// Pseudo anchors per real anchor.
    pub fn pseudo_count(&self) -> usize {
        self.anchor_links.len()
    }

    pub fn anchor_link(&self, i: usize) -> AnchorLink {
        self.anchor_links[i]
    }

    pub fn pseudo_link(&self, i: usize, j: usize) -> PseudoLink {
        self.pseudo_links[Self::pair_slot(self.pseudo_count(), i, j)]
    }

    /// Canonical slot of unordered pair (i, j), i < j, in row-major order.
    fn pair_slot(n: usize, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < n);
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Number of distinct patterns for `n` pseudo anchors:
    /// `3^n * 4^(n(n-1)/2)`.
    pub fn count(n: usize) -> Result<u64> {
        if n == 0 {
            return Err(Error::validation("pattern count undefined for n = 0"));
        }
        let anchors = 3u64
            .checked_pow(n as u32)
            .ok_or_else(|| Error::validation("pattern count overflows u64"))?;
        let pairs = n * (n - 1) / 2;
        let links = 4u64
            .checked_pow(pairs as u32)
            .ok_or_else(|| Error::validation("pattern count overflows u64"))?;
        anchors
            .checked_mul(links)
            .ok_or_else(|| Error::validation("pattern count overflows u64"))
    }

    /// Iterator over every pattern exactly once, in a fixed canonical order.
    pub fn enumerate(n: usize) -> Result<PatternIter> {
        let count = Self::count(n)?;
        Ok(PatternIter { n, next: 0, count })
    }

    /// The `index`-th pattern in enumeration order.
    pub fn from_index(n: usize, index: u64) -> Result<Self> {
        let count = Self::count(n)?;
        if index >= count {
            return Err(Error::validation(format!(
                "pattern index {index} out of range for n = {n} (count {count})"
            )));
        }
        let mut t = index;
        let mut anchor_links = Vec::with_capacity(n);
        for _ in 0..n {
            anchor_links.push(ANCHOR_LINKS[(t % 3) as usize]);
            t /= 3;
        }
        let mut pseudo_links = Vec::with_capacity(n * (n - 1) / 2);
        for _ in 0..n * (n - 1) / 2 {
            pseudo_links.push(PSEUDO_LINKS[(t % 4) as usize]);
            t /= 4;
        }
        ConnectionPattern::new(anchor_links, pseudo_links)
    }
}

impl Default for ConnectionPattern {
    fn default() -> Self {
        ConnectionPattern::fully_bidirectional(2).unwrap()
    }
}

pub struct PatternIter {
    n: usize,
    next: u64,
    count: u64,
}

impl Iterator for PatternIter {
    type Item = ConnectionPattern;

    fn next(&mut self) -> Option<ConnectionPattern> {
        if self.next >= self.count {
            return None;
        }
        let p = ConnectionPattern::from_index(self.n, self.next).expect("index in range");
        self.next += 1;
        Some(p)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.count - self.next) as usize;
        (left, Some(left))
    }
}

/// Pseudo nodes implanted for one train anchor, on both sides. Index `i` in
/// `source_ids` pairs with index `i` in `target_ids` as a cross-network
/// counterpart pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoEntry {
    pub anchor_source: String,
    pub anchor_target: String,
    pub source_ids: Vec<String>,
    pub target_ids: Vec<String>,
}

/// Registry of all implanted pseudo anchors: per-anchor ids in each network,
/// their cross-network counterpart pairing, and the wiring pattern used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoRegistry {
    pattern: ConnectionPattern,
    entries: Vec<PseudoEntry>,
}

impl PseudoRegistry {
    pub fn pattern(&self) -> &ConnectionPattern {
        &self.pattern
    }

    pub fn entries(&self) -> &[PseudoEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pseudo_per_anchor(&self) -> usize {
        self.pattern.pseudo_count()
    }

    /// Cross-network counterpart pairs `(pseudo in G^s, pseudo in G^t)`;
    /// exactly `n * #train-anchors` of them.
    pub fn counterpart_pairs(&self) -> Vec<(String, String)> {
        self.entries
            .iter()
            .flat_map(|e| {
                e.source_ids
                    .iter()
                    .cloned()
                    .zip(e.target_ids.iter().cloned())
            })
            .collect()
    }

    pub fn all_pseudo_ids(&self) -> BTreeSet<String> {
        self.entries
            .iter()
            .flat_map(|e| e.source_ids.iter().chain(&e.target_ids).cloned())
            .collect()
    }

    /// Bookkeeping the embedding trainer needs for near-anchor initialization
    /// and negative-pool exclusion.
    pub fn trainer_init(&self) -> PseudoInit {
        let mut anchored_to = Vec::new();
        for e in &self.entries {
            for id in &e.source_ids {
                anchored_to.push((id.clone(), e.anchor_source.clone()));
            }
            for id in &e.target_ids {
                anchored_to.push((id.clone(), e.anchor_target.clone()));
            }
        }
        PseudoInit {
            anchored_to,
            pseudo_ids: self.all_pseudo_ids(),
        }
    }
}

/// Adds `pattern.pseudo_count()` fresh pseudo nodes next to `anchor`, wired
/// per the pattern with weight-1 edges. In undirected graphs link direction
/// collapses to a single undirected edge.
pub(crate) fn wire_pseudo_nodes(
    g: &mut Graph,
    anchor: &str,
    pattern: &ConnectionPattern,
    ids: &[String],
) -> Result<()> {
    for id in ids {
        if g.contains(id) {
            return Err(Error::validation(format!(
                "pseudo id '{id}' collides with an existing node"
            )));
        }
    }
    for id in ids {
        g.add_node(id);
    }
    let directed = g.is_directed();
    for (i, id) in ids.iter().enumerate() {
        match pattern.anchor_link(i) {
            AnchorLink::ToAnchor => g.add_edge(id, anchor, 1.0)?,
            AnchorLink::FromAnchor => g.add_edge(anchor, id, 1.0)?,
            AnchorLink::Bidirectional => {
                g.add_edge(id, anchor, 1.0)?;
                if directed {
                    g.add_edge(anchor, id, 1.0)?;
                }
            }
        }
    }
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            match pattern.pseudo_link(i, j) {
                PseudoLink::None => {}
                PseudoLink::Forward => g.add_edge(&ids[i], &ids[j], 1.0)?,
                PseudoLink::Backward => g.add_edge(&ids[j], &ids[i], 1.0)?,
                PseudoLink::Bidirectional => {
                    g.add_edge(&ids[i], &ids[j], 1.0)?;
                    if directed {
                        g.add_edge(&ids[j], &ids[i], 1.0)?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Implants pseudo anchors for every train anchor in both networks. Purely
/// additive: real nodes and edges are untouched. Mirrored pseudo nodes are
/// registered as cross-network counterpart pairs.
pub fn implant(
    gs: &Graph,
    gt: &Graph,
    anchors: &AnchorSet,
    pattern: &ConnectionPattern,
    prefix: &str,
) -> Result<(Graph, Graph, PseudoRegistry)> {
    let n = pattern.pseudo_count();
    let mut out_s = gs.clone();
    let mut out_t = gt.clone();
    let mut entries = Vec::new();
    for pair in anchors.train_pairs() {
        let source_ids: Vec<String> = (0..n)
            .map(|i| format!("{prefix}{i}:{}", pair.source))
            .collect();
        let target_ids: Vec<String> = (0..n)
            .map(|i| format!("{prefix}{i}:{}", pair.target))
            .collect();
        wire_pseudo_nodes(&mut out_s, &pair.source, pattern, &source_ids)?;
        wire_pseudo_nodes(&mut out_t, &pair.target, pattern, &target_ids)?;
        entries.push(PseudoEntry {
            anchor_source: pair.source.clone(),
            anchor_target: pair.target.clone(),
            source_ids,
            target_ids,
        });
    }
    Ok((
        out_s,
        out_t,
        PseudoRegistry {
            pattern: pattern.clone(),
            entries,
        },
    ))
}

/// One-step displacement of an anchor attributable solely to its pseudo
/// anchors: `eta * sum_p pair_gradient(u_a, u_p, 1)`.
pub fn one_step_anchor_shift(
    space: &EmbeddingSpace,
    anchor: &str,
    pseudo_ids: &[String],
    eta: f64,
) -> Result<Vec<f64>> {
    let u_a = space
        .vector(anchor)
        .ok_or_else(|| Error::validation(format!("unknown anchor '{anchor}'")))?
        .to_vec();
    let mut shift = vec![0.0; space.dim()];
    for p in pseudo_ids {
        let u_p = space
            .vector(p)
            .ok_or_else(|| Error::validation(format!("unknown pseudo anchor '{p}'")))?;
        let g = pair_gradient(&u_a, u_p, true);
        axpy(&mut shift, eta, &g);
    }
    Ok(shift)
}

/// Shift-magnitude proxy for a first-order neighbor `b` of a shifted node
/// `a`: `sigma(u_b . (u_a + delta_a)) - sigma(u_b . u_a)`. Applying it again
/// with `(c, b, delta_b)` propagates the proxy one hop further.
pub fn neighbor_shift_proxy(
    space: &EmbeddingSpace,
    neighbor: &str,
    anchor: &str,
    delta_a: &[f64],
) -> Result<f64> {
    let u_b = space
        .vector(neighbor)
        .ok_or_else(|| Error::validation(format!("unknown node '{neighbor}'")))?;
    let u_a = space
        .vector(anchor)
        .ok_or_else(|| Error::validation(format!("unknown node '{anchor}'")))?;
    let mut shifted = u_a.to_vec();
    axpy(&mut shifted, 1.0, delta_a);
    Ok(sigmoid(dot(u_b, &shifted)) - sigmoid(dot(u_b, u_a)))
}

/// Configuration of the shift-decay experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct DecayConfig {
    /// Size of the random background graph the path hangs off.
    pub background_nodes: usize,
    /// Preferential-attachment parameter of the background graph.
    pub attachment: usize,
    /// Pseudo anchors implanted at the path head; 0 is the control case.
    pub pseudo_count: usize,
    /// Independent seeded trials.
    pub seeds: usize,
    pub dim: usize,
    pub learning_rate: f64,
    pub negatives: usize,
    /// Positive samples per training run.
    pub samples: usize,
    /// Draws for the scalar one-step bound check.
    pub scalar_draws: usize,
    pub seed: u64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            background_nodes: 40,
            attachment: 2,
            pseudo_count: 2,
            seeds: 20,
            dim: 16,
            learning_rate: 0.025,
            negatives: 5,
            samples: 30_000,
            scalar_draws: 10_000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecaySeedRecord {
    pub seed: u64,
    pub delta_a: f64,
    pub delta_b: f64,
    pub delta_c: f64,
}

/// Outcome of the decay experiment: per-seed displacement norms along the
/// path a-b-c, their means, ordering flags, and the scalar bound tally.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    pub records: Vec<DecaySeedRecord>,
    pub mean_delta_a: f64,
    pub mean_delta_b: f64,
    pub mean_delta_c: f64,
    /// mean |da| > mean |db| > mean |dc|.
    pub mean_ordering_holds: bool,
    /// Trials whose displacements are strictly ordered individually.
    pub seeds_ordered: usize,
    pub scalar_draws: usize,
    pub scalar_violations: usize,
}

impl DecayReport {
    /// Structured `key: value` rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seeds: {}", self.records.len());
        let _ = writeln!(out, "mean_delta_a: {:.6}", self.mean_delta_a);
        let _ = writeln!(out, "mean_delta_b: {:.6}", self.mean_delta_b);
        let _ = writeln!(out, "mean_delta_c: {:.6}", self.mean_delta_c);
        let _ = writeln!(out, "mean_ordering_holds: {}", self.mean_ordering_holds);
        let _ = writeln!(out, "seeds_ordered: {}", self.seeds_ordered);
        let _ = writeln!(out, "scalar_draws: {}", self.scalar_draws);
        let _ = writeln!(out, "scalar_violations: {}", self.scalar_violations);
        out
    }

    /// Machine-readable per-seed records.
    pub fn seeds_csv(&self) -> String {
        let mut out = String::from("seed,delta_a,delta_b,delta_c\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:.9e},{:.9e},{:.9e}",
                r.seed, r.delta_a, r.delta_b, r.delta_c
            );
        }
        out
    }
}

/// Path graph a-b-c hanging off a random background graph; `a` additionally
/// connects to the background's first node.
fn decay_trial_graph(cfg: &DecayConfig, trial_seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let edges = preferential_attachment_edges(cfg.background_nodes, cfg.attachment, &mut rng);
    let mut g = Graph::new(false);
    for (u, v) in edges {
        g.add_edge(&format!("n{u}"), &format!("n{v}"), 1.0)?;
    }
    g.add_edge("a", "n0", 1.0)?;
    g.add_edge("a", "b", 1.0)?;
    g.add_edge("b", "c", 1.0)?;
    Ok(g)
}

/// Trains the trial graph twice from identical real-node initialization,
/// with and without pseudo anchors at `a`, and reports how far the path
/// nodes moved. Repeats over independent seeds; also runs the scalar
/// one-step bound check.
pub fn shift_decay_experiment(cfg: &DecayConfig) -> Result<DecayReport> {
    let mut records = Vec::with_capacity(cfg.seeds);
    for trial in 0..cfg.seeds {
        let trial_seed = mix_seed(cfg.seed, trial as u64);
        let base_graph = decay_trial_graph(cfg, trial_seed)?;
        let mut implanted = base_graph.clone();
        if cfg.pseudo_count > 0 {
            let pattern = ConnectionPattern::fully_bidirectional(cfg.pseudo_count)?;
            let ids: Vec<String> = (0..cfg.pseudo_count).map(|i| format!("p:{i}:a")).collect();
            wire_pseudo_nodes(&mut implanted, "a", &pattern, &ids)?;
        }
        let train_cfg = TrainConfig {
            dim: cfg.dim,
            learning_rate: cfg.learning_rate,
            negatives: cfg.negatives,
            epochs: 1,
            samples_per_epoch: cfg.samples,
            seed: trial_seed,
            ..TrainConfig::default()
        };
        let base = run_single(&base_graph, &train_cfg)?;
        let moved = run_single(&implanted, &train_cfg)?;
        let delta =
            |id: &str| -> f64 { norm(&sub(moved.vector(id).unwrap(), base.vector(id).unwrap())) };
        records.push(DecaySeedRecord {
            seed: trial_seed,
            delta_a: delta("a"),
            delta_b: delta("b"),
            delta_c: delta("c"),
        });
    }
    let n = records.len().max(1) as f64;
    let mean_delta_a = records.iter().map(|r| r.delta_a).sum::<f64>() / n;
    let mean_delta_b = records.iter().map(|r| r.delta_b).sum::<f64>() / n;
    let mean_delta_c = records.iter().map(|r| r.delta_c).sum::<f64>() / n;
    let seeds_ordered = records
        .iter()
        .filter(|r| r.delta_a > r.delta_b && r.delta_b > r.delta_c)
        .count();
    let (scalar_violations, scalar_draws) = scalar_decay_check(cfg.scalar_draws, cfg.seed);
    Ok(DecayReport {
        records,
        mean_delta_a,
        mean_delta_b,
        mean_delta_c,
        mean_ordering_holds: mean_delta_a > mean_delta_b && mean_delta_b > mean_delta_c,
        seeds_ordered,
        scalar_draws,
        scalar_violations,
    })
}

fn run_single(g: &Graph, cfg: &TrainConfig) -> Result<EmbeddingSpace> {
    let mut trainer = Trainer::single(g, cfg)?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch();
    }
    Ok(trainer.into_space())
}

/// Scalar (d = 1) check of the one-step decay chain: with the propagated
/// shift written as `db = da * sigma'(u_b (u_a + da))` and
/// `sigma' = sigma(1-sigma) in (0, 0.25]`, the bound `db <= da * sigma'(...)`
/// and the strict decay `db < da` must never be violated.
pub fn scalar_decay_check(draws: usize, seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5ca1_a2));
    let mut violations = 0usize;
    for _ in 0..draws {
        let u_a: f64 = rng.random_range(-2.0..2.0);
        let u_b: f64 = rng.random_range(-2.0..2.0);
        let da: f64 = rng.random_range(1e-3..1.0);
        let sp = sigmoid_prime(u_b * (u_a + da));
        let db = da * sp;
        let in_range = sp > 0.0 && sp <= 0.25;
        let bounded = db <= da * sp + 1e-15;
        let decays = db < da;
        if !(in_range && bounded && decays) {
            violations += 1;
        }
    }
    (violations, draws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use std::collections::HashSet;

    #[test]
    fn pattern_counts_match_formula() {
        assert_eq!(ConnectionPattern::count(1).unwrap(), 3);
        assert_eq!(ConnectionPattern::count(2).unwrap(), 36);
        assert_eq!(ConnectionPattern::count(3).unwrap(), 1728);
        assert!(ConnectionPattern::count(0).is_err());
    }

    #[test]
    fn enumeration_is_exhaustive_and_unique() {
        for n in 1..=3 {
            let count = ConnectionPattern::count(n).unwrap() as usize;
            let all: Vec<ConnectionPattern> = ConnectionPattern::enumerate(n).unwrap().collect();
            assert_eq!(all.len(), count);
            let distinct: HashSet<String> = all.iter().map(|p| format!("{p:?}")).collect();
            assert_eq!(distinct.len(), count);
        }
    }

    fn tagged_anchor_pair() -> (Graph, Graph, AnchorSet) {
        let mut gs = Graph::with_namespace(false, "s:");
        gs.add_edge("s:a", "s:b", 1.0).unwrap();
        let mut gt = Graph::with_namespace(false, "t:");
        gt.add_edge("t:a", "t:z", 1.0).unwrap();
        let mut anchors = AnchorSet::new();
        anchors.push("s:a", "t:a").unwrap();
        anchors.push("s:b", "t:z").unwrap();
        let mut split = None;
        for seed in 0..32 {
            let cand = anchors.split(0.5, seed).unwrap();
            if cand.train_pairs().any(|p| p.source == "s:a") {
                split = Some(cand);
                break;
            }
        }
        (gs, gt, split.unwrap())
    }

    #[test]
    fn default_pattern_adds_two_nodes_and_three_links() {
        let (gs, gt, anchors) = tagged_anchor_pair();
        let pattern = ConnectionPattern::default();
        let (out_s, out_t, reg) = implant(&gs, &gt, &anchors, &pattern, "p:").unwrap();
        assert_eq!(out_s.node_count(), gs.node_count() + 2);
        assert_eq!(out_t.node_count(), gt.node_count() + 2);
        // Undirected graphs: a-p1, a-p2, p1-p2 are three edges each.
        assert_eq!(out_s.edge_count(), gs.edge_count() + 3);
        assert_eq!(out_t.edge_count(), gt.edge_count() + 3);
        assert_eq!(reg.counterpart_pairs().len(), 2);
    }

    #[test]
    fn directed_bidirectional_links_add_both_arcs() {
        let mut gs = Graph::new(true);
        gs.add_edge("s:a", "s:b", 1.0).unwrap();
        let mut gt = Graph::new(true);
        gt.add_edge("t:a", "t:z", 1.0).unwrap();
        let mut anchors = AnchorSet::new();
        anchors.push("s:a", "t:a").unwrap();
        anchors.push("s:b", "t:z").unwrap();
        let anchors = (0..32)
            .map(|s| anchors.split(0.5, s).unwrap())
            .find(|a| a.train_pairs().any(|p| p.source == "s:a"))
            .unwrap();
        let (out_s, _, _) =
            implant(&gs, &gt, &anchors, &ConnectionPattern::default(), "p:").unwrap();
        assert_eq!(out_s.edge_count(), gs.edge_count() + 6);
    }

    #[test]
    fn implant_without_train_anchors_is_identity() {
        let mut gs = Graph::new(false);
        gs.add_edge("s:a", "s:b", 1.0).unwrap();
        let mut gt = Graph::new(false);
        gt.add_edge("t:a", "t:b", 1.0).unwrap();
        let anchors = AnchorSet::new();
        let (out_s, out_t, reg) =
            implant(&gs, &gt, &anchors, &ConnectionPattern::default(), "p:").unwrap();
        assert_eq!(out_s.edge_triples(), gs.edge_triples());
        assert_eq!(out_t.edge_triples(), gt.edge_triples());
        assert!(reg.is_empty());
    }

    #[test]
    fn implant_is_purely_additive() {
        let (gs, gt, anchors) = tagged_anchor_pair();
        let (out_s, _, _) =
            implant(&gs, &gt, &anchors, &ConnectionPattern::default(), "p:").unwrap();
        let original = gs.edge_triples();
        assert_eq!(&out_s.edge_triples()[..original.len()], &original[..]);
    }

    #[test]
    fn implant_detects_id_collisions() {
        let (mut gs, gt, anchors) = tagged_anchor_pair();
        gs.add_node("p:0:s:a");
        let err = implant(&gs, &gt, &anchors, &ConnectionPattern::default(), "p:").unwrap_err();
        assert!(err.to_string().contains("collides"), "{err}");
    }

    #[test]
    fn registry_bijection_counts() {
        let cfg = crate::graph::SynthConfig {
            nodes: 60,
            attachment: 2,
            anchor_fraction: 0.5,
            edge_dropout: 0.0,
            directed: false,
            seed: 5,
        };
        let (gs, gt, anchors) = crate::graph::generate_pair(&cfg).unwrap();
        let anchors = anchors.split(0.4, 9).unwrap();
        let pattern = ConnectionPattern::fully_bidirectional(3).unwrap();
        let (_, _, reg) = implant(&gs, &gt, &anchors, &pattern, "p:").unwrap();
        assert_eq!(reg.counterpart_pairs().len(), 3 * anchors.train_count());
        assert_eq!(reg.all_pseudo_ids().len(), 2 * 3 * anchors.train_count());
    }

    fn toy_space(rows: Vec<(&str, Vec<f64>)>) -> EmbeddingSpace {
        let dim = rows[0].1.len();
        EmbeddingSpace::from_rows(
            crate::embed::Geometry::Euclidean,
            dim,
            rows.into_iter()
                .map(|(id, v)| (id.to_string(), v))
                .collect(),
            HashMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn one_step_shift_hand_case() {
        // u_a orthogonal to u_p1 = u_p2 = [1, 0]: two terms of 0.5 * [1, 0],
        // scaled by eta = 0.1.
        let space = toy_space(vec![
            ("a", vec![0.0, 1.0]),
            ("p1", vec![1.0, 0.0]),
            ("p2", vec![1.0, 0.0]),
        ]);
        let shift =
            one_step_anchor_shift(&space, "a", &["p1".to_string(), "p2".to_string()], 0.1)
                .unwrap();
        assert!((shift[0] - 0.1).abs() < 1e-12, "{shift:?}");
        assert!(shift[1].abs() < 1e-12);

        let zero = one_step_anchor_shift(&space, "a", &["p1".to_string()], 0.0).unwrap();
        assert!(zero.iter().all(|c| *c == 0.0));
        let empty = one_step_anchor_shift(&space, "a", &[], 0.1).unwrap();
        assert!(empty.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn proxy_hand_case_and_oddness() {
        let space = toy_space(vec![("b", vec![1.0, 0.0]), ("a", vec![0.0, 0.0])]);
        assert_eq!(
            neighbor_shift_proxy(&space, "b", "a", &[0.0, 0.0]).unwrap(),
            0.0
        );
        let v = neighbor_shift_proxy(&space, "b", "a", &[1.0, 0.0]).unwrap();
        assert!((v - 0.231_058_578_630_004_9).abs() < 1e-12);
        // Odd in delta around 0 when u_a = 0.
        let neg = neighbor_shift_proxy(&space, "b", "a", &[-1.0, 0.0]).unwrap();
        assert!((v + neg).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_prime_stays_in_unit_quarter_interval() {
        let mut x = -50.0;
        while x <= 50.0 {
            let sp = sigmoid_prime(x);
            assert!(sp > 0.0 && sp <= 0.25, "sigma'({x}) = {sp}");
            x += 0.01;
        }
    }

    #[test]
    fn scalar_bound_has_no_violations() {
        let (violations, draws) = scalar_decay_check(10_000, 3);
        assert_eq!(draws, 10_000);
        assert_eq!(violations, 0);
    }

    #[test]
    fn decay_control_run_is_exactly_zero() {
        let cfg = DecayConfig {
            pseudo_count: 0,
            seeds: 2,
            samples: 2_000,
            background_nodes: 20,
            scalar_draws: 100,
            ..DecayConfig::default()
        };
        let report = shift_decay_experiment(&cfg).unwrap();
        for r in &report.records {
            assert_eq!(r.delta_a, 0.0);
            assert_eq!(r.delta_b, 0.0);
            assert_eq!(r.delta_c, 0.0);
        }
    }

    #[test]
    fn decay_smoke_produces_records() {
        let cfg = DecayConfig {
            seeds: 3,
            samples: 4_000,
            background_nodes: 24,
            scalar_draws: 500,
            ..DecayConfig::default()
        };
        let report = shift_decay_experiment(&cfg).unwrap();
        assert_eq!(report.records.len(), 3);
        assert_eq!(report.scalar_violations, 0);
        let csv = report.seeds_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(report.to_text().contains("mean_delta_a"));
    }
}
