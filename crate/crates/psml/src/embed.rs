//! Structural-proximity embedding trainer with negative sampling over the
//! merged two-network universe, plus the embedding space container and its
//! text persistence format.
//!
//! Alignment works by embedding *sharing*: every train-anchor pair collapses
//! to a single universe node whose edge set is the union of both sides, so
//! both original ids always resolve to one shared vector. Training samples
//! edges proportionally to weight, forms one positive pair plus `k`
//! negatives drawn from the `degree^0.75` law, and applies logistic SGD
//! updates with a linearly decaying learning rate.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AnchorSet, Graph, NodeIdx};
use crate::sampling::{AliasTable, NegativeTable};
use crate::vecmath::{dot, fnv1a64, gaussian, mix_seed, sigmoid};

/// Which structural proximity the trainer preserves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proximity {
    /// Direct-edge closeness; both endpoint vectors update per pair.
    First,
    /// Shared-neighborhood closeness via separate context vectors.
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Euclidean,
    Lorentz,
}

/// Trainer hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainConfig {
    /// Embedding dimension (spatial dimension for the Lorentz trainer).
    pub dim: usize,
    /// Initial SGD step size; decays linearly to 1e-4 of itself.
    pub learning_rate: f64,
    /// Negatives drawn per positive pair.
    pub negatives: usize,
    pub epochs: usize,
    /// Positive samples per epoch; the paper leaves the epoch size open, so
    /// it is explicit here.
    pub samples_per_epoch: usize,
    pub proximity: Proximity,
    /// Vectors initialize uniformly in [-init_scale, init_scale] / dim.
    pub init_scale: f64,
    pub seed: u64,
    /// Worker threads for asynchronous updates. Determinism is only
    /// guaranteed with one worker.
    pub workers: usize,
    /// Whether implanted pseudo nodes may be drawn as negatives.
    pub pseudo_in_negatives: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 32,
            learning_rate: 0.025,
            negatives: 5,
            epochs: 10,
            samples_per_epoch: 10_000,
            proximity: Proximity::First,
            init_scale: 0.5,
            seed: 1,
            workers: 1,
            pseudo_in_negatives: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::validation("dim must be at least 2"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::validation("learning_rate must be positive"));
        }
        if self.negatives < 1 {
            return Err(Error::validation("negatives must be at least 1"));
        }
        if self.samples_per_epoch == 0 {
            return Err(Error::validation("samples_per_epoch must be positive"));
        }
        if self.workers == 0 {
            return Err(Error::validation("workers must be at least 1"));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::validation("init_scale must be positive"));
        }
        Ok(())
    }
}

/// Structural preserving objective for one pair:
/// `L*ln(sigma(u_i.u_j)) + (1-L)*ln(1 - sigma(u_i.u_j))`, always <= 0.
/// The logistic output is clamped to `[1e-12, 1 - 1e-12]` before the log.
pub fn pair_loss(u_i: &[f64], u_j: &[f64], context: bool) -> f64 {
    const EPS: f64 = 1e-12;
    let s = sigmoid(dot(u_i, u_j)).clamp(EPS, 1.0 - EPS);
    if context {
        s.ln()
    } else {
        (1.0 - s).ln()
    }
}

/// Ascent gradient of [`pair_loss`] with respect to `u_i`:
/// `[L - sigma(u_i.u_j)] * u_j`.
pub fn pair_gradient(u_i: &[f64], u_j: &[f64], context: bool) -> Vec<f64> {
    let label = if context { 1.0 } else { 0.0 };
    let coef = label - sigmoid(dot(u_i, u_j));
    u_j.iter().map(|x| coef * x).collect()
}

/// Draws `k` node ids from the `degree^0.75` unigram law over `g`, excluding
/// `target` and its out-neighbors. Convenience wrapper around
/// [`NegativeTable`]; the trainer builds its table once instead.
pub fn sample_negatives(
    g: &Graph,
    target: &str,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<String>> {
    let idx = g
        .node_idx(target)
        .ok_or_else(|| Error::validation(format!("unknown node '{target}'")))?;
    let table = NegativeTable::build(g, &HashSet::new())?;
    let skip: HashSet<NodeIdx> = g.out_neighbors(idx).iter().copied().collect();
    let draws = table.sample_excluding(idx, &skip, k, rng)?;
    Ok(draws.into_iter().map(|i| g.node_name(i).to_string()).collect())
}

/// Node-id -> vector map with the merged-universe bookkeeping. Lookups by
/// original id transparently resolve through the merge map, so both members
/// of a train-anchor pair see the same shared vector.
#[derive(Debug, Clone)]
pub struct EmbeddingSpace {
    dim: usize,
    geometry: Geometry,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    ctx: Option<Vec<f64>>,
    merged: HashMap<String, String>,
}

impl EmbeddingSpace {
    pub fn from_rows(
        geometry: Geometry,
        dim: usize,
        rows: Vec<(String, Vec<f64>)>,
        merged: HashMap<String, String>,
    ) -> Result<Self> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut index = HashMap::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, v) in rows {
            if v.len() != dim {
                return Err(Error::validation(format!(
                    "vector for '{id}' has length {}, expected {dim}",
                    v.len()
                )));
            }
            index.insert(id.clone(), ids.len());
            ids.push(id);
            data.extend_from_slice(&v);
        }
        Ok(EmbeddingSpace {
            dim,
            geometry,
            ids,
            index,
            data,
            ctx: None,
            merged,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }

    /// Universe id an original node id resolves to (identity for unmerged).
    pub fn universe_id<'a>(&'a self, id: &'a str) -> &'a str {
        self.merged.get(id).map(String::as_str).unwrap_or(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(self.universe_id(id))
    }

    pub fn vector(&self, id: &str) -> Option<&[f64]> {
        let row = *self.index.get(self.universe_id(id))?;
        Some(&self.data[row * self.dim..(row + 1) * self.dim])
    }

    pub fn set_vector(&mut self, id: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::validation(format!(
                "vector length {} does not match dim {}",
                v.len(),
                self.dim
            )));
        }
        let uid = self.universe_id(id).to_string();
        let row = *self
            .index
            .get(&uid)
            .ok_or_else(|| Error::validation(format!("unknown node '{id}'")))?;
        self.data[row * self.dim..(row + 1) * self.dim].copy_from_slice(v);
        Ok(())
    }

    pub fn ctx_vector(&self, id: &str) -> Option<&[f64]> {
        let ctx = self.ctx.as_ref()?;
        let row = *self.index.get(self.universe_id(id))?;
        Some(&ctx[row * self.dim..(row + 1) * self.dim])
    }

    pub fn has_context(&self) -> bool {
        self.ctx.is_some()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), &self.data[i * self.dim..(i + 1) * self.dim]))
    }

    pub fn merged_map(&self) -> &HashMap<String, String> {
        &self.merged
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
            && self
                .ctx
                .as_ref()
                .map_or(true, |c| c.iter().all(|x| x.is_finite()))
    }

    /// Text persistence: header `N d` (or `N n lorentz` with n+1 coordinates
    /// per row), then `id c1 ... cd` rows at 9 significant digits.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        match self.geometry {
            Geometry::Euclidean => {
                let _ = writeln!(out, "{} {}", self.len(), self.dim);
            }
            Geometry::Lorentz => {
                let _ = writeln!(out, "{} {} lorentz", self.len(), self.dim - 1);
            }
        }
        for (id, row) in self.rows() {
            let _ = write!(out, "{id}");
            for c in row {
                let _ = write!(out, " {c:.8e}");
            }
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "empty embedding file".into(),
        })?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        let (n, dim, geometry) = match tokens.as_slice() {
            [n, d] => (n.parse::<usize>(), d.parse::<usize>(), Geometry::Euclidean),
            [n, d, flag] if *flag == "lorentz" => (
                n.parse::<usize>(),
                d.parse::<usize>().map(|v| v + 1),
                Geometry::Lorentz,
            ),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("bad header '{header}'"),
                })
            }
        };
        let (n, dim) = match (n, dim) {
            (Ok(n), Ok(d)) => (n, d),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("bad header '{header}'"),
                })
            }
        };
        let mut rows = Vec::with_capacity(n);
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let id = it.next().unwrap().to_string();
            let coords: std::result::Result<Vec<f64>, _> = it.map(str::parse::<f64>).collect();
            let coords = coords.map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: "invalid coordinate".into(),
            })?;
            if coords.len() != dim {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("expected {dim} coordinates, got {}", coords.len()),
                });
            }
            rows.push((id, coords));
        }
        if rows.len() != n {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("header claims {n} rows, file has {}", rows.len()),
            });
        }
        EmbeddingSpace::from_rows(geometry, dim, rows, HashMap::new())
    }
}

/// Merged two-network universe: train-anchor pairs collapse to the source-
/// side id; everything else maps to itself.
#[derive(Debug, Clone)]
pub(crate) struct Universe {
    pub graph: Graph,
    pub merged: HashMap<String, String>,
}

pub(crate) fn build_universe(gs: &Graph, gt: &Graph, anchors: &AnchorSet) -> Result<Universe> {
    if gt.node_count() > 0 && gs.is_directed() != gt.is_directed() {
        return Err(Error::validation(
            "source and target graphs must agree on directedness",
        ));
    }
    let mut merged: HashMap<String, String> = HashMap::new();
    for p in anchors.train_pairs() {
        if !gs.contains(&p.source) {
            return Err(Error::validation(format!(
                "train anchor source '{}' missing from source graph",
                p.source
            )));
        }
        if !gt.contains(&p.target) {
            return Err(Error::validation(format!(
                "train anchor target '{}' missing from target graph",
                p.target
            )));
        }
        merged.insert(p.target.clone(), p.source.clone());
    }
    let mut graph = Graph::new(gs.is_directed());
    fn map(merged: &HashMap<String, String>, id: &str) -> String {
        merged.get(id).cloned().unwrap_or_else(|| id.to_string())
    }
    for id in gs.node_ids() {
        graph.add_node(id);
        merged.entry(id.to_string()).or_insert_with(|| id.to_string());
    }
    for id in gt.node_ids() {
        let uid = map(&merged, id);
        graph.add_node(&uid);
        merged.entry(id.to_string()).or_insert(uid);
    }
    for g in [gs, gt] {
        for e in g.edges() {
            graph.add_edge(
                &map(&merged, g.node_name(e.src)),
                &map(&merged, g.node_name(e.dst)),
                e.weight,
            )?;
        }
    }
    Ok(Universe { graph, merged })
}

/// Pseudo-node bookkeeping the trainer needs: which pseudo id hangs off
/// which real anchor (for near-anchor initialization) and the full pseudo id
/// set (for negative-pool exclusion).
#[derive(Debug, Clone, Default)]
pub struct PseudoInit {
    /// `(pseudo id, real anchor id in the same network)`.
    pub anchored_to: Vec<(String, String)>,
    pub pseudo_ids: BTreeSet<String>,
}

/// Flat vector table with per-component atomic access. Multi-worker training
/// applies unsynchronized read-modify-write updates; lost updates are
/// tolerated and torn rows cannot occur because each component is an atomic
/// f64-bits cell.
pub(crate) struct VectorTable {
    dim: usize,
    cells: Vec<AtomicU64>,
}

impl VectorTable {
    fn zeros(rows: usize, dim: usize) -> Self {
        let cells = (0..rows * dim)
            .map(|_| AtomicU64::new(0f64.to_bits()))
            .collect();
        VectorTable { dim, cells }
    }

    #[inline]
    fn read_row(&self, row: usize, buf: &mut [f64]) {
        let base = row * self.dim;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = f64::from_bits(self.cells[base + i].load(Ordering::Relaxed));
        }
    }

    fn row_vec(&self, row: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        self.read_row(row, &mut v);
        v
    }

    fn set_row(&self, row: usize, vals: &[f64]) {
        let base = row * self.dim;
        for (i, v) in vals.iter().enumerate() {
            self.cells[base + i].store(v.to_bits(), Ordering::Relaxed);
        }
    }

    #[inline]
    fn add_scaled(&self, row: usize, coef: f64, vals: &[f64]) {
        let base = row * self.dim;
        for (i, v) in vals.iter().enumerate() {
            let cell = &self.cells[base + i];
            let cur = f64::from_bits(cell.load(Ordering::Relaxed));
            cell.store((cur + coef * v).to_bits(), Ordering::Relaxed);
        }
    }

    fn snapshot(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| f64::from_bits(c.load(Ordering::Relaxed)))
            .collect()
    }
}

/// Stepwise embedding trainer over the merged universe. Callers run epochs
/// explicitly, which lets the meta-learning loop interleave fine-tuning
/// between epochs.
pub struct Trainer {
    universe: Universe,
    cfg: TrainConfig,
    nodes: VectorTable,
    ctx: Option<VectorTable>,
    edge_alias: AliasTable,
    edge_endpoints: Vec<(NodeIdx, NodeIdx)>,
    negatives: NegativeTable,
    out_skip: Vec<HashSet<NodeIdx>>,
    epoch: usize,
    total_samples: u64,
}

impl Trainer {
    pub fn new(gs: &Graph, gt: &Graph, anchors: &AnchorSet, cfg: &TrainConfig) -> Result<Self> {
        Trainer::with_pseudo(gs, gt, anchors, cfg, &PseudoInit::default())
    }

    /// Trainer over a single network (embeds one graph on its own).
    pub fn single(g: &Graph, cfg: &TrainConfig) -> Result<Self> {
        Trainer::new(g, &Graph::new(g.is_directed()), &AnchorSet::new(), cfg)
    }

    pub fn with_pseudo(
        gs: &Graph,
        gt: &Graph,
        anchors: &AnchorSet,
        cfg: &TrainConfig,
        pseudo: &PseudoInit,
    ) -> Result<Self> {
        cfg.validate()?;
        let universe = build_universe(gs, gt, anchors)?;
        let n = universe.graph.node_count();
        if universe.graph.edge_count() == 0 {
            return Err(Error::validation("universe graph has no edges to sample"));
        }

        let nodes = VectorTable::zeros(n, cfg.dim);
        let pseudo_rows: Vec<usize> = pseudo
            .pseudo_ids
            .iter()
            .filter_map(|id| universe.graph.node_idx(id))
            .collect();
        let pseudo_rowset: HashSet<usize> = pseudo_rows.iter().copied().collect();

        // Initial vectors are a pure function of (seed, node id) so that runs
        // with and without implanted nodes start real nodes identically.
        for row in 0..n {
            if pseudo_rowset.contains(&row) {
                continue;
            }
            let id = universe.graph.node_name(row);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, fnv1a64(id.as_bytes())));
            let v: Vec<f64> = (0..cfg.dim)
                .map(|_| rng.random_range(-cfg.init_scale..cfg.init_scale) / cfg.dim as f64)
                .collect();
            nodes.set_row(row, &v);
        }
        // Pseudo nodes start at the mean of their anchor's neighborhood plus
        // small noise, i.e. near the base direction the fine-tuning steers.
        for (pid, anchor) in &pseudo.anchored_to {
            let Some(prow) = universe.graph.node_idx(pid) else {
                continue;
            };
            let auid = universe
                .merged
                .get(anchor)
                .cloned()
                .unwrap_or_else(|| anchor.clone());
            let arow = universe.graph.node_idx(&auid).ok_or_else(|| {
                Error::validation(format!("pseudo anchor '{pid}' references unknown '{anchor}'"))
            })?;
            let mut mean = nodes.row_vec(arow);
            let mut count = 1.0;
            for nbr in universe.graph.neighbor_ids(&auid) {
                if pseudo.pseudo_ids.contains(&nbr) {
                    continue;
                }
                let r = universe.graph.node_idx(&nbr).unwrap();
                let v = nodes.row_vec(r);
                for (m, x) in mean.iter_mut().zip(&v) {
                    *m += x;
                }
                count += 1.0;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, fnv1a64(pid.as_bytes())));
            for m in mean.iter_mut() {
                *m = *m / count + 0.01 * gaussian(&mut rng);
            }
            nodes.set_row(prow, &mean);
        }

        let ctx = match cfg.proximity {
            Proximity::First => None,
            Proximity::Second => Some(VectorTable::zeros(n, cfg.dim)),
        };

        let weights: Vec<f64> = universe.graph.edges().iter().map(|e| e.weight).collect();
        let edge_alias = AliasTable::new(&weights)?;
        let edge_endpoints: Vec<(NodeIdx, NodeIdx)> = universe
            .graph
            .edges()
            .iter()
            .map(|e| (e.src, e.dst))
            .collect();

        let neg_excluded: HashSet<NodeIdx> = if cfg.pseudo_in_negatives {
            HashSet::new()
        } else {
            pseudo_rowset
        };
        let negatives = NegativeTable::build(&universe.graph, &neg_excluded)?;
        let out_skip: Vec<HashSet<NodeIdx>> = (0..n)
            .map(|i| universe.graph.out_neighbors(i).iter().copied().collect())
            .collect();

        let total_samples = (cfg.epochs as u64).max(1) * cfg.samples_per_epoch as u64;
        Ok(Trainer {
            universe,
            cfg: cfg.clone(),
            nodes,
            ctx,
            edge_alias,
            edge_endpoints,
            negatives,
            out_skip,
            epoch: 0,
            total_samples,
        })
    }

    pub fn universe_size(&self) -> usize {
        self.universe.graph.node_count()
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    /// Runs one epoch of `samples_per_epoch` positive draws (split across
    /// workers). Each worker owns a ChaCha stream derived from
    /// (seed, epoch, worker).
    pub fn run_epoch(&mut self) {
        let workers = self.cfg.workers.max(1);
        let per = self.cfg.samples_per_epoch / workers;
        let extra = self.cfg.samples_per_epoch % workers;
        let epoch = self.epoch as u64;
        if workers == 1 {
            let offset = epoch * self.cfg.samples_per_epoch as u64;
            self.worker_pass(0, self.cfg.samples_per_epoch, offset);
        } else {
            std::thread::scope(|scope| {
                for w in 0..workers {
                    let count = per + usize::from(w < extra);
                    let offset =
                        epoch * self.cfg.samples_per_epoch as u64 + (w * per + w.min(extra)) as u64;
                    let this = &*self;
                    scope.spawn(move || this.worker_pass(w as u64, count, offset));
                }
            });
        }
        self.epoch += 1;
    }

    fn worker_pass(&self, worker: u64, count: usize, global_offset: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
            self.cfg.seed,
            0x7261_696e ^ (self.epoch as u64) << 20 ^ worker,
        ));
        let dim = self.cfg.dim;
        let mut u_i = vec![0.0; dim];
        let mut u_o = vec![0.0; dim];
        let mut delta = vec![0.0; dim];
        let undirected = !self.universe.graph.is_directed();
        for s in 0..count {
            let progress = (global_offset + s as u64) as f64 / self.total_samples as f64;
            let lr = self.cfg.learning_rate * (1.0 - progress).max(1e-4);
            let e = self.edge_alias.sample(&mut rng);
            let (mut i, mut j) = self.edge_endpoints[e];
            if undirected && rng.random::<bool>() {
                std::mem::swap(&mut i, &mut j);
            }
            self.nodes.read_row(i, &mut u_i);
            delta.iter_mut().for_each(|d| *d = 0.0);

            self.accumulate_pair(i, j, true, lr, &u_i, &mut u_o, &mut delta);
            // A node adjacent to the entire universe has no admissible
            // negatives; its update degenerates to the positive term.
            let negs = self
                .negatives
                .sample_excluding(i, &self.out_skip[i], self.cfg.negatives, &mut rng)
                .unwrap_or_default();
            for v in negs {
                self.accumulate_pair(i, v, false, lr, &u_i, &mut u_o, &mut delta);
            }
            self.nodes.add_scaled(i, 1.0, &delta);
        }
    }

    #[inline]
    fn accumulate_pair(
        &self,
        _target: NodeIdx,
        other: NodeIdx,
        context: bool,
        lr: f64,
        u_i: &[f64],
        u_o: &mut [f64],
        delta: &mut [f64],
    ) {
        let other_table = self.ctx.as_ref().unwrap_or(&self.nodes);
        other_table.read_row(other, u_o);
        let label = if context { 1.0 } else { 0.0 };
        let coef = lr * (label - sigmoid(dot(u_i, u_o)));
        for (d, x) in delta.iter_mut().zip(u_o.iter()) {
            *d += coef * x;
        }
        other_table.add_scaled(other, coef, u_i);
    }

    /// Snapshot of the current vectors as an [`EmbeddingSpace`].
    pub fn space(&self) -> EmbeddingSpace {
        let data = self.nodes.snapshot();
        let ids: Vec<String> = self
            .universe
            .graph
            .node_ids()
            .map(str::to_string)
            .collect();
        let index: HashMap<String, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        EmbeddingSpace {
            dim: self.cfg.dim,
            geometry: Geometry::Euclidean,
            ids,
            index,
            data,
            ctx: self.ctx.as_ref().map(VectorTable::snapshot),
            merged: self.universe.merged.clone(),
        }
    }

    /// Writes the given rows of `space` back into the live table. Used by the
    /// interleaved fine-tuning step, which only moves pseudo vectors.
    pub fn write_back(&mut self, space: &EmbeddingSpace, ids: &[String]) -> Result<()> {
        for id in ids {
            let v = space
                .vector(id)
                .ok_or_else(|| Error::validation(format!("unknown node '{id}'")))?;
            let row = self
                .universe
                .graph
                .node_idx(space.universe_id(id))
                .ok_or_else(|| Error::validation(format!("node '{id}' not in universe")))?;
            self.nodes.set_row(row, v);
        }
        Ok(())
    }

    pub fn into_space(self) -> EmbeddingSpace {
        self.space()
    }
}

/// Trains embeddings end to end: build the merged universe, run
/// `cfg.epochs` epochs, return the final space.
pub fn train(gs: &Graph, gt: &Graph, anchors: &AnchorSet, cfg: &TrainConfig) -> Result<EmbeddingSpace> {
    let mut trainer = Trainer::new(gs, gt, anchors, cfg)?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch();
    }
    Ok(trainer.into_space())
}
