//! Weighted sampling machinery: Vose alias tables for O(1) draws over edge
//! weights and over the `degree^0.75` negative-sampling law.

use std::collections::HashSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeIdx};

/// Vose alias table over arbitrary nonnegative weights.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        if n == 0 || !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::validation(
                "alias table needs at least one finite nonnegative weight with positive total",
            ));
        }
        let mut prob: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias: Vec<usize> = (0..n).collect();
        let mut small: Vec<usize> = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        for (i, p) in prob.iter().enumerate() {
            if *p < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(s), Some(l)) = (small.pop(), large.pop()) {
            alias[s] = l;
            prob[l] = (prob[l] + prob[s]) - 1.0;
            if prob[l] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        // Leftovers are 1.0 up to round-off.
        for i in large.into_iter().chain(small) {
            prob[i] = 1.0;
        }
        Ok(AliasTable { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

/// Negative sampler over a graph's nodes under the unigram (weighted degree)
/// distribution raised to the 0.75 power. Nodes in `excluded` carry no mass
/// at all; per-draw exclusions (the target and its out-neighbors) are handled
/// by rejection at sample time.
#[derive(Debug, Clone)]
pub struct NegativeTable {
    alias: AliasTable,
    /// Candidate node index per alias slot.
    candidates: Vec<NodeIdx>,
    weights: Vec<f64>,
}

impl NegativeTable {
    pub fn build(graph: &Graph, excluded: &HashSet<NodeIdx>) -> Result<Self> {
        let deg = graph.weighted_degrees();
        let mut candidates = Vec::new();
        let mut weights = Vec::new();
        for (idx, d) in deg.iter().enumerate() {
            if !excluded.contains(&idx) {
                candidates.push(idx);
                weights.push(d.powf(0.75));
            }
        }
        if candidates.is_empty() {
            return Err(Error::validation(
                "no negative-sampling candidates: graph has no eligible nodes",
            ));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            // Graph with no edges among the candidates: fall back to uniform.
            weights.iter_mut().for_each(|w| *w = 1.0);
        }
        let alias = AliasTable::new(&weights)?;
        Ok(NegativeTable {
            alias,
            candidates,
            weights,
        })
    }

    /// Draws `k` candidates, rejecting the target and anything in `skip`
    /// (expected: the target's out-neighbors). Errors when nothing outside
    /// the exclusions carries probability mass.
    pub fn sample_excluding(
        &self,
        target: NodeIdx,
        skip: &HashSet<NodeIdx>,
        k: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<NodeIdx>> {
        let mut out = Vec::with_capacity(k);
        if k == 0 {
            return Ok(out);
        }
        let admissible = |n: NodeIdx| n != target && !skip.contains(&n);
        if !self
            .candidates
            .iter()
            .zip(&self.weights)
            .any(|(&n, &w)| admissible(n) && w > 0.0)
        {
            // All mass sits on excluded nodes; retry uniformly over whatever
            // candidates remain before giving up.
            let pool: Vec<NodeIdx> = self
                .candidates
                .iter()
                .copied()
                .filter(|&n| admissible(n))
                .collect();
            if pool.is_empty() {
                return Err(Error::validation(format!(
                    "no negative-sampling candidates outside node {target} and its neighbors"
                )));
            }
            for _ in 0..k {
                out.push(pool[rng.random_range(0..pool.len())]);
            }
            return Ok(out);
        }
        let mut tries = 0usize;
        while out.len() < k {
            let n = self.candidates[self.alias.sample(rng)];
            if admissible(n) {
                out.push(n);
            }
            tries += 1;
            if tries > 64 * (k + 16) {
                // Pathologically concentrated mass; finish by scanning.
                let pool: Vec<NodeIdx> = self
                    .candidates
                    .iter()
                    .copied()
                    .filter(|&n| admissible(n))
                    .collect();
                while out.len() < k {
                    out.push(pool[rng.random_range(0..pool.len())]);
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn alias_matches_weights_empirically() {
        let weights = [1.0, 2.0, 7.0];
        let table = AliasTable::new(&weights).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0u64; 3];
        let draws = 200_000;
        for _ in 0..draws {
            counts[table.sample(&mut rng)] += 1;
        }
        let total: f64 = weights.iter().sum();
        for (c, w) in counts.iter().zip(&weights) {
            let observed = *c as f64 / draws as f64;
            let expected = w / total;
            assert!(
                (observed - expected).abs() < 0.01,
                "observed {observed}, expected {expected}"
            );
        }
    }

    #[test]
    fn alias_rejects_empty_or_zero() {
        assert!(AliasTable::new(&[]).is_err());
        assert!(AliasTable::new(&[0.0, 0.0]).is_err());
        assert!(AliasTable::new(&[f64::NAN]).is_err());
    }

    #[test]
    fn negative_table_excludes_mass() {
        let mut g = Graph::new(true);
        g.add_edge("a", "b", 1.0).unwrap();
        g.add_edge("b", "c", 1.0).unwrap();
        let mut excluded = HashSet::new();
        excluded.insert(g.node_idx("c").unwrap());
        let table = NegativeTable::build(&g, &excluded).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let skip = HashSet::new();
        for _ in 0..100 {
            let draws = table
                .sample_excluding(g.node_idx("a").unwrap(), &skip, 3, &mut rng)
                .unwrap();
            assert!(!draws.contains(&g.node_idx("c").unwrap()));
            assert!(!draws.contains(&g.node_idx("a").unwrap()));
        }
    }
}
