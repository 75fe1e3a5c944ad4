//! Random sensor networks: uniform points in a square joined to their
//! nearest neighbours with Gaussian distance weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Graph;
use crate::error::{invalid, Result};

pub const DEFAULT_SIDE: f64 = 20.0;

#[derive(Debug, Clone)]
pub struct SensorGraph {
    pub graph: Graph,
    pub coords: Vec<[f64; 2]>,
    /// Mean Euclidean length over connected pairs, used as the weight scale.
    pub ave: f64,
    pub connected: bool,
}

/// `n` points drawn uniformly from `[0, side]²`; each is linked to its `k`
/// nearest neighbours (the union of both directions) with weight
/// `exp(-d² / ave²)`.
pub fn sensor_graph(n: usize, k: usize, side: f64, seed: u64) -> Result<SensorGraph> {
    if n < 2 {
        return Err(invalid("n", "a sensor graph needs at least two nodes"));
    }
    if k == 0 || k >= n {
        return Err(invalid("k", format!("need 1 <= k < n, got k = {k}, n = {n}")));
    }
    if !(side > 0.0 && side.is_finite()) {
        return Err(invalid("side", "must be positive and finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
        .collect();
    let dist = |a: usize, b: usize| {
        let dx = coords[a][0] - coords[b][0];
        let dy = coords[a][1] - coords[b][1];
        (dx * dx + dy * dy).sqrt()
    };

    let mut pairs = std::collections::BTreeSet::new();
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dist(i, j), j)).collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    let ave = pairs.iter().map(|&(i, j)| dist(i, j)).sum::<f64>() / pairs.len() as f64;
    let edges: Vec<(usize, usize, f64)> = pairs
        .iter()
        .map(|&(i, j)| {
            let d = dist(i, j);
            // underflow guard: Graph rejects zero weights
            (i, j, (-(d * d) / (ave * ave)).exp().max(f64::MIN_POSITIVE))
        })
        .collect();
    let graph = Graph::new(n, edges)?;
    let connected = graph.is_connected();
    Ok(SensorGraph { graph, coords, ave, connected })
}
