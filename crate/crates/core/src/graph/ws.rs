use rand::Rng;

use super::Graph;
use crate::error::{Error, Result};
use crate::rng;

/// Watts–Strogatz small-world graph.
///
/// Builds a ring lattice where every node links to its `k/2` clockwise
/// neighbors, then visits each lattice edge `(u, u+j)` (for `j = 1..=k/2`,
/// `u = 0..n`) and with probability `p` moves its far endpoint to a uniformly
/// chosen node that is neither `u` nor already adjacent to `u`. Edge count stays
/// `n*k/2`. The result may be disconnected.
pub fn generate_ws(n: usize, k: usize, p: f64, seed: u64) -> Result<Graph> {
    if k == 0 || k % 2 != 0 || k >= n {
        return Err(Error::invalid(format!(
            "Watts-Strogatz needs an even mean degree 0 < k < n, got k={k}, n={n}"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("rewiring probability {p} outside [0, 1]")));
    }

    let mut g = Graph::empty(n);
    for u in 0..n {
        for j in 1..=k / 2 {
            g.add_edge(u, (u + j) % n)?;
        }
    }

    let mut rng = rng::seeded(seed);
    for j in 1..=k / 2 {
        for u in 0..n {
            let v = (u + j) % n;
            if !rng.random_bool(p) {
                continue;
            }
            // The lattice edge may already have been moved away by an earlier rewire.
            if !g.has_edge(u, v) {
                continue;
            }
            let candidates: Vec<usize> = (0..n).filter(|&w| w != u && !g.has_edge(u, w)).collect();
            if candidates.is_empty() {
                continue;
            }
            let w = candidates[rng.random_range(0..candidates.len())];
            g.remove_edge(u, v);
            g.add_edge(u, w)?;
        }
    }
    Ok(g)
}
