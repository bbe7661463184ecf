use serde::{Deserialize, Serialize};

use super::AdjacencyMatrix;
use crate::error::{Error, Result};

/// Upper bound on complete assignments explored when greedy choices tie.
const TIE_BUDGET: usize = 4096;

/// Matching of estimated missing nodes to ground-truth missing nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeAlignment {
    pub observed_count: usize,
    /// `mapping[k]` is the ground-truth node matched to estimate node `observed_count + k`.
    pub mapping: Vec<usize>,
    /// Sum over missing rows of the full-row Hamming distance after alignment.
    pub total_hamming: usize,
}

impl NodeAlignment {
    pub fn identity(n: usize, observed_count: usize) -> Self {
        Self {
            observed_count,
            mapping: (observed_count..n).collect(),
            total_hamming: 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.mapping
            .iter()
            .enumerate()
            .all(|(k, &t)| t == self.observed_count + k)
    }

    /// `perm[t]` = estimate node that lands on position `t` after alignment.
    pub fn permutation(&self) -> Vec<usize> {
        let n = self.observed_count + self.mapping.len();
        let mut perm: Vec<usize> = (0..n).collect();
        for (k, &t) in self.mapping.iter().enumerate() {
            perm[t] = self.observed_count + k;
        }
        perm
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.observed_count + self.mapping.len() != n {
            return Err(Error::invalid("alignment size does not match matrix dimension"));
        }
        let mut seen = vec![false; n];
        for &t in &self.mapping {
            if t < self.observed_count || t >= n || seen[t] {
                return Err(Error::invalid("alignment mapping is not a permutation of missing nodes"));
            }
            seen[t] = true;
        }
        Ok(())
    }
}

pub fn row_hamming(a: &[u8], b: &[u8]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "hamming distance of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// Greedy Hamming matching of the missing block of `est` onto `truth`.
///
/// Missing estimate rows are visited in ascending order. Each is matched to
/// the unmatched ground-truth missing row closest in Hamming distance over the
/// observed columns plus the columns of already-matched missing nodes. When
/// several candidates tie, each tied branch is followed (lowest index first,
/// bounded by a fixed budget) and the assignment with the smallest total is
/// kept, earliest-explored winning ties.
pub fn align_missing(
    est: &AdjacencyMatrix,
    truth: &AdjacencyMatrix,
    observed_count: usize,
) -> Result<NodeAlignment> {
    let n = est.n();
    if truth.n() != n {
        return Err(Error::invalid(format!(
            "alignment of matrices with dimensions {n} and {}",
            truth.n()
        )));
    }
    if observed_count > n {
        return Err(Error::invalid("observed count exceeds matrix dimension"));
    }
    let est_rows: Vec<Vec<u8>> = (0..n).map(|i| est.binary_row(i)).collect();
    let truth_rows: Vec<Vec<u8>> = (0..n).map(|i| truth.binary_row(i)).collect();
    let m = n - observed_count;

    let mut search = TieSearch {
        est: &est_rows,
        truth: &truth_rows,
        obs: observed_count,
        assigned: Vec::with_capacity(m),
        used: vec![false; m],
        leaves: 0,
        best: None,
    };
    search.descend();
    let (total_hamming, mapping) = search.best.expect("at least one assignment is explored");
    Ok(NodeAlignment {
        observed_count,
        mapping,
        total_hamming,
    })
}

struct TieSearch<'a> {
    est: &'a [Vec<u8>],
    truth: &'a [Vec<u8>],
    obs: usize,
    assigned: Vec<usize>,
    used: Vec<bool>,
    leaves: usize,
    best: Option<(usize, Vec<usize>)>,
}

impl TieSearch<'_> {
    fn partial_distance(&self, e: usize, t: usize) -> usize {
        let (er, tr) = (&self.est[e], &self.truth[t]);
        let mut d = (0..self.obs).filter(|&c| er[c] != tr[c]).count();
        for (k, &tm) in self.assigned.iter().enumerate() {
            if er[self.obs + k] != tr[tm] {
                d += 1;
            }
        }
        d
    }

    fn full_total(&self) -> usize {
        let n = self.est.len();
        // perm[t] = estimate node aligned to truth node t
        let mut perm: Vec<usize> = (0..n).collect();
        for (k, &t) in self.assigned.iter().enumerate() {
            perm[t] = self.obs + k;
        }
        (self.obs..n)
            .map(|t| {
                let er = &self.est[perm[t]];
                (0..n).filter(|&c| er[perm[c]] != self.truth[t][c]).count()
            })
            .sum()
    }

    fn descend(&mut self) {
        if matches!(self.best, Some((0, _))) {
            return;
        }
        let m = self.used.len();
        let k = self.assigned.len();
        if k == m {
            self.leaves += 1;
            let total = self.full_total();
            if self.best.as_ref().map_or(true, |(b, _)| total < *b) {
                self.best = Some((total, self.assigned.clone()));
            }
            return;
        }
        let e = self.obs + k;
        let dists: Vec<(usize, usize)> = (0..m)
            .filter(|&c| !self.used[c])
            .map(|c| (c, self.partial_distance(e, self.obs + c)))
            .collect();
        let min = dists.iter().map(|&(_, d)| d).min().unwrap_or(0);
        let tied: Vec<usize> = dists.iter().filter(|&&(_, d)| d == min).map(|&(c, _)| c).collect();
        for (rank, c) in tied.into_iter().enumerate() {
            if rank > 0 && (self.leaves >= TIE_BUDGET || matches!(self.best, Some((0, _)))) {
                break;
            }
            self.used[c] = true;
            self.assigned.push(self.obs + c);
            self.descend();
            self.assigned.pop();
            self.used[c] = false;
        }
    }
}

/// Reorders the missing rows/columns of `est` so that estimate node
/// `observed_count + k` moves to position `mapping[k]`.
pub fn apply_alignment(est: &AdjacencyMatrix, alignment: &NodeAlignment) -> Result<AdjacencyMatrix> {
    alignment.validate(est.n())?;
    Ok(est.permuted(&alignment.permutation()))
}
