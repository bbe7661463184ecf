use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;

/// Entries `(i, j)` scored by the network metrics.
pub type Mask = Vec<(usize, usize)>;

/// Every unordered pair once: the strict upper triangle.
pub fn upper_mask(n: usize) -> Mask {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Unordered pairs touching at least one missing node (canonical labels `observed_count..n`).
pub fn missing_mask(n: usize, observed_count: usize) -> Mask {
    upper_mask(n)
        .into_iter()
        .filter(|&(_, j)| j >= observed_count)
        .collect()
}

fn check(probs: &AdjacencyMatrix, truth: &AdjacencyMatrix, mask: &Mask, what: &str) -> Result<()> {
    if probs.n() != truth.n() {
        return Err(Error::invalid(format!("{what}: {}x{0} vs {}x{1}", probs.n(), truth.n())));
    }
    if mask.is_empty() {
        return Err(Error::UndefinedMetric(format!("{what}: empty mask")));
    }
    for &(i, j) in mask {
        if i == j || i >= truth.n() || j >= truth.n() {
            return Err(Error::invalid(format!("{what}: mask entry ({i}, {j})")));
        }
    }
    Ok(())
}

/// Mann-Whitney AUC of `probs` against binary `truth` over `mask`; ties count one half.
pub fn auc(probs: &AdjacencyMatrix, truth: &AdjacencyMatrix, mask: &Mask) -> Result<f64> {
    check(probs, truth, mask, "auc")?;
    let scored: Vec<(f64, bool)> = mask
        .iter()
        .map(|&(i, j)| (probs.get(i, j), truth.get(i, j) > 0.5))
        .collect();
    auc_scores(&scored)
}

/// AUC from `(score, is_positive)` pairs via average ranks.
pub fn auc_scores(scored: &[(f64, bool)]) -> Result<f64> {
    let pos = scored.iter().filter(|s| s.1).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "auc needs both classes ({pos} positive, {neg} negative)"
        )));
    }
    if scored.iter().any(|s| s.0.is_nan()) {
        return Err(Error::invalid("auc: NaN score"));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && scored[order[end + 1]].0 == scored[order[k]].0 {
            end += 1;
        }
        // ranks k+1 ..= end+1 share their mean
        let mean_rank = (k + end + 2) as f64 / 2.0;
        for &idx in &order[k..=end] {
            if scored[idx].1 {
                rank_sum += mean_rank;
            }
        }
        k = end + 1;
    }
    let (p, q) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Fraction of masked entries where `sampled` equals `truth`.
pub fn acc_net(sampled: &AdjacencyMatrix, truth: &AdjacencyMatrix, mask: &Mask) -> Result<f64> {
    check(sampled, truth, mask, "acc_net")?;
    let hits = mask
        .iter()
        .filter(|&&(i, j)| (sampled.get(i, j) > 0.5) == (truth.get(i, j) > 0.5))
        .count();
    Ok(hits as f64 / mask.len() as f64)
}

/// `(TP / (TP + FN), FP / (FP + TN))`; either side is `None` when its denominator is zero.
pub fn tpr_fpr(sampled: &AdjacencyMatrix, truth: &AdjacencyMatrix, mask: &Mask) -> Result<(Option<f64>, Option<f64>)> {
    check(sampled, truth, mask, "tpr_fpr")?;
    let (mut tp, mut fn_, mut fp, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for &(i, j) in mask {
        match (sampled.get(i, j) > 0.5, truth.get(i, j) > 0.5) {
            (true, true) => tp += 1,
            (false, true) => fn_ += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    Ok((ratio(tp, fn_), ratio(fp, tn)))
}

/// Strict variant of [`tpr_fpr`] that reports an undefined side as an error.
pub fn tpr_fpr_strict(sampled: &AdjacencyMatrix, truth: &AdjacencyMatrix, mask: &Mask) -> Result<(f64, f64)> {
    match tpr_fpr(sampled, truth, mask)? {
        (Some(t), Some(f)) => Ok((t, f)),
        (None, _) => Err(Error::UndefinedMetric("tpr without positives".into())),
        (_, None) => Err(Error::UndefinedMetric("fpr without negatives".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    /// `1 - MAE` of argmax class indicators.
    Discrete,
    /// Mean squared error.
    Continuous,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// State accuracy of flattened `[.., d]` predictions against truth.
pub fn acc_states(pred: &[f64], truth: &[f64], d: usize, kind: StateKind) -> Result<f64> {
    if pred.len() != truth.len() || d == 0 || pred.len() % d != 0 {
        return Err(Error::shape("acc_states", format!("{} vs {} values with d={d}", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::UndefinedMetric("acc_states over no states".into()));
    }
    match kind {
        StateKind::Discrete => {
            let rows = pred.len() / d;
            let wrong = pred
                .chunks(d)
                .zip(truth.chunks(d))
                .filter(|(p, t)| argmax(p) != argmax(t))
                .count();
            Ok(1.0 - wrong as f64 / rows as f64)
        }
        StateKind::Continuous => {
            Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
        }
    }
}

/// Discrete accuracy with each predicted state drawn from its distribution instead of argmax.
pub fn acc_states_sampled<R: Rng + ?Sized>(pred: &[f64], truth: &[f64], d: usize, rng: &mut R) -> Result<f64> {
    if pred.len() != truth.len() || d == 0 || pred.len() % d != 0 || pred.is_empty() {
        return Err(Error::shape("acc_states", format!("{} vs {} values with d={d}", pred.len(), truth.len())));
    }
    let rows = pred.len() / d;
    let mut wrong = 0;
    for (p, t) in pred.chunks(d).zip(truth.chunks(d)) {
        let total: f64 = p.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut class = d - 1;
        for (k, &v) in p.iter().enumerate() {
            if u < v {
                class = k;
                break;
            }
            u -= v;
        }
        if class != argmax(t) {
            wrong += 1;
        }
    }
    Ok(1.0 - wrong as f64 / rows as f64)
}
