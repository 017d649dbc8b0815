//! Graph recovery scores and node centrality rankings.

use std::collections::VecDeque;

use crate::error::{check_width, Result};
use crate::precision::EdgeSet;

const HUB_TOL: f64 = 1e-10;
const HUB_MAX_ITER: usize = 100_000;
const RANK_TIE_TOL: f64 = 1e-9;

/// Confusion counts over unordered node pairs and the rates derived from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub fpr: f64,
    pub tpr: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tau: Option<f64>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Compare an estimated graph with the true one.
pub fn recovery(est: &EdgeSet, truth: &EdgeSet) -> Result<RecoveryReport> {
    check_width("estimated graph nodes", truth.dim(), est.dim())?;
    let d = truth.dim();
    let pairs = d * d.saturating_sub(1) / 2;
    let tp = est.iter().filter(|&(a, b)| truth.contains(a, b)).count();
    let fp = est.len() - tp;
    let fn_ = truth.len() - tp;
    let tn = pairs - tp - fp - fn_;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(RecoveryReport {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        fpr: ratio(fp, fp + tn),
        tpr: recall,
        precision,
        recall,
        f1,
        tau: est.tau(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityRow {
    pub node: usize,
    pub degree: f64,
    /// Harmonic closeness, `Σ 1/dist / (d − 1)`.
    pub closeness: f64,
    pub betweenness: f64,
    pub hub: f64,
    /// Descending ranks for degree, closeness, betweenness, and hub score.
    pub ranks: [f64; 4],
    pub mean_rank: f64,
}

/// Per-node centralities, indexed by node.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralityTable {
    pub rows: Vec<CentralityRow>,
}

impl CentralityTable {
    /// Rows ordered by mean rank, then node index.
    pub fn by_mean_rank(&self) -> Vec<&CentralityRow> {
        let mut v: Vec<&CentralityRow> = self.rows.iter().collect();
        v.sort_by(|a, b| a.mean_rank.total_cmp(&b.mean_rank).then(a.node.cmp(&b.node)));
        v
    }
}

fn bfs(adj: &[Vec<usize>], s: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[s] = Some(0);
    let mut q = VecDeque::from([s]);
    while let Some(v) = q.pop_front() {
        let dv = dist[v].expect("visited");
        for &w in &adj[v] {
            if dist[w].is_none() {
                dist[w] = Some(dv + 1);
                q.push_back(w);
            }
        }
    }
    dist
}

fn harmonic_closeness(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|s| {
            let total: f64 = bfs(adj, s)
                .iter()
                .enumerate()
                .filter_map(|(t, d)| match d {
                    Some(d) if t != s => Some(1.0 / *d as f64),
                    _ => None,
                })
                .sum();
            total / (n - 1) as f64
        })
        .collect()
}

/// Brandes' algorithm; each unordered pair counted once.
fn betweenness(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut cb = vec![0.0; n];
    for s in 0..n {
        let mut stack = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0_f64; n];
        let mut dist = vec![-1_i64; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    q.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    cb.iter().map(|c| c / 2.0).collect()
}

/// Leading eigenvector of `A + I` by power iteration, scaled to max 1.
fn hub_scores(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut v = vec![1.0; n];
    for _ in 0..HUB_MAX_ITER {
        let mut next: Vec<f64> = (0..n).map(|i| v[i] + adj[i].iter().map(|&j| v[j]).sum::<f64>()).collect();
        let max = next.iter().cloned().fold(0.0, f64::max);
        for x in &mut next {
            *x /= max;
        }
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if change < HUB_TOL {
            break;
        }
    }
    v
}

/// Descending ranks, 1 = largest, ties share the average rank.
pub fn descending_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let lead = values[idx[i]];
        let mut j = i;
        while j + 1 < n && (values[idx[j + 1]] - lead).abs() <= RANK_TIE_TOL * lead.abs().max(1.0) {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Degree, harmonic closeness, betweenness, and hub score for every node,
/// with their average rank.
pub fn centrality(est: &EdgeSet) -> CentralityTable {
    let n = est.dim();
    let adj = est.adjacency();
    let (degree, closeness, between, hub) = if est.is_empty() {
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n])
    } else {
        (
            adj.iter().map(|a| a.len() as f64).collect(),
            harmonic_closeness(&adj),
            betweenness(&adj),
            hub_scores(&adj),
        )
    };
    let ranks = [
        descending_ranks(&degree),
        descending_ranks(&closeness),
        descending_ranks(&between),
        descending_ranks(&hub),
    ];
    let rows = (0..n)
        .map(|i| {
            let r = [ranks[0][i], ranks[1][i], ranks[2][i], ranks[3][i]];
            CentralityRow {
                node: i,
                degree: degree[i],
                closeness: closeness[i],
                betweenness: between[i],
                hub: hub[i],
                ranks: r,
                mean_rank: r.iter().sum::<f64>() / 4.0,
            }
        })
        .collect();
    CentralityTable { rows }
}
