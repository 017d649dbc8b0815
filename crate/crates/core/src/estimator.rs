//! Per-node fitting on a worker pool and assembly of the graph estimate.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::diffnet::PositiveMlp;
use crate::error::{Error, Result};
use crate::precision::{assemble, omega_row, GeneralizedPrecision};
use crate::quadmap::MapComponent;
use crate::training::{select_lambda, EpochRecord, SplitDataset, TrainConfig};

/// Everything produced for one node.
#[derive(Debug, Clone)]
pub struct NodeFit {
    pub k: usize,
    pub lambda: f64,
    pub scores: Vec<(f64, Option<f64>)>,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub history: Vec<EpochRecord>,
    pub map: MapComponent<PositiveMlp>,
    pub omega_row: Vec<f64>,
    pub elapsed: Duration,
}

/// Select the penalty, train, and score node `k` on the estimation rows.
pub fn fit_node(k: usize, data: &SplitDataset, cfg: &TrainConfig) -> Result<NodeFit> {
    let start = Instant::now();
    let sel = select_lambda(k, data, cfg)?;
    let row = omega_row(&sel.trained.map, data.estimation.view())?;
    log::info!(
        "node {k}: λ={} best epoch {} val nll {:.5}",
        sel.lambda,
        sel.trained.best_epoch,
        sel.trained.best_val_nll
    );
    Ok(NodeFit {
        k,
        lambda: sel.lambda,
        scores: sel.scores,
        best_epoch: sel.trained.best_epoch,
        best_val_nll: sel.trained.best_val_nll,
        history: sel.trained.history,
        map: sel.trained.map,
        omega_row: row,
        elapsed: start.elapsed(),
    })
}

/// Fit `nodes` on a pool of `workers` threads. Results come back in the
/// order of `nodes` regardless of completion order; each is computed from
/// its own seed, so the output does not depend on `workers`.
pub fn fit_nodes(data: &SplitDataset, cfg: &TrainConfig, nodes: &[usize], workers: usize) -> Result<Vec<Result<NodeFit>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    Ok(pool.install(|| nodes.par_iter().map(|&k| fit_node(k, data, cfg)).collect()))
}

/// Fit every node and assemble the normalized score matrix.
pub fn estimate_graph(data: &SplitDataset, cfg: &TrainConfig, workers: usize) -> Result<(GeneralizedPrecision, Vec<NodeFit>)> {
    let nodes: Vec<usize> = (0..data.dim()).collect();
    let fits = fit_nodes(data, cfg, &nodes, workers)?.into_iter().collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<f64>> = fits.iter().map(|f| f.omega_row.clone()).collect();
    Ok((assemble(&rows)?, fits))
}
