//! Stages of a run and the files each one reads and writes.
//!
//! Output directory layout:
//!
//! ```text
//! data.csv, truth.json        generate
//! split.json                  row indices and standardization of the run
//! nodes/row_k.json            per-node score row; its presence marks node k done
//! nodes/model_k.bin           trained component
//! nodes/loss_k.csv            training history at the selected penalty
//! omega.csv, omega.pgm        normalized score matrix
//! edges.csv, edges_tau_*.csv  thresholded graphs (edges.csv uses the first tau)
//! recovery.csv                against the true graph, when known
//! centrality.csv              at the first tau, ordered by mean rank
//! tau_sweep.csv               edge count over a tau grid on [0, 1]
//! baselines/*.csv             graphical lasso estimates, when enabled
//! manifest.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use lsing::baselines::{graphical_lasso, nonparanormal_transform, GlassoOptions};
use lsing::estimator::{fit_node, NodeFit};
use lsing::graphmetrics::{centrality, recovery, CentralityTable, RecoveryReport};
use lsing::linalg::covariance;
use lsing::precision::{assemble, omega_row, tau_sweep, threshold};
use lsing::synthdata::{butterfly_sample, precision_support, sparse_spd_gaussian, Generator, GroundTruth};
use lsing::training::{split_standardize, SplitIndices, Standardizer};
use lsing::{EdgeSet, GeneralizedPrecision, SplitDataset};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DataSource, RunConfig};
use crate::error::{CliError, CliResult};
use crate::heatmap::pgm_bytes;
use crate::io::{self, NamedMatrix};
use crate::model::{self, StoredModel};

pub const NODES_DIR: &str = "nodes";
pub const BASELINES_DIR: &str = "baselines";

/// Known graph of a synthetic dataset, as stored in `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub generator: String,
    pub seed: u64,
    pub names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    /// Precision matrix of the raw variables (Gaussian only).
    #[serde(default)]
    pub precision: Option<Vec<Vec<f64>>>,
    /// Normalized `|Θ|` of the standardized variables (Gaussian only).
    #[serde(default)]
    pub reference_omega: Option<Vec<Vec<f64>>>,
}

fn to_rows(m: ArrayView2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> CliResult<Array2<f64>> {
    let n = rows.len();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((n, flat.len().checked_div(n).unwrap_or(0)), flat)
        .ok()
        .filter(|a| rows.iter().all(|r| r.len() == a.ncols()))
        .ok_or_else(|| CliError::Data("ragged matrix".into()))
}

impl TruthFile {
    pub fn from_ground_truth(truth: &GroundTruth) -> Self {
        let (generator, precision) = match &truth.generator {
            Generator::Gaussian { theta, .. } => ("gaussian", Some(to_rows(theta.view()))),
            Generator::Butterfly { .. } => ("butterfly", None),
        };
        TruthFile {
            generator: generator.into(),
            seed: truth.seed,
            names: truth.names.clone(),
            edges: truth.true_edges.iter().collect(),
            precision,
            reference_omega: truth.reference_omega().map(|r| to_rows(r.omega.view())),
        }
    }

    pub fn edge_set(&self) -> CliResult<EdgeSet> {
        EdgeSet::from_pairs(self.names.len(), self.edges.iter().copied()).map_err(|e| CliError::Data(format!("truth: {e}")))
    }

    pub fn reference(&self) -> CliResult<Option<Array2<f64>>> {
        self.reference_omega.as_deref().map(from_rows).transpose()
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

/// Samples of a run and, for synthetic data, the true graph.
#[derive(Debug, Clone)]
pub struct Source {
    pub data: NamedMatrix,
    pub truth: Option<TruthFile>,
}

pub fn load_source(cfg: &RunConfig) -> CliResult<Source> {
    let synthetic = |(x, gt): (Array2<f64>, GroundTruth)| Source {
        data: NamedMatrix {
            names: gt.names.clone(),
            values: x,
        },
        truth: Some(TruthFile::from_ground_truth(&gt)),
    };
    let src = match &cfg.data {
        DataSource::Csv { path } => Source {
            data: io::load_dataset_csv(path)?,
            truth: None,
        },
        DataSource::Gaussian {
            dim,
            samples,
            zero_prob,
            value_range,
        } => synthetic(sparse_spd_gaussian(*dim, *samples, *zero_prob, *value_range, cfg.seed)?),
        DataSource::Butterfly { pairs, samples } => synthetic(butterfly_sample(*pairs, *samples, cfg.seed)?),
    };
    let truth = match &cfg.truth {
        Some(p) => Some(TruthFile::load(p)?),
        None => src.truth,
    };
    if let Some(t) = &truth {
        if t.names.len() != src.data.names.len() {
            return Err(CliError::Data(format!(
                "truth has {} variables, data has {}",
                t.names.len(),
                src.data.names.len()
            )));
        }
    }
    Ok(Source { data: src.data, truth })
}

/// SHA-256 over the names and the bit patterns of the values.
pub fn data_digest(data: &NamedMatrix) -> String {
    let mut h = Sha256::new();
    for n in &data.names {
        h.update(n.as_bytes());
        h.update([0u8]);
    }
    for v in data.values.iter() {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_generated(cfg: &RunConfig, src: &Source) -> CliResult<()> {
    let out = &cfg.output;
    io::write_file(&out.join("data.csv"), |w| io::write_matrix(w, &src.data.names, src.data.values.view()))?;
    if let Some(t) = &src.truth {
        write_json(&out.join("truth.json"), t)?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    io::write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub names: Vec<String>,
    pub data_sha256: String,
    pub indices: SplitIndices,
    pub standardizer: Standardizer,
}

pub fn split(cfg: &RunConfig, src: &Source) -> CliResult<(SplitDataset, SplitFile)> {
    let data = split_standardize(src.data.values.view(), src.data.names.clone(), cfg.split, cfg.seed)?;
    let file = SplitFile {
        names: data.names.clone(),
        data_sha256: data_digest(&src.data),
        indices: data.indices.clone(),
        standardizer: data.standardizer.clone(),
    };
    Ok((data, file))
}

/// Rebuild the split recorded in `split.json` for the same data.
pub fn load_split(out: &Path, src: &Source) -> CliResult<(SplitDataset, SplitFile)> {
    let file: SplitFile = read_json(&out.join("split.json"))?;
    if file.data_sha256 != data_digest(&src.data) {
        return Err(CliError::Data("split.json was written for different data".into()));
    }
    let data = SplitDataset::from_indices(
        src.data.values.view(),
        file.names.clone(),
        file.indices.clone(),
        file.standardizer.clone(),
    )?;
    Ok((data, file))
}

/// Completed node, as stored in `nodes/row_k.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub k: usize,
    pub lambda: f64,
    pub scores: Vec<(f64, Option<f64>)>,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub omega_row: Vec<f64>,
    pub wall_clock_secs: f64,
    /// Identifies the config and split the row was computed under.
    pub fingerprint: String,
}

/// Digest of everything a node result depends on.
pub fn fingerprint(cfg: &RunConfig, split: &SplitFile) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&cfg.train_config()).expect("serializable"));
    h.update(serde_json::to_vec(split).expect("serializable"));
    hex(&h.finalize())
}

pub fn row_path(out: &Path, k: usize) -> PathBuf {
    out.join(NODES_DIR).join(format!("row_{k}.json"))
}

pub fn model_path(out: &Path, k: usize) -> PathBuf {
    out.join(NODES_DIR).join(model::model_file_name(k))
}

pub fn loss_path(out: &Path, k: usize) -> PathBuf {
    out.join(NODES_DIR).join(format!("loss_{k}.csv"))
}

fn load_record(out: &Path, k: usize, fp: &str) -> Option<NodeRecord> {
    let rec: NodeRecord = read_json(&row_path(out, k)).ok()?;
    (rec.k == k && rec.fingerprint == fp && model_path(out, k).exists()).then_some(rec)
}

fn persist(out: &Path, fit: &NodeFit, fp: &str) -> CliResult<NodeRecord> {
    let k = fit.k;
    let stored = StoredModel {
        lambda: fit.lambda,
        map: fit.map.clone(),
    };
    io::write_atomic(&model_path(out, k), &model::encode(&stored))?;
    io::write_file(&loss_path(out, k), |w| io::write_history(w, &fit.history))?;
    let rec = NodeRecord {
        k,
        lambda: fit.lambda,
        scores: fit.scores.clone(),
        best_epoch: fit.best_epoch,
        best_val_nll: fit.best_val_nll,
        omega_row: fit.omega_row.clone(),
        wall_clock_secs: fit.elapsed.as_secs_f64(),
        fingerprint: fp.to_string(),
    };
    write_json(&row_path(out, k), &rec)?;
    Ok(rec)
}

/// Outcome of the per-node stage.
#[derive(Debug, Clone)]
pub struct NodeStage {
    /// Ordered by node.
    pub records: Vec<NodeRecord>,
    pub resumed: Vec<usize>,
}

/// Fit `nodes` on `cfg.workers` threads. Workers pull node indices from a
/// shared counter and send results back; only this thread touches the
/// filesystem. Nodes with a stored row under the same fingerprint are reused.
/// The first failure stops the queue and is returned with its node index;
/// rows already finished stay on disk.
pub fn fit_nodes(
    cfg: &RunConfig,
    data: &SplitDataset,
    split: &SplitFile,
    nodes: &[usize],
) -> CliResult<NodeStage> {
    let out = cfg.output.as_path();
    let fp = fingerprint(cfg, split);
    let tc = cfg.train_config();
    let d = data.dim();
    if let Some(&bad) = nodes.iter().find(|&&k| k >= d) {
        return Err(CliError::Config(format!("node {bad} out of range for {d} variables")));
    }
    let mut done: BTreeMap<usize, NodeRecord> = BTreeMap::new();
    let mut resumed = Vec::new();
    for &k in nodes {
        if let Some(rec) = load_record(out, k, &fp) {
            log::info!("node {k}: reusing stored row");
            done.insert(k, rec);
            resumed.push(k);
        }
    }
    let pending: Vec<usize> = nodes.iter().copied().filter(|k| !done.contains_key(k)).collect();
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let mut failure: Option<(usize, lsing::Error)> = None;
    let mut write_error: Option<CliError> = None;
    std::thread::scope(|s| {
        let (tx, rx) = mpsc::channel::<(usize, lsing::Result<NodeFit>)>();
        for _ in 0..cfg.workers.min(pending.len()) {
            let tx = tx.clone();
            let (next, abort, pending, tc) = (&next, &abort, &pending, &tc);
            s.spawn(move || {
                while !abort.load(Ordering::Relaxed) {
                    let Some(&k) = pending.get(next.fetch_add(1, Ordering::Relaxed)) else {
                        break;
                    };
                    if tx.send((k, fit_node(k, data, tc))).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        for (k, res) in rx {
            match res {
                Ok(fit) => match persist(out, &fit, &fp) {
                    Ok(rec) => {
                        done.insert(k, rec);
                    }
                    Err(e) => {
                        abort.store(true, Ordering::Relaxed);
                        write_error.get_or_insert(e);
                    }
                },
                Err(e) => {
                    log::error!("node {k} failed: {e}");
                    abort.store(true, Ordering::Relaxed);
                    if failure.as_ref().is_none_or(|(j, _)| k < *j) {
                        failure = Some((k, e));
                    }
                }
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    if let Some((k, source)) = failure {
        return Err(CliError::Node { k, source });
    }
    Ok(NodeStage {
        records: done.into_values().collect(),
        resumed,
    })
}

pub fn assemble_records(records: &[NodeRecord], d: usize) -> CliResult<GeneralizedPrecision> {
    let missing: Vec<usize> = (0..d).filter(|k| !records.iter().any(|r| r.k == *k)).collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!("no stored row for nodes {missing:?}")));
    }
    let mut rows = vec![Vec::new(); d];
    for r in records {
        rows[r.k] = r.omega_row.clone();
    }
    Ok(assemble(&rows)?)
}

/// Recompute every score row from the stored model files on the estimation rows.
pub fn rows_from_models(out: &Path, data: &SplitDataset) -> CliResult<Vec<Vec<f64>>> {
    (0..data.dim())
        .map(|k| {
            let m = model::read_model(&model_path(out, k))?;
            if m.map.target() != k || m.map.dim() != data.dim() {
                return Err(CliError::Data(format!("model_{k}.bin does not match the dataset")));
            }
            omega_row(&m.map, data.estimation.view()).map_err(|source| CliError::Node { k, source })
        })
        .collect()
}

pub fn write_omega(out: &Path, names: &[String], gp: &GeneralizedPrecision) -> CliResult<()> {
    io::write_file(&out.join("omega.csv"), |w| io::write_matrix(w, names, gp.omega.view()))?;
    io::write_atomic(&out.join("omega.pgm"), &pgm_bytes(gp.omega.view())?)
}

/// Normalized score matrix read back from `omega.csv`.
pub fn read_omega(path: &Path) -> CliResult<(Vec<String>, GeneralizedPrecision)> {
    let m = io::load_dataset_csv(path)?;
    let d = m.names.len();
    if m.values.nrows() != d {
        return Err(CliError::Data(format!("{}: matrix is {}x{d}, expected square", path.display(), m.values.nrows())));
    }
    let gp = GeneralizedPrecision {
        omega: m.values,
        normalized: true,
        degenerate: false,
    };
    Ok((m.names, gp))
}

#[derive(Debug, Clone)]
pub struct ThresholdResult {
    pub tau: f64,
    pub edges: EdgeSet,
    pub recovery: Option<RecoveryReport>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub thresholds: Vec<ThresholdResult>,
    pub centrality: CentralityTable,
    pub sweep: Vec<(f64, usize)>,
    /// Largest off-diagonal `|Ω̂ − Ω_ref|` when a reference matrix is known.
    pub reference_gap: Option<f64>,
}

pub fn evaluate(cfg: &RunConfig, gp: &GeneralizedPrecision, truth: Option<&TruthFile>) -> CliResult<Evaluation> {
    let truth_edges = truth.map(TruthFile::edge_set).transpose()?;
    if let Some(t) = &truth_edges {
        if t.dim() != gp.dim() {
            return Err(CliError::Data(format!("truth has {} variables, estimate has {}", t.dim(), gp.dim())));
        }
    }
    let thresholds = cfg
        .tau_grid
        .iter()
        .map(|&tau| {
            let edges = threshold(gp, tau)?;
            let recovery = truth_edges.as_ref().map(|t| recovery(&edges, t)).transpose()?;
            Ok(ThresholdResult { tau, edges, recovery })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let reference_gap = match truth.map(TruthFile::reference).transpose()?.flatten() {
        Some(r) => Some(max_off_diagonal_gap(gp.omega.view(), r.view())?),
        None => None,
    };
    Ok(Evaluation {
        centrality: centrality(&thresholds[0].edges),
        sweep: tau_sweep(gp, cfg.sweep_points),
        thresholds,
        reference_gap,
    })
}

pub fn max_off_diagonal_gap(a: ArrayView2<f64>, b: ArrayView2<f64>) -> CliResult<f64> {
    if a.dim() != b.dim() {
        return Err(CliError::Data(format!("shape mismatch {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(a.indexed_iter()
        .filter(|((i, j), _)| i != j)
        .map(|((i, j), v)| (v - b[[i, j]]).abs())
        .fold(0.0, f64::max))
}

pub fn write_evaluation(out: &Path, names: &[String], gp: &GeneralizedPrecision, ev: &Evaluation) -> CliResult<()> {
    for (i, t) in ev.thresholds.iter().enumerate() {
        let name = format!("edges_tau_{}.csv", io::tau_tag(t.tau));
        io::write_file(&out.join(name), |w| io::write_edges(w, &t.edges, names, gp.omega.view()))?;
        if i == 0 {
            io::write_file(&out.join("edges.csv"), |w| io::write_edges(w, &t.edges, names, gp.omega.view()))?;
        }
    }
    let reports: Vec<(String, RecoveryReport)> = ev
        .thresholds
        .iter()
        .filter_map(|t| t.recovery.map(|r| ("lsing".to_string(), r)))
        .collect();
    if !reports.is_empty() {
        io::write_file(&out.join("recovery.csv"), |w| io::write_recovery(w, &reports))?;
    }
    io::write_file(&out.join("centrality.csv"), |w| io::write_centrality(w, &ev.centrality, names))?;
    io::write_file(&out.join("tau_sweep.csv"), |w| io::write_tau_sweep(w, &ev.sweep))
}

/// Graphical lasso on the training rows, directly and after the
/// nonparanormal transform.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub glasso: Array2<f64>,
    pub npn_glasso: Array2<f64>,
    pub glasso_support: EdgeSet,
    pub npn_support: EdgeSet,
    pub glasso_recovery: Option<RecoveryReport>,
    pub npn_recovery: Option<RecoveryReport>,
}

pub fn run_baselines(cfg: &RunConfig, data: &SplitDataset, truth: Option<&TruthFile>) -> CliResult<BaselineOutcome> {
    let lambda = cfg.baselines.glasso_lambda;
    let direct = graphical_lasso(covariance(data.train.view()).view(), lambda, GlassoOptions::default())?;
    let npn = nonparanormal_transform(data.train.view())?;
    let via_npn = graphical_lasso(covariance(npn.view()).view(), lambda, GlassoOptions::default())?;
    let glasso_support = precision_support(direct.theta_hat.view());
    let npn_support = precision_support(via_npn.theta_hat.view());
    let truth_edges = truth.map(TruthFile::edge_set).transpose()?;
    let score = |est: &EdgeSet| truth_edges.as_ref().map(|t| recovery(est, t)).transpose();
    Ok(BaselineOutcome {
        glasso_recovery: score(&glasso_support)?,
        npn_recovery: score(&npn_support)?,
        glasso: direct.theta_hat,
        npn_glasso: via_npn.theta_hat,
        glasso_support,
        npn_support,
    })
}

pub fn write_baselines(out: &Path, names: &[String], b: &BaselineOutcome) -> CliResult<()> {
    let dir = out.join(BASELINES_DIR);
    io::write_file(&dir.join("glasso_precision.csv"), |w| io::write_matrix(w, names, b.glasso.view()))?;
    io::write_file(&dir.join("npn_glasso_precision.csv"), |w| io::write_matrix(w, names, b.npn_glasso.view()))?;
    let reports: Vec<(String, RecoveryReport)> = [("glasso", b.glasso_recovery), ("npn_glasso", b.npn_recovery)]
        .into_iter()
        .filter_map(|(m, r)| r.map(|r| (m.to_string(), r)))
        .collect();
    if !reports.is_empty() {
        io::write_file(&dir.join("recovery.csv"), |w| io::write_recovery(w, &reports))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestNode {
    pub k: usize,
    pub lambda: f64,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub wall_clock_secs: f64,
    pub resumed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub library_version: String,
    pub seed: u64,
    pub data_sha256: String,
    pub config: RunConfig,
    pub wall_clock_secs: f64,
    pub nodes: Vec<ManifestNode>,
}

pub fn write_manifest(out: &Path, m: &Manifest) -> CliResult<()> {
    write_json(&out.join("manifest.json"), m)
}

pub fn manifest_nodes(stage: &NodeStage) -> Vec<ManifestNode> {
    stage
        .records
        .iter()
        .map(|r| ManifestNode {
            k: r.k,
            lambda: r.lambda,
            best_epoch: r.best_epoch,
            best_val_nll: r.best_val_nll,
            wall_clock_secs: r.wall_clock_secs,
            resumed: stage.resumed.contains(&r.k),
        })
        .collect()
}

/// Everything a full run produced, kept in memory for callers.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub names: Vec<String>,
    pub omega: GeneralizedPrecision,
    pub nodes: NodeStage,
    pub evaluation: Evaluation,
    pub baselines: Option<BaselineOutcome>,
    pub truth: Option<TruthFile>,
    pub manifest: Manifest,
}

/// Split, fit every node, assemble, threshold, and score; writes every
/// artifact under `cfg.output`.
pub fn run_pipeline(cfg: &RunConfig) -> CliResult<PipelineOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let out = cfg.output.as_path();
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let src = load_source(cfg)?;
    if let Some(t) = &src.truth {
        write_json(&out.join("truth.json"), t)?;
    }
    let (data, split_file) = split(cfg, &src)?;
    write_json(&out.join("split.json"), &split_file)?;
    let nodes: Vec<usize> = (0..data.dim()).collect();
    let stage = fit_nodes(cfg, &data, &split_file, &nodes)?;
    let omega = assemble_records(&stage.records, data.dim())?;
    write_omega(out, &data.names, &omega)?;
    let evaluation = evaluate(cfg, &omega, src.truth.as_ref())?;
    write_evaluation(out, &data.names, &omega, &evaluation)?;
    let baselines = if cfg.baselines.enabled {
        let b = run_baselines(cfg, &data, src.truth.as_ref())?;
        write_baselines(out, &data.names, &b)?;
        Some(b)
    } else {
        None
    };
    let manifest = Manifest {
        command: "pipeline".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        library_version: lsing::VERSION.into(),
        seed: cfg.seed,
        data_sha256: split_file.data_sha256.clone(),
        config: cfg.clone(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        nodes: manifest_nodes(&stage),
    };
    write_manifest(out, &manifest)?;
    Ok(PipelineOutcome {
        names: data.names,
        omega,
        nodes: stage,
        evaluation,
        baselines,
        truth: src.truth,
        manifest,
    })
}
