//! CSV formats read and written by the command line tool.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use lsing::graphmetrics::{CentralityTable, RecoveryReport};
use lsing::training::EpochRecord;
use lsing::EdgeSet;
use ndarray::{Array2, ArrayView2};

use crate::error::{CliError, CliResult};

/// Samples (or a square matrix) with one name per column.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedMatrix {
    pub names: Vec<String>,
    pub values: Array2<f64>,
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn load_dataset_csv(path: &Path) -> CliResult<NamedMatrix> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_dataset_csv(file).map_err(|e| match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parse a header row of names followed by one numeric row per sample.
/// Data rows are numbered from 1, columns from 1.
pub fn parse_dataset_csv<R: Read>(input: R) -> CliResult<NamedMatrix> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(CliError::Data("empty file".into())),
        Some(r) => r.map_err(|e| CliError::Data(format!("header: {e}")))?,
    };
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(CliError::Data("empty header row".into()));
    }
    let d = names.len();
    let mut flat = Vec::new();
    let mut rows = 0;
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CliError::Data(format!("row {row}: {e}")))?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != d {
            return Err(CliError::Data(format!("row {row} has {} fields, header has {d}", rec.len())));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v = cell
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    CliError::Data(format!(
                        "row {row}, column {} ({}): not a finite number: {cell:?}",
                        j + 1,
                        names[j]
                    ))
                })?;
            flat.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Data("no data rows".into()));
    }
    let values = Array2::from_shape_vec((rows, d), flat).expect("row lengths checked");
    Ok(NamedMatrix { names, values })
}

pub fn write_matrix<W: Write>(out: W, names: &[String], values: ArrayView2<f64>) -> CliResult<()> {
    if names.len() != values.ncols() {
        return Err(CliError::Data(format!("{} names for {} columns", names.len(), values.ncols())));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(names).map_err(csv_err)?;
    for row in values.rows() {
        w.write_record(row.iter().map(|v| fmt_f64(*v))).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Data(e.to_string())
}

pub fn write_edges<W: Write>(out: W, edges: &EdgeSet, names: &[String], weights: ArrayView2<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["source", "target", "source_name", "target_name", "weight"])
        .map_err(csv_err)?;
    for (a, b) in edges.iter() {
        w.write_record([
            a.to_string(),
            b.to_string(),
            names[a].clone(),
            names[b].clone(),
            fmt_f64(weights[[a, b]]),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))
}

/// Edge list written by [`write_edges`].
pub fn read_edges<R: Read>(input: R, d: usize) -> CliResult<EdgeSet> {
    let mut r = csv::Reader::from_reader(input);
    let mut edges = EdgeSet::new(d);
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parse = |j: usize| -> CliResult<usize> {
            rec.get(j)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| CliError::Data(format!("edge row {}: bad node index", i + 1)))
        };
        edges.insert(parse(0)?, parse(1)?)?;
    }
    Ok(edges)
}

pub const RECOVERY_HEADER: [&str; 11] = [
    "method",
    "tau",
    "true_positives",
    "false_positives",
    "false_negatives",
    "true_negatives",
    "fpr",
    "tpr",
    "precision",
    "recall",
    "f1",
];

pub fn write_recovery<W: Write>(out: W, reports: &[(String, RecoveryReport)]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECOVERY_HEADER).map_err(csv_err)?;
    for (method, r) in reports {
        w.write_record([
            method.clone(),
            r.tau.map(fmt_f64).unwrap_or_default(),
            r.true_positives.to_string(),
            r.false_positives.to_string(),
            r.false_negatives.to_string(),
            r.true_negatives.to_string(),
            fmt_f64(r.fpr),
            fmt_f64(r.tpr),
            fmt_f64(r.precision),
            fmt_f64(r.recall),
            fmt_f64(r.f1),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))
}

/// Rows ordered by mean rank.
pub fn write_centrality<W: Write>(out: W, table: &CentralityTable, names: &[String]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "position",
        "node",
        "name",
        "degree",
        "closeness",
        "betweenness",
        "hub",
        "degree_rank",
        "closeness_rank",
        "betweenness_rank",
        "hub_rank",
        "mean_rank",
    ])
    .map_err(csv_err)?;
    for (pos, row) in table.by_mean_rank().into_iter().enumerate() {
        let mut rec = vec![
            (pos + 1).to_string(),
            row.node.to_string(),
            names[row.node].clone(),
            fmt_f64(row.degree),
            fmt_f64(row.closeness),
            fmt_f64(row.betweenness),
            fmt_f64(row.hub),
        ];
        rec.extend(row.ranks.iter().map(|r| fmt_f64(*r)));
        rec.push(fmt_f64(row.mean_rank));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))
}

pub fn write_history<W: Write>(out: W, history: &[EpochRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_total", "train_nll", "val_nll"]).map_err(csv_err)?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            fmt_f64(r.train_total),
            fmt_f64(r.train_nll),
            fmt_f64(r.val_nll),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))
}

pub fn write_tau_sweep<W: Write>(out: W, sweep: &[(f64, usize)]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau", "edges"]).map_err(csv_err)?;
    for (tau, n) in sweep {
        w.write_record([fmt_f64(*tau), n.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))
}

/// Write through a buffer into `path`, creating parent directories.
pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> CliResult<()>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Write `bytes` to a sibling temporary file and rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// File name fragment for a threshold, e.g. `0.05` -> `0.05`.
pub fn tau_tag(tau: f64) -> String {
    fmt_f64(tau)
}
