use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use lsing::precision::{assemble, tau_sweep, threshold};
use lsing::training::SplitSizes;

use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, CliResult};
use crate::heatmap::pgm_bytes;
use crate::io;
use crate::pipeline::{self, Manifest, TruthFile};

#[derive(Debug, Parser)]
#[command(name = "lsing", version, about = "Learn conditional independence graphs with monotone transport maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset; writes data.csv and truth.json.
    Generate(RunArgs),
    /// Split the data and fit the per-node maps (all nodes or `--nodes`).
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        nodes: Option<Vec<usize>>,
    },
    /// Score the stored models on the estimation rows and write omega.csv.
    Estimate(RunArgs),
    /// Threshold a score matrix at each tau.
    Threshold {
        #[arg(long)]
        omega: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        tau: Vec<f64>,
        #[arg(long, short, default_value = ".")]
        output: PathBuf,
    },
    /// Recovery against a true graph and centrality of the thresholded graph.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to omega.csv in the output directory.
        #[arg(long)]
        omega: Option<PathBuf>,
    },
    /// Edge count over an evenly spaced tau grid on [0, 1].
    SweepTau {
        #[arg(long)]
        omega: PathBuf,
        #[arg(long, default_value_t = lsing::precision::DEFAULT_SWEEP_POINTS)]
        points: usize,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Render a square matrix CSV as a grayscale PGM.
    Heatmap {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Run every stage end to end.
    Pipeline(RunArgs),
}

/// Config file and overrides shared by the run stages.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// CSV dataset; replaces any generator in the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Row counts `train,validation,estimation`.
    #[arg(long, value_delimiter = ',')]
    pub split: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub quad_nodes: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Drop the linear term of each component.
    #[arg(long)]
    pub no_linear_shift: bool,
    #[arg(long, value_delimiter = ',')]
    pub tau_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub sweep_points: Option<usize>,
    /// Also fit graphical lasso baselines.
    #[arg(long)]
    pub baselines: bool,
    #[arg(long)]
    pub glasso_lambda: Option<f64>,
}

impl RunArgs {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let split = match self.split.as_deref() {
            None => None,
            Some(&[train, validation, estimation]) => Some(SplitSizes::Counts {
                train,
                validation,
                estimation,
            }),
            Some(other) => return Err(CliError::Config(format!("--split takes three counts, got {other:?}"))),
        };
        Overrides {
            seed: self.seed,
            workers: self.workers,
            output: self.output.clone(),
            data: self.data.clone(),
            truth: self.truth.clone(),
            split,
            hidden: self.hidden.clone(),
            quad_nodes: self.quad_nodes,
            lambda_grid: self.lambda_grid.clone(),
            max_epochs: self.max_epochs,
            patience: self.patience,
            learning_rate: self.learning_rate,
            no_linear_shift: self.no_linear_shift,
            tau_grid: self.tau_grid.clone(),
            sweep_points: self.sweep_points,
            baselines: self.baselines,
            glasso_lambda: self.glasso_lambda,
        }
        .apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn manifest(command: &str, cfg: &RunConfig, data_sha256: String, start: Instant, nodes: Vec<pipeline::ManifestNode>) -> Manifest {
    Manifest {
        command: command.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        library_version: lsing::VERSION.into(),
        seed: cfg.seed,
        data_sha256,
        config: cfg.clone(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        nodes,
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let start = Instant::now();
    match cli.command {
        Command::Generate(args) => {
            let cfg = args.resolve()?;
            if matches!(cfg.data, crate::config::DataSource::Csv { .. }) {
                return Err(CliError::Config("generate needs a gaussian or butterfly data source".into()));
            }
            let src = pipeline::load_source(&cfg)?;
            pipeline::write_generated(&cfg, &src)?;
            log::info!("wrote {} samples of {} variables to {}", src.data.values.nrows(), src.data.names.len(), cfg.output.display());
        }
        Command::Train { run, nodes } => {
            let cfg = run.resolve()?;
            let src = pipeline::load_source(&cfg)?;
            let (data, split) = pipeline::split(&cfg, &src)?;
            let out = cfg.output.as_path();
            io::write_atomic(&out.join("split.json"), serde_json::to_string_pretty(&split).unwrap().as_bytes())?;
            let nodes = nodes.unwrap_or_else(|| (0..data.dim()).collect());
            let stage = pipeline::fit_nodes(&cfg, &data, &split, &nodes)?;
            let m = manifest("train", &cfg, split.data_sha256.clone(), start, pipeline::manifest_nodes(&stage));
            pipeline::write_manifest(out, &m)?;
        }
        Command::Estimate(args) => {
            let cfg = args.resolve()?;
            let src = pipeline::load_source(&cfg)?;
            let out = cfg.output.as_path();
            let (data, split) = pipeline::load_split(out, &src)?;
            let rows = pipeline::rows_from_models(out, &data)?;
            let gp = assemble(&rows)?;
            pipeline::write_omega(out, &data.names, &gp)?;
            let m = manifest("estimate", &cfg, split.data_sha256, start, Vec::new());
            pipeline::write_manifest(out, &m)?;
        }
        Command::Threshold { omega, tau, output } => {
            let (names, gp) = pipeline::read_omega(&omega)?;
            for t in tau {
                let edges = threshold(&gp, t).map_err(|e| CliError::Config(e.to_string()))?;
                let path = output.join(format!("edges_tau_{}.csv", io::tau_tag(t)));
                io::write_file(&path, |w| io::write_edges(w, &edges, &names, gp.omega.view()))?;
                println!("tau {t}: {} edges", edges.len());
            }
        }
        Command::Evaluate { run, omega } => {
            let cfg = run.resolve()?;
            let out = cfg.output.as_path();
            let (names, gp) = pipeline::read_omega(&omega.unwrap_or_else(|| out.join("omega.csv")))?;
            let truth = match &cfg.truth {
                Some(p) => Some(TruthFile::load(p)?),
                None => {
                    let p = out.join("truth.json");
                    p.exists().then(|| TruthFile::load(&p)).transpose()?
                }
            };
            let ev = pipeline::evaluate(&cfg, &gp, truth.as_ref())?;
            pipeline::write_evaluation(out, &names, &gp, &ev)?;
            for t in &ev.thresholds {
                match &t.recovery {
                    Some(r) => println!("tau {}: {} edges, fpr {:.4}, f1 {:.4}", t.tau, t.edges.len(), r.fpr, r.f1),
                    None => println!("tau {}: {} edges", t.tau, t.edges.len()),
                }
            }
        }
        Command::SweepTau { omega, points, output } => {
            if points == 0 {
                return Err(CliError::Config("points must be positive".into()));
            }
            let (_, gp) = pipeline::read_omega(&omega)?;
            io::write_file(&output, |w| io::write_tau_sweep(w, &tau_sweep(&gp, points)))?;
        }
        Command::Heatmap { input, output } => {
            let m = io::load_dataset_csv(&input)?;
            io::write_atomic(&output, &pgm_bytes(m.values.view())?)?;
        }
        Command::Pipeline(args) => {
            let cfg = args.resolve()?;
            let res = pipeline::run_pipeline(&cfg)?;
            for t in &res.evaluation.thresholds {
                match &t.recovery {
                    Some(r) => println!("tau {}: {} edges, fpr {:.4}, f1 {:.4}", t.tau, t.edges.len(), r.fpr, r.f1),
                    None => println!("tau {}: {} edges", t.tau, t.edges.len()),
                }
            }
        }
    }
    Ok(())
}
