//! Run configuration: a TOML file with every field optional, plus command
//! line overrides.

use std::path::{Path, PathBuf};

use lsing::synthdata::{DEFAULT_VALUE_RANGE, DEFAULT_ZERO_PROB};
use lsing::training::{
    BatchSize, SplitSizes, DEFAULT_HIDDEN, DEFAULT_LAMBDA_GRID, DEFAULT_LEARNING_RATE, DEFAULT_MAX_EPOCHS,
    DEFAULT_PATIENCE,
};
use lsing::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_TAU_GRID: [f64; 3] = [0.2, 0.1, 0.05];

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Header row of names, one sample per row.
    Csv { path: PathBuf },
    Gaussian {
        dim: usize,
        samples: usize,
        #[serde(default = "default_zero_prob")]
        zero_prob: f64,
        #[serde(default = "default_value_range")]
        value_range: (f64, f64),
    },
    Butterfly { pairs: usize, samples: usize },
}

fn default_zero_prob() -> f64 {
    DEFAULT_ZERO_PROB
}

fn default_value_range() -> (f64, f64) {
    DEFAULT_VALUE_RANGE
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Gaussian {
            dim: 10,
            samples: 25_000,
            zero_prob: DEFAULT_ZERO_PROB,
            value_range: DEFAULT_VALUE_RANGE,
        }
    }
}

/// Network and optimizer settings for every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub hidden: Vec<usize>,
    pub quad_nodes: usize,
    pub lambda_grid: Vec<f64>,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: BatchSize,
    pub linear_shift: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            quad_nodes: lsing::quadmap::DEFAULT_QUAD_NODES,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: BatchSize::Auto,
            linear_shift: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    /// Also fit graphical lasso and nonparanormal graphical lasso.
    pub enabled: bool,
    pub glasso_lambda: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            enabled: false,
            glasso_lambda: lsing::baselines::DEFAULT_GLASSO_LAMBDA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub output: PathBuf,
    pub data: DataSource,
    /// Ground-truth file for evaluating a CSV dataset.
    pub truth: Option<PathBuf>,
    pub split: SplitSizes,
    pub train: TrainSection,
    pub tau_grid: Vec<f64>,
    pub sweep_points: usize,
    pub baselines: BaselineSection,
}

pub fn available_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: available_workers(),
            output: PathBuf::from("lsing-out"),
            data: DataSource::default(),
            truth: None,
            split: SplitSizes::Counts {
                train: 5000,
                validation: 10_000,
                estimation: 10_000,
            },
            train: TrainSection::default(),
            tau_grid: DEFAULT_TAU_GRID.to_vec(),
            sweep_points: lsing::precision::DEFAULT_SWEEP_POINTS,
            baselines: BaselineSection::default(),
        }
    }
}

#[derive(Deserialize)]
struct ManifestConfig {
    config: RunConfig,
}

impl RunConfig {
    /// Read a TOML config, or the `config` entry of a run manifest when the
    /// file ends in `.json`.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        if is_json {
            serde_json::from_str::<ManifestConfig>(&text)
                .map(|m| m.config)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        } else {
            Self::from_toml(&text).map_err(|e| match e {
                CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
                other => other,
            })
        }
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            hidden: self.train.hidden.clone(),
            quad_nodes: self.train.quad_nodes,
            lambda_grid: self.train.lambda_grid.clone(),
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            linear_shift: self.train.linear_shift,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        self.train_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.tau_grid.is_empty() {
            return bad("tau grid is empty".into());
        }
        if let Some(t) = self.tau_grid.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return bad(format!("tau values must lie in (0, 1], got {t}"));
        }
        if self.sweep_points == 0 {
            return bad("sweep_points must be positive".into());
        }
        if !(self.baselines.glasso_lambda > 0.0 && self.baselines.glasso_lambda.is_finite()) {
            return bad(format!("glasso_lambda must be positive, got {}", self.baselines.glasso_lambda));
        }
        match &self.data {
            DataSource::Gaussian {
                dim,
                samples,
                zero_prob,
                value_range,
            } => {
                if *dim < 2 || *samples == 0 {
                    return bad(format!("gaussian generator needs dim >= 2 and samples > 0, got {dim} and {samples}"));
                }
                if !(0.0..=1.0).contains(zero_prob) || !(value_range.0 <= value_range.1) {
                    return bad("gaussian generator: zero_prob must lie in [0, 1] and value_range be ordered".into());
                }
            }
            DataSource::Butterfly { pairs, samples } => {
                if *pairs == 0 || *samples == 0 {
                    return bad("butterfly generator needs pairs > 0 and samples > 0".into());
                }
            }
            DataSource::Csv { .. } => {}
        }
        Ok(())
    }
}

/// Values given on the command line; each `Some` replaces the config value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub split: Option<SplitSizes>,
    pub hidden: Option<Vec<usize>>,
    pub quad_nodes: Option<usize>,
    pub lambda_grid: Option<Vec<f64>>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub learning_rate: Option<f64>,
    pub no_linear_shift: bool,
    pub tau_grid: Option<Vec<f64>>,
    pub sweep_points: Option<usize>,
    pub baselines: bool,
    pub glasso_lambda: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        set(&mut cfg.seed, &self.seed);
        set(&mut cfg.workers, &self.workers);
        set(&mut cfg.output, &self.output);
        if let Some(p) = &self.data {
            cfg.data = DataSource::Csv { path: p.clone() };
        }
        if self.truth.is_some() {
            cfg.truth = self.truth.clone();
        }
        set(&mut cfg.split, &self.split);
        set(&mut cfg.train.hidden, &self.hidden);
        set(&mut cfg.train.quad_nodes, &self.quad_nodes);
        set(&mut cfg.train.lambda_grid, &self.lambda_grid);
        set(&mut cfg.train.max_epochs, &self.max_epochs);
        set(&mut cfg.train.patience, &self.patience);
        set(&mut cfg.train.learning_rate, &self.learning_rate);
        if self.no_linear_shift {
            cfg.train.linear_shift = false;
        }
        set(&mut cfg.tau_grid, &self.tau_grid);
        set(&mut cfg.sweep_points, &self.sweep_points);
        if self.baselines {
            cfg.baselines.enabled = true;
        }
        set(&mut cfg.baselines.glasso_lambda, &self.glasso_lambda);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.train.hidden, vec![64, 64, 64]);
        assert_eq!(cfg.train.quad_nodes, 21);
        assert_eq!(cfg.train.lambda_grid, vec![1.0, 0.1, 0.01, 0.001, 0.0]);
        assert_eq!(cfg.tau_grid, vec![0.2, 0.1, 0.05]);
        assert!(cfg.workers >= 1);
        cfg.validate().unwrap();
    }

    #[test]
    fn empty_file_gives_defaults() {
        let mut cfg = RunConfig::from_toml("").unwrap();
        cfg.workers = RunConfig::default().workers;
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.data = DataSource::Butterfly { pairs: 5, samples: 100 };
        cfg.split = SplitSizes::Fractions {
            train: 0.6,
            validation: 0.2,
        };
        cfg.train.batch_size = BatchSize::Rows(64);
        cfg.truth = Some("truth.json".into());
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_sections_and_generators_parse() {
        let cfg = RunConfig::from_toml(
            r#"
            seed = 7
            tau_grid = [0.3]
            [data]
            kind = "gaussian"
            dim = 5
            samples = 300
            [split.counts]
            train = 100
            validation = 100
            estimation = 100
            [train]
            hidden = [8]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.hidden, vec![8]);
        assert_eq!(cfg.train.quad_nodes, 21);
        assert_eq!(
            cfg.data,
            DataSource::Gaussian {
                dim: 5,
                samples: 300,
                zero_prob: DEFAULT_ZERO_PROB,
                value_range: DEFAULT_VALUE_RANGE
            }
        );
        assert_eq!(cfg.train_config().seed, 7);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(matches!(RunConfig::from_toml("sed = 1"), Err(CliError::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.tau_grid = vec![0.0];
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.train.lambda_grid.clear();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.workers = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_replace_only_given_fields() {
        let mut cfg = RunConfig::default();
        Overrides {
            seed: Some(3),
            data: Some("x.csv".into()),
            no_linear_shift: true,
            lambda_grid: Some(vec![0.0]),
            ..Default::default()
        }
        .apply(&mut cfg);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.data, DataSource::Csv { path: "x.csv".into() });
        assert!(!cfg.train.linear_shift);
        assert_eq!(cfg.train.lambda_grid, vec![0.0]);
        assert_eq!(cfg.train.hidden, vec![64, 64, 64]);
    }
}
