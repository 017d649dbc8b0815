//! Data splitting, standardization, and the per-node training loop.
//!
//! Each map component is trained with Adam on the regularized loss over the
//! training rows. After every epoch the unregularized negative
//! log-likelihood is measured on the validation rows; training stops once it
//! has not improved for `patience` epochs and the best parameters seen are
//! kept. The penalty weight is picked from a grid by the same validation
//! score.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffnet::PositiveMlp;
use crate::error::{Error, Result};
use crate::linalg::{column_means, column_sds};
use crate::objective::{self, gradient_pass};
use crate::quadmap::{cc_rule, MapComponent, DEFAULT_QUAD_NODES};

/// Penalty weights tried by default.
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [1.0, 0.1, 0.01, 0.001, 0.0];
pub const DEFAULT_HIDDEN: [usize; 3] = [64, 64, 64];
pub const DEFAULT_PATIENCE: usize = 10;
pub const DEFAULT_MAX_EPOCHS: usize = 500;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
/// Largest training set that is processed as one batch under [`BatchSize::Auto`].
pub const FULL_BATCH_LIMIT: usize = 2048;
pub const DEFAULT_MINIBATCH: usize = 256;

/// Per-column affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Fit on `x`; population standard deviations.
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::EmptyBatch);
        }
        let mean = column_means(x);
        let sd = column_sds(x);
        if let Some(column) = sd.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::ConstantColumn { column });
        }
        Ok(Self {
            mean: mean.to_vec(),
            sd: sd.to_vec(),
        })
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mean = Array1::from(self.mean.clone());
        let sd = Array1::from(self.sd.clone());
        (&x - &mean) / &sd
    }
}

/// How many rows go to each split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSizes {
    Counts {
        train: usize,
        validation: usize,
        estimation: usize,
    },
    /// Fractions of the rows for training and validation; the rest is used
    /// for estimation.
    Fractions { train: f64, validation: f64 },
}

impl SplitSizes {
    fn resolve(&self, rows: usize) -> Result<(usize, usize, usize)> {
        let (t, v, e) = match *self {
            SplitSizes::Counts {
                train,
                validation,
                estimation,
            } => (train, validation, estimation),
            SplitSizes::Fractions { train, validation } => {
                if !(train > 0.0 && validation > 0.0 && train + validation < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "split fractions must be positive and sum below 1, got {train} and {validation}"
                    )));
                }
                let t = (train * rows as f64).round() as usize;
                let v = (validation * rows as f64).round() as usize;
                (t, v, rows.saturating_sub(t + v))
            }
        };
        if t == 0 || v == 0 || e == 0 {
            return Err(Error::InvalidArgument("every split needs at least one row".into()));
        }
        if t + v + e > rows {
            return Err(Error::InsufficientRows {
                needed: t + v + e,
                available: rows,
            });
        }
        Ok((t, v, e))
    }
}

/// Row indices (into the source matrix) of each split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub estimation: Vec<usize>,
}

/// Standardized training, validation, and estimation rows of one dataset.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: Array2<f64>,
    pub validation: Array2<f64>,
    pub estimation: Array2<f64>,
    pub names: Vec<String>,
    pub standardizer: Standardizer,
    pub indices: SplitIndices,
}

impl SplitDataset {
    pub fn dim(&self) -> usize {
        self.train.ncols()
    }

    /// Rebuild splits from previously recorded indices and standardizer.
    pub fn from_indices(
        raw: ArrayView2<f64>,
        names: Vec<String>,
        indices: SplitIndices,
        standardizer: Standardizer,
    ) -> Result<Self> {
        let n = raw.nrows();
        let all = indices.train.iter().chain(&indices.validation).chain(&indices.estimation);
        if let Some(&bad) = all.clone().find(|&&i| i >= n) {
            return Err(Error::InvalidIndex { index: bad, dim: n });
        }
        crate::error::check_width("standardizer", raw.ncols(), standardizer.mean.len())?;
        let z = standardizer.apply(raw);
        Ok(Self {
            train: z.select(Axis(0), &indices.train),
            validation: z.select(Axis(0), &indices.validation),
            estimation: z.select(Axis(0), &indices.estimation),
            names,
            standardizer,
            indices,
        })
    }
}

/// Standardize with statistics of the full data, shuffle rows under `seed`,
/// and cut into training, validation, and estimation sets.
pub fn split_standardize(
    raw: ArrayView2<f64>,
    names: Vec<String>,
    sizes: SplitSizes,
    seed: u64,
) -> Result<SplitDataset> {
    crate::error::check_width("variable names", raw.ncols(), names.len())?;
    let rows = raw.nrows();
    let (t, v, e) = sizes.resolve(rows)?;
    let standardizer = Standardizer::fit(raw)?;
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let indices = SplitIndices {
        train: order[..t].to_vec(),
        validation: order[t..t + v].to_vec(),
        estimation: order[t + v..t + v + e].to_vec(),
    };
    SplitDataset::from_indices(raw, names, indices, standardizer)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BatchSize {
    /// Full batch up to [`FULL_BATCH_LIMIT`] rows, minibatches of
    /// [`DEFAULT_MINIBATCH`] above that.
    #[default]
    Auto,
    Full,
    Rows(usize),
}

impl BatchSize {
    fn resolve(self, rows: usize) -> usize {
        match self {
            BatchSize::Auto if rows <= FULL_BATCH_LIMIT => rows,
            BatchSize::Auto => DEFAULT_MINIBATCH,
            BatchSize::Full => rows,
            BatchSize::Rows(n) => n.clamp(1, rows),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub quad_nodes: usize,
    pub lambda_grid: Vec<f64>,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: BatchSize,
    /// Include the linear offset `γᵀx_{−k}` in every component.
    pub linear_shift: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            quad_nodes: DEFAULT_QUAD_NODES,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: BatchSize::Auto,
            linear_shift: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.lambda_grid.is_empty() {
            return bad("lambda grid is empty".into());
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return bad(format!("lambda values must be nonnegative, got {l}"));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return bad("patience and max_epochs must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.quad_nodes < 2 {
            return bad(format!("quadrature needs at least 2 nodes, got {}", self.quad_nodes));
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        if let BatchSize::Rows(0) = self.batch_size {
            return bad("batch size must be positive".into());
        }
        Ok(())
    }
}

/// Adam with the usual defaults (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Patience-based early stopping on a score to minimize.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    /// `initial` is the score before any training (epoch 0).
    pub fn new(patience: usize, initial: f64) -> Self {
        Self {
            patience,
            best: initial,
            best_epoch: 0,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        let improved = score < self.best;
        if improved {
            self.best = score;
            self.best_epoch = epoch;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        StopDecision {
            improved,
            stop: self.since_best >= self.patience,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_total: f64,
    pub train_nll: f64,
    pub val_nll: f64,
}

/// A fitted component with its training trace.
#[derive(Debug, Clone)]
pub struct TrainedComponent {
    pub map: MapComponent<PositiveMlp>,
    pub lambda: f64,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_nll: f64,
}

/// Seed for node `k` derived from the run seed.
pub fn node_seed(seed: u64, k: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Untrained component for node `k` as initialized by [`train_component`].
pub fn init_component(k: usize, dim: usize, cfg: &TrainConfig) -> Result<MapComponent<PositiveMlp>> {
    let mut rng = ChaCha8Rng::seed_from_u64(node_seed(cfg.seed, k));
    let net = PositiveMlp::glorot(dim, &cfg.hidden, &mut rng)?;
    let mc = MapComponent::new(k, net, 0.0, cc_rule(cfg.quad_nodes)?)?;
    Ok(if cfg.linear_shift { mc.with_linear_shift() } else { mc })
}

/// Train the component for node `k` at a fixed penalty weight.
pub fn train_component(k: usize, data: &SplitDataset, cfg: &TrainConfig, lambda: f64) -> Result<TrainedComponent> {
    cfg.validate()?;
    let d = data.dim();
    crate::error::check_index(k, d)?;
    if data.train.nrows() == 0 || data.validation.nrows() == 0 {
        return Err(Error::InsufficientRows {
            needed: 1,
            available: 0,
        });
    }
    let mut mc = init_component(k, d, cfg)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(node_seed(cfg.seed.wrapping_add(1), k));
    let m = data.train.nrows();
    let batch = cfg.batch_size.resolve(m);
    let mut params = mc.flat_params();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);

    let initial = objective::nll(&mc, data.validation.view())?;
    if !initial.is_finite() {
        return Err(Error::Diverged { k, epoch: 0 });
    }
    let mut stopper = EarlyStopping::new(cfg.patience, initial);
    let mut best_params = params.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..m).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut sum_total, mut sum_nll) = (0.0, 0.0);
        for idx in order.chunks(batch) {
            let rows = if idx.len() == m && batch == m {
                data.train.clone()
            } else {
                data.train.select(Axis(0), idx)
            };
            let pass = gradient_pass(&mc, rows.view(), lambda, false)?;
            let total = pass.total(lambda);
            if !total.is_finite() || pass.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { k, epoch });
            }
            let w = idx.len() as f64;
            sum_total += w * total;
            sum_nll += w * pass.nll;
            adam.step(&mut params, &pass.grad);
            mc.set_flat_params(&params)?;
        }
        let val = objective::nll(&mc, data.validation.view())?;
        if !val.is_finite() {
            return Err(Error::Diverged { k, epoch });
        }
        history.push(EpochRecord {
            epoch,
            train_total: sum_total / m as f64,
            train_nll: sum_nll / m as f64,
            val_nll: val,
        });
        let decision = stopper.observe(epoch, val);
        log::debug!("node {k} λ={lambda} epoch {epoch}: val nll {val:.5}");
        if decision.improved {
            best_params.clone_from(&params);
        }
        if decision.stop {
            break;
        }
    }
    mc.set_flat_params(&best_params)?;
    Ok(TrainedComponent {
        map: mc,
        lambda,
        history,
        best_epoch: stopper.best_epoch(),
        best_val_nll: stopper.best(),
    })
}

/// Outcome of the penalty-weight search for one node.
#[derive(Debug, Clone)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub trained: TrainedComponent,
    /// Best validation nll per grid value; `None` when that run diverged.
    pub scores: Vec<(f64, Option<f64>)>,
}

/// Train once per grid value and keep the fit with the lowest validation
/// nll; ties go to the larger penalty.
pub fn select_lambda(k: usize, data: &SplitDataset, cfg: &TrainConfig) -> Result<LambdaSelection> {
    cfg.validate()?;
    let mut grid = cfg.lambda_grid.clone();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    let mut best: Option<TrainedComponent> = None;
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in &grid {
        match train_component(k, data, cfg, lambda) {
            Ok(t) => {
                scores.push((lambda, Some(t.best_val_nll)));
                if best.as_ref().is_none_or(|b| t.best_val_nll < b.best_val_nll) {
                    best = Some(t);
                }
            }
            Err(Error::Diverged { .. }) => scores.push((lambda, None)),
            Err(e) => return Err(e),
        }
    }
    let trained = best.ok_or(Error::AllDiverged { k })?;
    Ok(LambdaSelection {
        lambda: trained.lambda,
        trained,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadmap::ConditionalMap;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("x{i}")).collect()
    }

    fn normal_matrix(seed: u64, m: usize, d: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((m, d), || rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn split_sizes_follow_counts() {
        let raw = normal_matrix(1, 578, 3);
        let sizes = SplitSizes::Counts {
            train: 346,
            validation: 115,
            estimation: 117,
        };
        let s = split_standardize(raw.view(), names(3), sizes, 7).unwrap();
        assert_eq!(s.train.nrows(), 346);
        assert_eq!(s.validation.nrows(), 115);
        assert_eq!(s.estimation.nrows(), 117);
    }

    #[test]
    fn splits_partition_the_rows() {
        let raw = normal_matrix(2, 50, 2);
        let sizes = SplitSizes::Fractions {
            train: 0.5,
            validation: 0.2,
        };
        let s = split_standardize(raw.view(), names(2), sizes, 3).unwrap();
        let mut all: Vec<usize> = s
            .indices
            .train
            .iter()
            .chain(&s.indices.validation)
            .chain(&s.indices.estimation)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        // rows are the standardized source rows
        let z = s.standardizer.apply(raw.view());
        assert_eq!(s.train.row(0), z.row(s.indices.train[0]));
    }

    #[test]
    fn standardizer_on_standardized_data_is_identity() {
        let raw = normal_matrix(3, 400, 3);
        let z = Standardizer::fit(raw.view()).unwrap().apply(raw.view());
        let again = Standardizer::fit(z.view()).unwrap();
        for (m, s) in again.mean.iter().zip(&again.sd) {
            assert!(m.abs() < 1e-12);
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn split_errors() {
        let raw = normal_matrix(4, 10, 2);
        let too_many = SplitSizes::Counts {
            train: 5,
            validation: 5,
            estimation: 5,
        };
        assert!(matches!(
            split_standardize(raw.view(), names(2), too_many, 0),
            Err(Error::InsufficientRows { needed: 15, available: 10 })
        ));
        let mut constant = raw.clone();
        constant.column_mut(1).fill(3.0);
        let ok = SplitSizes::Counts {
            train: 4,
            validation: 3,
            estimation: 3,
        };
        assert!(matches!(
            split_standardize(constant.view(), names(2), ok, 0),
            Err(Error::ConstantColumn { column: 1 })
        ));
    }

    #[test]
    fn early_stopping_halts_patience_epochs_after_best() {
        let mut s = EarlyStopping::new(10, 5.0);
        // improving until epoch 7, then a plateau
        let mut stopped_at = None;
        for epoch in 1..100 {
            let score = if epoch <= 7 { 5.0 - epoch as f64 * 0.1 } else { 4.3 };
            if s.observe(epoch, score).stop {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(s.best_epoch(), 7);
        assert_eq!(stopped_at, Some(17));
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut adam = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 1.0), 4.0 * (p[1] + 0.5)];
            adam.step(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3);
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            hidden: vec![12, 12],
            quad_nodes: 11,
            lambda_grid: vec![0.0],
            max_epochs: 150,
            patience: 10,
            learning_rate: 5e-3,
            batch_size: BatchSize::Rows(128),
            linear_shift: true,
            seed: 11,
        }
    }

    fn bivariate(seed: u64, m: usize, rho: f64) -> Array2<f64> {
        let z = normal_matrix(seed, m, 2);
        let mut x = z.clone();
        for mut r in x.outer_iter_mut() {
            let (a, b) = (r[0], r[1]);
            r[1] = rho * a + (1.0 - rho * rho).sqrt() * b;
        }
        x
    }

    #[test]
    fn independent_target_ignores_other_variable() {
        let raw = normal_matrix(21, 3000, 2);
        let sizes = SplitSizes::Counts {
            train: 1500,
            validation: 500,
            estimation: 1000,
        };
        let data = split_standardize(raw.view(), names(2), sizes, 1).unwrap();
        let t = train_component(1, &data, &small_cfg(), 0.0).unwrap();
        let bundles = t.map.bundles(data.estimation.view(), false).unwrap();
        let mean_dj = bundles.iter().map(|b| b.dj[0]).sum::<f64>() / bundles.len() as f64;
        assert!(mean_dj.abs() < 0.05, "mean ∂_1 S = {mean_dj}");
    }

    #[test]
    fn correlated_gaussian_reaches_conditional_optimum() {
        let rho = 0.5;
        let raw = bivariate(22, 4000, rho);
        let sizes = SplitSizes::Counts {
            train: 2000,
            validation: 1000,
            estimation: 1000,
        };
        let data = split_standardize(raw.view(), names(2), sizes, 2).unwrap();
        let t = train_component(1, &data, &small_cfg(), 0.0).unwrap();
        // analytic conditional map evaluated on the same (standardized) rows
        let r = crate::linalg::covariance(data.standardizer.apply(raw.view()).view())[[0, 1]];
        let a2 = 1.0 / (1.0 - r * r).sqrt();
        let exact = crate::quadmap::LinearMap::new(1, vec![-r * a2, a2], 0.0).unwrap();
        let learned = objective::nll(&t.map, data.estimation.view()).unwrap();
        let optimum = objective::nll(&exact, data.estimation.view()).unwrap();
        assert!((learned - optimum).abs() < 0.02, "learned {learned} vs analytic {optimum}");
    }

    #[test]
    fn training_is_reproducible() {
        let raw = bivariate(23, 600, 0.3);
        let sizes = SplitSizes::Counts {
            train: 300,
            validation: 150,
            estimation: 150,
        };
        let data = split_standardize(raw.view(), names(2), sizes, 3).unwrap();
        let mut cfg = small_cfg();
        cfg.max_epochs = 5;
        let a = train_component(0, &data, &cfg, 0.01).unwrap();
        let b = train_component(0, &data, &cfg, 0.01).unwrap();
        assert_eq!(a.map.flat_params(), b.map.flat_params());
        // the kept parameters are never worse than the best recorded epoch
        let best_recorded = a.history.iter().map(|h| h.val_nll).fold(f64::INFINITY, f64::min);
        assert!(a.best_val_nll <= best_recorded);
        let kept = objective::nll(&a.map, data.validation.view()).unwrap();
        assert!((kept - a.best_val_nll).abs() < 1e-12);
    }

    #[test]
    fn singleton_grid_returns_its_fit() {
        let raw = bivariate(24, 400, 0.3);
        let sizes = SplitSizes::Counts {
            train: 200,
            validation: 100,
            estimation: 100,
        };
        let data = split_standardize(raw.view(), names(2), sizes, 4).unwrap();
        let mut cfg = small_cfg();
        cfg.max_epochs = 3;
        let sel = select_lambda(0, &data, &cfg).unwrap();
        assert_eq!(sel.lambda, 0.0);
        let direct = train_component(0, &data, &cfg, 0.0).unwrap();
        assert_eq!(sel.trained.map.flat_params(), direct.map.flat_params());
    }

    #[test]
    fn independent_target_prefers_sparser_fit() {
        let raw = normal_matrix(25, 2000, 3);
        let sizes = SplitSizes::Counts {
            train: 1000,
            validation: 500,
            estimation: 500,
        };
        let data = split_standardize(raw.view(), names(3), sizes, 5).unwrap();
        let mut cfg = small_cfg();
        cfg.lambda_grid = vec![0.1, 0.01, 0.0];
        cfg.max_epochs = 60;
        let sel = select_lambda(2, &data, &cfg).unwrap();
        let unreg = train_component(2, &data, &cfg, 0.0).unwrap();
        let p_sel = objective::penalty(&sel.trained.map, data.estimation.view()).unwrap();
        let p_unreg = objective::penalty(&unreg.map, data.estimation.view()).unwrap();
        assert!(p_sel <= p_unreg + 1e-12, "selected λ={} penalty {p_sel} vs {p_unreg}", sel.lambda);
        assert_eq!(sel.scores.len(), 3);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = TrainConfig {
            lambda_grid: vec![],
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
