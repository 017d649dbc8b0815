//! Synthetic data with known conditional independence graphs.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, min_eigenvalue, spd_inverse};
use crate::precision::{reference_from_precision, EdgeSet, GeneralizedPrecision};

pub const DEFAULT_ZERO_PROB: f64 = 0.95;
pub const DEFAULT_VALUE_RANGE: (f64, f64) = (0.3, 0.8);
pub const MIN_PRECISION_EIGENVALUE: f64 = 0.1;
const MAX_RETRIES: usize = 100;
/// Off-diagonal precision entries at or below this magnitude count as zero.
const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Gaussian { theta: Array2<f64>, sigma: Array2<f64> },
    /// `r` independent pairs `(X, W·X)`.
    Butterfly { pairs: usize },
}

/// Generator parameters and the graph they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub generator: Generator,
    pub true_edges: EdgeSet,
    pub seed: u64,
    pub names: Vec<String>,
}

impl GroundTruth {
    pub fn dim(&self) -> usize {
        self.true_edges.dim()
    }

    pub fn sigma(&self) -> Option<&Array2<f64>> {
        match &self.generator {
            Generator::Gaussian { sigma, .. } => Some(sigma),
            Generator::Butterfly { .. } => None,
        }
    }

    /// Normalized `|Θ|` of the standardized variables, the target an
    /// estimate on standardized data is compared with. Gaussian only.
    pub fn reference_omega(&self) -> Option<GeneralizedPrecision> {
        match &self.generator {
            Generator::Gaussian { theta, sigma } => {
                let sd = sigma.diag().mapv(f64::sqrt);
                let scaled = Array2::from_shape_fn(theta.raw_dim(), |(i, j)| theta[[i, j]] * sd[i] * sd[j]);
                reference_from_precision(scaled.view()).ok()
            }
            Generator::Butterfly { .. } => None,
        }
    }
}

/// Sparse precision matrix `Θ = CᵀC`, where `C` is `−I` plus a randomly
/// permuted strictly lower-triangular matrix whose entries are zero with
/// probability `zero_prob` and otherwise uniform on `value_range`. The
/// diagonal is raised if needed so the smallest eigenvalue is at least
/// [`MIN_PRECISION_EIGENVALUE`].
pub fn sparse_spd_precision<R: Rng>(d: usize, zero_prob: f64, value_range: (f64, f64), rng: &mut R) -> Result<Array2<f64>> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("dimension must be at least 2, got {d}")));
    }
    if !(0.0..=1.0).contains(&zero_prob) {
        return Err(Error::InvalidArgument(format!("zero probability must lie in [0, 1], got {zero_prob}")));
    }
    let (lo, hi) = value_range;
    if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid value range [{lo}, {hi}]")));
    }
    for _ in 0..MAX_RETRIES {
        let mut lower = Array2::<f64>::zeros((d, d));
        for i in 0..d {
            for j in 0..i {
                if rng.random::<f64>() >= zero_prob {
                    lower[[i, j]] = rng.random_range(lo..=hi);
                }
            }
        }
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(rng);
        let mut c = Array2::from_shape_fn((d, d), |(i, j)| lower[[perm[i], perm[j]]]);
        for i in 0..d {
            c[[i, i]] = -1.0;
        }
        let mut theta = c.t().dot(&c);
        crate::linalg::symmetrize(&mut theta);
        let min = min_eigenvalue(theta.view())?;
        if min < MIN_PRECISION_EIGENVALUE {
            for i in 0..d {
                theta[[i, i]] += MIN_PRECISION_EIGENVALUE - min;
            }
        }
        if cholesky(theta.view()).is_ok() {
            return Ok(theta);
        }
    }
    Err(Error::NotPositiveDefinite(format!(
        "no positive definite precision after {MAX_RETRIES} attempts"
    )))
}

/// Edges on the off-diagonal support of a precision matrix.
pub fn precision_support(theta: ArrayView2<f64>) -> EdgeSet {
    let d = theta.nrows();
    let mut e = EdgeSet::new(d);
    for i in 0..d {
        for j in (i + 1)..d {
            if theta[[i, j]].abs() > SUPPORT_TOL {
                e.insert(i, j).expect("indices in range");
            }
        }
    }
    e
}

/// `m` rows from `N(0, Σ)`.
pub fn draw_gaussian<R: Rng>(sigma: ArrayView2<f64>, m: usize, rng: &mut R) -> Result<Array2<f64>> {
    let l = cholesky(sigma)?;
    let z = Array2::from_shape_simple_fn((m, sigma.nrows()), || rng.sample::<f64, _>(StandardNormal));
    Ok(z.dot(&l.t()))
}

/// Raw (unstandardized) Gaussian samples with a sparse random precision.
pub fn sparse_spd_gaussian(
    d: usize,
    m: usize,
    zero_prob: f64,
    value_range: (f64, f64),
    seed: u64,
) -> Result<(Array2<f64>, GroundTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = sparse_spd_precision(d, zero_prob, value_range, &mut rng)?;
    let sigma = spd_inverse(theta.view())?;
    let x = draw_gaussian(sigma.view(), m, &mut rng)?;
    let truth = GroundTruth {
        true_edges: precision_support(theta.view()),
        generator: Generator::Gaussian { theta, sigma },
        seed,
        names: (1..=d).map(|i| format!("X{i}")).collect(),
    };
    Ok((x, truth))
}

/// `r` independent pairs `X ~ N(0,1)`, `Y = W·X` with `W ~ N(0,1)`, columns
/// ordered `X1, Y1, X2, Y2, …`.
pub fn butterfly_sample(r: usize, m: usize, seed: u64) -> Result<(Array2<f64>, GroundTruth)> {
    if r == 0 {
        return Err(Error::InvalidArgument("butterfly needs at least one pair".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((m, 2 * r));
    for i in 0..m {
        for p in 0..r {
            let a: f64 = rng.sample(StandardNormal);
            let w: f64 = rng.sample(StandardNormal);
            x[[i, 2 * p]] = a;
            x[[i, 2 * p + 1]] = w * a;
        }
    }
    let true_edges = EdgeSet::from_pairs(2 * r, (0..r).map(|p| (2 * p, 2 * p + 1)))?;
    let names = (1..=r).flat_map(|p| [format!("X{p}"), format!("Y{p}")]).collect();
    Ok((
        x,
        GroundTruth {
            generator: Generator::Butterfly { pairs: r },
            true_edges,
            seed,
            names,
        },
    ))
}
