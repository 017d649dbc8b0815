//! Comparison estimators: Lasso neighborhood selection, graphical lasso, and
//! the nonparanormal transform, plus checks relating them to the transport
//! objective.
//!
//! Scaling conventions used throughout:
//! - Lasso: `‖x_k − X_{−k} θ‖² + λ ‖θ‖₁` (no `1/M`, no `½`).
//! - Linear transport map: `½ aᵀ C a − log a_k + λ ‖a‖₁` with `C = XᵀX / M`.
//!   Its minimizer satisfies `θ = −a_{−k} / a_k` for the lasso with penalty
//!   `2Mλ / a_k`.
//! - Graphical lasso: `tr(SΘ) − log det Θ + λ Σ_{ij} |Θ_ij|`, diagonal
//!   included unless [`GlassoOptions::penalize_diagonal`] is off.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_index, check_width, Error, Result};
use crate::linalg::{column_means, covariance, inverse_sqrt, min_eigenvalue, symmetrize};

pub const LASSO_TOL: f64 = 1e-8;
pub const LASSO_MAX_SWEEPS: usize = 10_000;
pub const DEFAULT_GLASSO_LAMBDA: f64 = 0.1;

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Lasso regression of column `k` on the remaining columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub k: usize,
    /// Coefficients for the other columns in increasing index order.
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub sweeps: usize,
}

impl LassoFit {
    /// Coefficients laid out over all `d` columns, zero at `k`.
    pub fn full_coefficients(&self) -> Vec<f64> {
        let mut out = self.theta.clone();
        out.insert(self.k, 0.0);
        out
    }

    /// Column indices with nonzero coefficients.
    pub fn neighborhood(&self) -> Vec<usize> {
        self.full_coefficients()
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Cyclic coordinate descent for `‖y − Zθ‖² + λ‖θ‖₁`.
fn lasso_cd(z: ArrayView2<f64>, y: ArrayView2<f64>, lambda: f64) -> Result<(Vec<f64>, usize)> {
    let p = z.ncols();
    let norms: Vec<f64> = z.axis_iter(Axis(1)).map(|c| c.dot(&c)).collect();
    let mut theta = vec![0.0; p];
    let mut resid: Array1<f64> = y.column(0).to_owned();
    for sweep in 1..=LASSO_MAX_SWEEPS {
        let mut max_change = 0.0_f64;
        for j in 0..p {
            if norms[j] == 0.0 {
                continue;
            }
            let col = z.column(j);
            let rho = col.dot(&resid) + norms[j] * theta[j];
            let new = soft(rho, lambda / 2.0) / norms[j];
            let delta = new - theta[j];
            if delta != 0.0 {
                resid.scaled_add(-delta, &col);
                theta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < LASSO_TOL {
            return Ok((theta, sweep));
        }
    }
    Err(Error::NonConvergence {
        what: "lasso coordinate descent",
        iterations: LASSO_MAX_SWEEPS,
    })
}

/// Regress column `k` of `x` on the others with an L1 penalty.
pub fn lasso_neighborhood(k: usize, x: ArrayView2<f64>, lambda: f64) -> Result<LassoFit> {
    let d = x.ncols();
    check_index(k, d)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    let others: Vec<usize> = (0..d).filter(|&j| j != k).collect();
    let z = x.select(Axis(1), &others);
    let y = x.select(Axis(1), &[k]);
    let (theta, sweeps) = lasso_cd(z.view(), y.view(), lambda)?;
    Ok(LassoFit {
        k,
        theta,
        lambda,
        sweeps,
    })
}

/// Minimizer of the transport objective over affine-free linear maps
/// `S(x) = aᵀx` for target `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMapFit {
    pub k: usize,
    pub coeffs: Vec<f64>,
    pub lambda: f64,
    pub sweeps: usize,
}

/// Exact coordinate descent on `½ aᵀCa − log a_k + λ‖a‖₁`, `C = XᵀX / M`.
pub fn fit_linear_map(k: usize, x: ArrayView2<f64>, lambda: f64) -> Result<LinearMapFit> {
    let d = x.ncols();
    check_index(k, d)?;
    if x.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let c = x.t().dot(&x) / x.nrows() as f64;
    if c[[k, k]] <= 0.0 {
        return Err(Error::ConstantColumn { column: k });
    }
    let mut a = vec![0.0; d];
    a[k] = 1.0 / c[[k, k]].sqrt();
    for sweep in 1..=LASSO_MAX_SWEEPS {
        let mut max_change = 0.0_f64;
        for j in 0..d {
            let r: f64 = (0..d).filter(|&l| l != j).map(|l| c[[j, l]] * a[l]).sum();
            let cjj = c[[j, j]];
            let new = if j == k {
                let b = r + lambda;
                (-b + (b * b + 4.0 * cjj).sqrt()) / (2.0 * cjj)
            } else if cjj > 0.0 {
                -soft(r, lambda) / cjj
            } else {
                0.0
            };
            max_change = max_change.max((new - a[j]).abs());
            a[j] = new;
        }
        if max_change < LASSO_TOL {
            return Ok(LinearMapFit {
                k,
                coeffs: a,
                lambda,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "linear map coordinate descent",
        iterations: LASSO_MAX_SWEEPS,
    })
}

/// Side-by-side comparison of the linear transport fit and the lasso at the
/// matching penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    pub map: LinearMapFit,
    /// `−a_{−k} / a_k`, the regression coefficients implied by the map.
    pub implied_theta: Vec<f64>,
    /// Lasso penalty `2Mλ / a_k` that should reproduce `implied_theta`.
    pub lasso_lambda: f64,
    pub lasso: LassoFit,
    pub max_coefficient_gap: f64,
    pub same_support: bool,
    pub same_signs: bool,
}

pub fn linear_reduction_check(k: usize, x: ArrayView2<f64>, lambda: f64) -> Result<ReductionReport> {
    let map = fit_linear_map(k, x, lambda)?;
    let ak = map.coeffs[k];
    let implied_theta: Vec<f64> = map
        .coeffs
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, a)| -a / ak)
        .collect();
    let lasso_lambda = 2.0 * x.nrows() as f64 * lambda / ak.abs();
    let lasso = lasso_neighborhood(k, x, lasso_lambda)?;
    let max_coefficient_gap = implied_theta
        .iter()
        .zip(&lasso.theta)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let same_support = implied_theta
        .iter()
        .zip(&lasso.theta)
        .all(|(a, b)| (*a == 0.0) == (*b == 0.0));
    let same_signs = implied_theta
        .iter()
        .zip(&lasso.theta)
        .all(|(a, b)| a.signum() * b.signum() >= 0.0);
    Ok(ReductionReport {
        map,
        implied_theta,
        lasso_lambda,
        lasso,
        max_coefficient_gap,
        same_support,
        same_signs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlassoOptions {
    pub penalize_diagonal: bool,
    /// Stop when the largest change in the covariance estimate over one
    /// sweep falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for GlassoOptions {
    fn default() -> Self {
        Self {
            penalize_diagonal: true,
            tol: 1e-6,
            max_sweeps: 1000,
        }
    }
}

/// Sparse precision estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    pub theta_hat: Array2<f64>,
    /// Matching covariance estimate `Θ̂⁻¹`.
    pub covariance: Array2<f64>,
    pub lambda: f64,
    pub sweeps: usize,
}

/// Inner lasso `min ½βᵀVβ − uᵀβ + λ‖β‖₁`, warm-started at `beta`.
fn quadratic_lasso(v: &Array2<f64>, u: &Array1<f64>, lambda: f64, beta: &mut Array1<f64>) -> Result<()> {
    let p = u.len();
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_change = 0.0_f64;
        for j in 0..p {
            let r = u[j] - v.row(j).dot(beta) + v[[j, j]] * beta[j];
            let new = soft(r, lambda) / v[[j, j]];
            max_change = max_change.max((new - beta[j]).abs());
            beta[j] = new;
        }
        if max_change < 1e-12 {
            return Ok(());
        }
    }
    Err(Error::NonConvergence {
        what: "graphical lasso inner solve",
        iterations: LASSO_MAX_SWEEPS,
    })
}

/// Block coordinate descent on the covariance estimate, one row/column
/// lasso at a time.
pub fn graphical_lasso(s: ArrayView2<f64>, lambda: f64, opts: GlassoOptions) -> Result<PrecisionEstimate> {
    let d = s.nrows();
    check_width("covariance columns", d, s.ncols())?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    if s.diag().iter().any(|v| !(*v > 0.0)) {
        return Err(Error::NotPositiveDefinite("covariance has a nonpositive diagonal".into()));
    }
    let mut w = s.to_owned();
    if opts.penalize_diagonal {
        for i in 0..d {
            w[[i, i]] += lambda;
        }
    }
    let mut betas: Vec<Array1<f64>> = vec![Array1::zeros(d.saturating_sub(1)); d];
    let mut sweeps = 0;
    let mut converged = d == 1;
    while !converged {
        sweeps += 1;
        if sweeps > opts.max_sweeps {
            return Err(Error::NonConvergence {
                what: "graphical lasso",
                iterations: opts.max_sweeps,
            });
        }
        let mut max_change = 0.0_f64;
        for j in 0..d {
            let others: Vec<usize> = (0..d).filter(|&i| i != j).collect();
            let w11 = w.select(Axis(0), &others).select(Axis(1), &others);
            let s12 = Array1::from_iter(others.iter().map(|&i| s[[i, j]]));
            quadratic_lasso(&w11, &s12, lambda, &mut betas[j])?;
            let w12 = w11.dot(&betas[j]);
            for (pos, &i) in others.iter().enumerate() {
                max_change = max_change.max((w[[i, j]] - w12[pos]).abs());
                w[[i, j]] = w12[pos];
                w[[j, i]] = w12[pos];
            }
        }
        converged = max_change < opts.tol;
    }
    let mut theta = Array2::zeros((d, d));
    for j in 0..d {
        let others: Vec<usize> = (0..d).filter(|&i| i != j).collect();
        let w12 = Array1::from_iter(others.iter().map(|&i| w[[i, j]]));
        let tjj = 1.0 / (w[[j, j]] - w12.dot(&betas[j]));
        theta[[j, j]] = tjj;
        for (pos, &i) in others.iter().enumerate() {
            theta[[i, j]] = -betas[j][pos] * tjj;
        }
    }
    symmetrize(&mut theta);
    let min_eig = min_eigenvalue(theta.view())?;
    if !(min_eig > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "graphical lasso estimate has eigenvalue {min_eig}"
        )));
    }
    Ok(PrecisionEstimate {
        theta_hat: theta,
        covariance: w,
        lambda,
        sweeps,
    })
}

/// Truncation level for the empirical CDF with `m` rows.
pub fn npn_truncation(m: usize) -> f64 {
    let m = m as f64;
    1.0 / (4.0 * m.powf(0.25) * (std::f64::consts::PI * m.ln()).sqrt())
}

/// Average ranks (1-based) with ties sharing the mean rank.
pub(crate) fn average_ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[idx[j + 1]] == v[idx[i]] {
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

/// Map each column through its truncated empirical CDF and the standard
/// normal quantile, then center and scale to unit variance.
pub fn nonparanormal_transform(x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let m = x.nrows();
    if m < 10 {
        return Err(Error::InsufficientRows {
            needed: 10,
            available: m,
        });
    }
    let delta = npn_truncation(m);
    let normal = Normal::standard();
    let mut out = Array2::zeros(x.raw_dim());
    for (c, col) in x.axis_iter(Axis(1)).enumerate() {
        let values = col.to_vec();
        if values.iter().all(|v| *v == values[0]) {
            return Err(Error::ConstantColumn { column: c });
        }
        let ranks = average_ranks(&values);
        let mut z: Array1<f64> = ranks
            .iter()
            .map(|r| normal.inverse_cdf((r / m as f64).clamp(delta, 1.0 - delta)))
            .collect();
        let mean = z.mean().unwrap_or(0.0);
        z -= mean;
        let sd = z.std(0.0);
        z /= sd;
        out.column_mut(c).assign(&z);
    }
    Ok(out)
}

/// Moments of `Σ^{−1/2} f(x)` over the rows of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PushforwardReport {
    pub mean_norm: f64,
    /// `max_ij |cov_ij − δ_ij|`
    pub cov_max_dev: f64,
    pub covariance: Array2<f64>,
}

impl PushforwardReport {
    pub fn is_standard_normal(&self, mean_tol: f64, cov_tol: f64) -> bool {
        self.mean_norm < mean_tol && self.cov_max_dev < cov_tol
    }
}

/// Apply the marginal transforms `f(j, x_j)`, whiten with `Σ^{−1/2}`, and
/// report the first two moments.
pub fn nonparanormal_pushforward_check(
    x: ArrayView2<f64>,
    f: impl Fn(usize, f64) -> f64,
    sigma: ArrayView2<f64>,
) -> Result<PushforwardReport> {
    let d = x.ncols();
    check_width("covariance", d, sigma.nrows())?;
    if x.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let root = inverse_sqrt(sigma)?;
    let fx = Array2::from_shape_fn(x.raw_dim(), |(i, j)| f(j, x[[i, j]]));
    let s = fx.dot(&root.t());
    let mean_norm = column_means(s.view()).iter().map(|v| v * v).sum::<f64>().sqrt();
    let cov = covariance(s.view());
    let cov_max_dev = cov
        .indexed_iter()
        .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    Ok(PushforwardReport {
        mean_norm,
        cov_max_dev,
        covariance: cov,
    })
}
