//! Regularized pullback likelihood of a map component.
//!
//! For a batch `x^1..x^M` and penalty weight `λ`:
//!
//! ```text
//! nll     = (1/M) Σ_i [ ½ S(x^i)² − log ∂_k S(x^i) ]
//! penalty = Σ_j sqrt( (1/M) Σ_i (∂_j S(x^i))² + δ² )
//! total   = nll + λ · penalty
//! ```
//!
//! The standard-normal normalizing constant is dropped from `nll`. The `δ`
//! smoothing keeps the group norm differentiable when a whole group vanishes;
//! it is used for both the reported value and its gradient.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::diffnet::{BatchPass, PositiveMlp};
use crate::error::{Error, Result};
use crate::quadmap::{ConditionalMap, MapComponent, CHUNK_ROWS};

/// Smoothing inside each group norm of the penalty.
pub const PENALTY_SMOOTHING: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub nll: f64,
    pub penalty: f64,
    pub lambda: f64,
    pub total: f64,
}

impl LossReport {
    fn new(nll: f64, penalty: f64, lambda: f64) -> Self {
        Self {
            nll,
            penalty,
            lambda,
            total: nll + lambda * penalty,
        }
    }
}

fn check_batch(batch: ArrayView2<f64>) -> Result<()> {
    if batch.nrows() == 0 {
        Err(Error::EmptyBatch)
    } else {
        Ok(())
    }
}

/// Mean pullback negative log-likelihood under a standard-normal reference.
pub fn nll<M: ConditionalMap + ?Sized>(map: &M, batch: ArrayView2<f64>) -> Result<f64> {
    check_batch(batch)?;
    let (s, dk) = map.value_and_slope(batch)?;
    let total: f64 = s.iter().zip(dk.iter()).map(|(s, g)| 0.5 * s * s - g.ln()).sum();
    Ok(total / batch.nrows() as f64)
}

/// Group-derivative penalty: root-mean-square of each partial derivative,
/// summed over all inputs including the target.
pub fn penalty<M: ConditionalMap + ?Sized>(map: &M, batch: ArrayView2<f64>) -> Result<f64> {
    check_batch(batch)?;
    let bundles = map.bundles(batch, false)?;
    let (k, d) = (map.target(), map.dim());
    let mut sq = vec![0.0; d];
    for b in &bundles {
        for (j, acc) in sq.iter_mut().enumerate() {
            let g = if j == k { b.dk } else { b.dj[j] };
            *acc += g * g;
        }
    }
    let m = batch.nrows() as f64;
    Ok(sq.iter().map(|s| group_norm(s / m)).sum())
}

#[inline]
fn group_norm(mean_sq: f64) -> f64 {
    (mean_sq + PENALTY_SMOOTHING * PENALTY_SMOOTHING).sqrt()
}

pub fn loss_report<M: ConditionalMap + ?Sized>(
    map: &M,
    batch: ArrayView2<f64>,
    lambda: f64,
) -> Result<LossReport> {
    check_lambda(lambda)?;
    let nll = nll(map, batch)?;
    let penalty = penalty(map, batch)?;
    Ok(LossReport::new(nll, penalty, lambda))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")))
    }
}

/// Quadrature rows and endpoint rows of one chunk stacked in a single matrix.
struct ChunkRows {
    rows: Array2<f64>,
    scales: Array2<f64>,
}

fn chunk_rows(mc: &MapComponent<PositiveMlp>, x: ArrayView2<f64>) -> ChunkRows {
    let lay = mc.layout(x);
    let rows = ndarray::concatenate(Axis(0), &[lay.rows.view(), lay.ends.view()]).expect("same width");
    ChunkRows {
        rows,
        scales: lay.scales,
    }
}

/// Loss and its exact gradient with respect to the flat parameters
/// (layout of [`MapComponent::flat_params`]).
pub fn loss_gradient(
    mc: &MapComponent<PositiveMlp>,
    batch: ArrayView2<f64>,
    lambda: f64,
) -> Result<(LossReport, Vec<f64>)> {
    let out = gradient_pass(mc, batch, lambda, true)?;
    let penalty = out.penalty.expect("requested");
    Ok((LossReport::new(out.nll, penalty, lambda), out.grad))
}

pub(crate) struct GradientPass {
    pub nll: f64,
    /// Only computed when regularized or explicitly requested.
    pub penalty: Option<f64>,
    pub grad: Vec<f64>,
}

impl GradientPass {
    pub fn total(&self, lambda: f64) -> f64 {
        match self.penalty {
            Some(p) if lambda > 0.0 => self.nll + lambda * p,
            _ => self.nll,
        }
    }
}

/// Shared implementation of [`loss_gradient`]; skips the input-gradient
/// sweep entirely when `lambda == 0` and the penalty value is not wanted.
pub(crate) fn gradient_pass(
    mc: &MapComponent<PositiveMlp>,
    batch: ArrayView2<f64>,
    lambda: f64,
    want_penalty: bool,
) -> Result<GradientPass> {
    check_batch(batch)?;
    check_lambda(lambda)?;
    crate::error::check_width("sample", mc.dim(), batch.ncols())?;
    let net = mc.integrand();
    let (m, d) = batch.dim();
    let k = mc.target();
    let q = mc.rule().len();
    let inv_m = 1.0 / m as f64;
    let regularized = lambda > 0.0;
    let need_partials = regularized || want_penalty;

    // Pass 1: S, ∂_k S and, when needed, every ∂_j S.
    let mut values = Array1::zeros(m);
    let mut slopes = Array1::zeros(m);
    let mut partials = Array2::<f64>::zeros((if need_partials { m } else { 0 }, d));
    let mut chunks = Vec::new();
    for start in (0..m).step_by(CHUNK_ROWS) {
        let end = (start + CHUNK_ROWS).min(m);
        let n = end - start;
        let cr = chunk_rows(mc, batch.slice(s![start..end, ..]));
        let pass = BatchPass::forward(net, cr.rows.view());
        let f = &pass.value;
        let input_grads = need_partials.then(|| {
            let ones = Array1::ones(f.len());
            pass.backward(net, ones.view(), None, false, true).inputs.expect("requested")
        });
        for i in 0..n {
            let sc = cr.scales.row(i);
            let mut sv = mc.offset(batch.row(start + i));
            for jq in 0..q {
                sv += sc[jq] * f[i * q + jq];
            }
            values[start + i] = sv;
            slopes[start + i] = f[n * q + i];
            if let Some(g) = &input_grads {
                let mut row = partials.row_mut(start + i);
                for jq in 0..q {
                    row.scaled_add(sc[jq], &g.row(i * q + jq));
                }
                if let Some(g) = mc.shift() {
                    row += &ndarray::aview1(g);
                }
                row[k] = f[n * q + i];
            }
        }
        chunks.push((start, n, cr, pass));
    }

    let nll = values
        .iter()
        .zip(slopes.iter())
        .map(|(s, g)| 0.5 * s * s - g.ln())
        .sum::<f64>()
        * inv_m;

    // Group norms; the sensitivity of the penalty to ∂_j S(x^i) is D_ij / (M · norm_j).
    let norms: Vec<f64> = if need_partials {
        partials
            .axis_iter(Axis(1))
            .map(|col| group_norm(col.iter().map(|v| v * v).sum::<f64>() * inv_m))
            .collect()
    } else {
        Vec::new()
    };
    let penalty = need_partials.then(|| norms.iter().sum::<f64>());

    // Pass 2: reverse sweep.
    let mut grad = vec![0.0; net.num_params()];
    for (start, n, cr, mut pass) in chunks {
        let rows_total = cr.rows.nrows();
        let mut up_value = Array1::zeros(rows_total);
        for i in 0..n {
            let sv = values[start + i];
            for jq in 0..q {
                up_value[i * q + jq] = inv_m * sv * cr.scales[[i, jq]];
            }
            let fe = slopes[start + i];
            up_value[n * q + i] = -inv_m / fe;
            if regularized {
                up_value[n * q + i] += lambda * inv_m * fe / norms[k];
            }
        }
        let back = if regularized {
            let mut dirs = Array2::zeros((rows_total, d));
            let mut up_tan = Array1::zeros(rows_total);
            for i in 0..n {
                let mut v = Array1::zeros(d);
                for j in (0..d).filter(|&j| j != k) {
                    v[j] = partials[[start + i, j]] * inv_m / norms[j];
                }
                for jq in 0..q {
                    dirs.row_mut(i * q + jq).assign(&v);
                    up_tan[i * q + jq] = lambda * cr.scales[[i, jq]];
                }
            }
            pass.push_tangent(net, dirs.view());
            pass.backward(net, up_value.view(), Some(up_tan.view()), true, false)
        } else {
            pass.backward(net, up_value.view(), None, true, false)
        };
        for (g, p) in grad.iter_mut().zip(back.params.expect("requested")) {
            *g += p;
        }
    }
    grad.push(values.sum() * inv_m);
    if mc.shift().is_some() {
        for j in (0..d).filter(|&j| j != k) {
            let mut g = values.dot(&batch.column(j)) * inv_m;
            if regularized {
                g += lambda * partials.column(j).sum() * inv_m / norms[j];
            }
            grad.push(g);
        }
    }
    Ok(GradientPass { nll, penalty, grad })
}
