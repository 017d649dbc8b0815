//! Clenshaw–Curtis quadrature and monotone map components.
//!
//! A map component for target coordinate `k` is
//!
//! ```text
//! S(x) = beta + ∫_0^{x_k} f(x_1, .., t, .., x_d) dt
//! ```
//!
//! with `f > 0`, so `S` is strictly increasing in `x_k` and `∂_k S = f(x)`.
//! The integral is evaluated by mapping a fixed rule on `[-1, 1]` onto
//! `[0, x_k]`; a negative upper limit flips the interval through the affine
//! map itself.
//!
//! Any positive function implementing [`Integrand`] can stand in for the
//! network, and [`ConditionalMap`] abstracts over the map itself so closed-form
//! maps (see [`LinearMap`]) go through the same likelihood and precision code.

use std::f64::consts::PI;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::diffnet::{PositiveMlp, SecondOrderBatch};
use crate::error::{check_index, check_width, Error, Result};

/// Default number of quadrature nodes.
pub const DEFAULT_QUAD_NODES: usize = 21;

/// Samples processed per batched network call.
pub(crate) const CHUNK_ROWS: usize = 256;

/// Nodes and weights on `[-1, 1]`, nodes ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫_a^b g(t) dt` using the affine image of the rule.
    pub fn integrate(&self, a: f64, b: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(u, w)| w * g(mid + half * u))
            .sum::<f64>()
            * half
    }
}

/// Clenshaw–Curtis rule with `n` points `cos(πi/(n-1))`.
pub fn cc_rule(n: usize) -> Result<QuadratureRule> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "Clenshaw-Curtis rule needs at least 2 nodes, got {n}"
        )));
    }
    let intervals = n - 1;
    let nf = intervals as f64;
    let theta: Vec<f64> = (0..n).map(|i| PI * i as f64 / nf).collect();
    let mut weights = vec![0.0; n];
    let end_weight = if intervals.is_multiple_of(2) {
        1.0 / (nf * nf - 1.0)
    } else {
        1.0 / (nf * nf)
    };
    weights[0] = end_weight;
    weights[intervals] = end_weight;
    for i in 1..intervals {
        let mut v = 1.0;
        let half = intervals / 2;
        if intervals.is_multiple_of(2) {
            for j in 1..half {
                let jf = j as f64;
                v -= 2.0 * (2.0 * jf * theta[i]).cos() / (4.0 * jf * jf - 1.0);
            }
            v -= (nf * theta[i]).cos() / (nf * nf - 1.0);
        } else {
            for j in 1..=half {
                let jf = j as f64;
                v -= 2.0 * (2.0 * jf * theta[i]).cos() / (4.0 * jf * jf - 1.0);
            }
        }
        weights[i] = 2.0 * v / nf;
    }
    // cos(θ) decreases in i; store ascending and force exact symmetry.
    let mut nodes: Vec<f64> = theta.iter().rev().map(|t| t.cos()).collect();
    weights.reverse();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let m = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -m;
        nodes[j] = m;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Pointwise second-order information of an integrand.
#[derive(Debug, Clone, PartialEq)]
pub struct PointJet {
    pub value: f64,
    /// `∂_j f` for every input slot.
    pub grad: Vec<f64>,
    /// `∂_j ∂_dir f` for every input slot.
    pub dir_grad: Vec<f64>,
}

/// A strictly positive function of `d` inputs used under the integral sign.
pub trait Integrand: Send + Sync {
    fn input_dim(&self) -> usize;
    fn values(&self, rows: ArrayView2<f64>) -> Array1<f64>;
    fn values_grads(&self, rows: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>);
    fn second_order(&self, rows: ArrayView2<f64>, dir: usize) -> SecondOrderBatch;
}

impl Integrand for PositiveMlp {
    fn input_dim(&self) -> usize {
        PositiveMlp::input_dim(self)
    }

    fn values(&self, rows: ArrayView2<f64>) -> Array1<f64> {
        self.forward_batch(rows).expect("width checked by caller")
    }

    fn values_grads(&self, rows: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
        self.value_grad_batch(rows).expect("width checked by caller")
    }

    fn second_order(&self, rows: ArrayView2<f64>, dir: usize) -> SecondOrderBatch {
        self.second_order_batch(rows, dir).expect("width checked by caller")
    }
}

/// Adapter turning a pointwise closure `(x, dir) -> PointJet` into an
/// [`Integrand`]. Used to inject closed-form integrands.
pub struct Pointwise<F> {
    dim: usize,
    jet: F,
}

impl<F> Pointwise<F>
where
    F: Fn(&[f64], usize) -> PointJet + Send + Sync,
{
    pub fn new(dim: usize, jet: F) -> Self {
        Self { dim, jet }
    }
}

impl<F> Integrand for Pointwise<F>
where
    F: Fn(&[f64], usize) -> PointJet + Send + Sync,
{
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn values(&self, rows: ArrayView2<f64>) -> Array1<f64> {
        rows.outer_iter()
            .map(|r| (self.jet)(r.as_slice().expect("standard layout"), 0).value)
            .collect()
    }

    fn values_grads(&self, rows: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
        let mut vals = Array1::zeros(rows.nrows());
        let mut grads = Array2::zeros(rows.raw_dim());
        for (i, r) in rows.outer_iter().enumerate() {
            let pj = (self.jet)(r.as_slice().expect("standard layout"), 0);
            vals[i] = pj.value;
            grads.row_mut(i).assign(&Array1::from(pj.grad));
        }
        (vals, grads)
    }

    fn second_order(&self, rows: ArrayView2<f64>, dir: usize) -> SecondOrderBatch {
        let n = rows.nrows();
        let mut out = SecondOrderBatch {
            value: Array1::zeros(n),
            dir_deriv: Array1::zeros(n),
            grad: Array2::zeros(rows.raw_dim()),
            dir_grad: Array2::zeros(rows.raw_dim()),
        };
        for (i, r) in rows.outer_iter().enumerate() {
            let pj = (self.jet)(r.as_slice().expect("standard layout"), dir);
            out.value[i] = pj.value;
            out.dir_deriv[i] = pj.grad[dir];
            out.grad.row_mut(i).assign(&Array1::from(pj.grad));
            out.dir_grad.row_mut(i).assign(&Array1::from(pj.dir_grad));
        }
        out
    }
}

/// Second-order derivative entries of a map component at one point.
/// Slot `k` of each vector is unused and left at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderTerms {
    /// `∂_k² S`
    pub dkk: f64,
    /// `∂_j ∂_k S`
    pub djk: Vec<f64>,
    /// `∂_j ∂_k² S`
    pub djkk: Vec<f64>,
}

/// `S`, its gradient, and optionally the second-order terms at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub value: f64,
    /// `∂_k S > 0`
    pub dk: f64,
    /// `∂_j S`; slot `k` is unused and left at zero (see `dk`).
    pub dj: Vec<f64>,
    pub second: Option<SecondOrderTerms>,
}

/// A scalar map `S: R^d -> R`, increasing in its target coordinate, that
/// models the conditional of `x_k` given the rest.
pub trait ConditionalMap: Sync {
    fn dim(&self) -> usize;

    /// Target coordinate `k` (0-based).
    fn target(&self) -> usize;

    /// `S` and `∂_k S` for every row.
    fn value_and_slope(&self, x: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)>;

    /// Derivative bundles for every row.
    fn bundles(&self, x: ArrayView2<f64>, need_second: bool) -> Result<Vec<DerivativeBundle>>;

    fn eval(&self, x: &[f64]) -> Result<f64> {
        let row = ArrayView2::from_shape((1, x.len()), x).expect("contiguous");
        Ok(self.value_and_slope(row)?.0[0])
    }

    fn bundle(&self, x: &[f64], need_second: bool) -> Result<DerivativeBundle> {
        let row = ArrayView2::from_shape((1, x.len()), x).expect("contiguous");
        Ok(self.bundles(row, need_second)?.pop().expect("one row"))
    }
}

/// Monotone map component built as an integral of a positive integrand:
/// `S(x) = β + γᵀx_{−k} + ∫_0^{x_k} f(t, x_{−k}) dt`.
///
/// The linear term `γ` is optional; without it the offset is the scalar `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapComponent<I = PositiveMlp> {
    k: usize,
    integrand: I,
    beta: f64,
    /// Length `d`, slot `k` held at zero.
    shift: Option<Vec<f64>>,
    rule: QuadratureRule,
}

/// Rows at which a map component evaluates its integrand for a chunk of
/// samples: `rule.len()` quadrature rows per sample followed by one row at
/// `t = x_k`, plus the per-row quadrature scale `x_k w_q / 2`.
pub(crate) struct QuadLayout {
    pub rows: Array2<f64>,
    pub ends: Array2<f64>,
    pub scales: Array2<f64>,
}

impl<I: Integrand> MapComponent<I> {
    pub fn new(k: usize, integrand: I, beta: f64, rule: QuadratureRule) -> Result<Self> {
        check_index(k, integrand.input_dim())?;
        if !beta.is_finite() {
            return Err(Error::InvalidArgument("beta must be finite".into()));
        }
        Ok(Self {
            k,
            integrand,
            beta,
            shift: None,
            rule,
        })
    }

    /// Enable the linear offset in the conditioning variables, starting at zero.
    pub fn with_linear_shift(mut self) -> Self {
        self.shift = Some(vec![0.0; self.dim()]);
        self
    }

    /// Coefficients of the linear offset (slot `k` is zero), if enabled.
    pub fn shift(&self) -> Option<&[f64]> {
        self.shift.as_deref()
    }

    pub fn set_shift(&mut self, shift: Option<Vec<f64>>) -> Result<()> {
        if let Some(g) = &shift {
            check_width("shift coefficients", self.dim(), g.len())?;
            if g[self.k] != 0.0 || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(
                    "shift must be finite and zero on the target coordinate".into(),
                ));
            }
        }
        self.shift = shift;
        Ok(())
    }

    /// `β + γᵀx` for one sample.
    pub(crate) fn offset(&self, x: ArrayView1<f64>) -> f64 {
        match &self.shift {
            Some(g) => self.beta + g.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>(),
            None => self.beta,
        }
    }

    pub fn target(&self) -> usize {
        self.k
    }

    pub fn integrand(&self) -> &I {
        &self.integrand
    }

    pub fn integrand_mut(&mut self) -> &mut I {
        &mut self.integrand
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.beta = beta;
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn dim(&self) -> usize {
        self.integrand.input_dim()
    }

    pub(crate) fn layout(&self, x: ArrayView2<f64>) -> QuadLayout {
        let (n, d) = x.dim();
        let q = self.rule.len();
        let k = self.k;
        let mut rows = Array2::zeros((n * q, d));
        let mut scales = Array2::zeros((n, q));
        for (i, xi) in x.outer_iter().enumerate() {
            let xk = xi[k];
            for (j, (u, w)) in self.rule.nodes.iter().zip(&self.rule.weights).enumerate() {
                let mut r = rows.row_mut(i * q + j);
                r.assign(&xi);
                r[k] = 0.5 * xk * (u + 1.0);
                scales[[i, j]] = 0.5 * xk * w;
            }
        }
        QuadLayout {
            rows,
            ends: x.to_owned(),
            scales,
        }
    }

    /// `S(x)` at one point.
    pub fn eval_map(&self, x: &[f64]) -> Result<f64> {
        ConditionalMap::eval(self, x)
    }

    /// Derivative bundle at one point.
    pub fn eval_bundle(&self, x: &[f64], need_second: bool) -> Result<DerivativeBundle> {
        ConditionalMap::bundle(self, x, need_second)
    }

    fn value_and_slope_chunk(&self, x: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
        let lay = self.layout(x);
        let q = self.rule.len();
        let vals = self.integrand.values(lay.rows.view());
        let slopes = self.integrand.values(lay.ends.view());
        let n = x.nrows();
        let mut s: Array1<f64> = x.outer_iter().map(|r| self.offset(r)).collect();
        for i in 0..n {
            let quad = vals.slice(s![i * q..(i + 1) * q]);
            s[i] += quad.iter().zip(lay.scales.row(i)).map(|(f, c)| f * c).sum::<f64>();
        }
        (s, slopes)
    }

    fn bundles_chunk(&self, x: ArrayView2<f64>, need_second: bool) -> Vec<DerivativeBundle> {
        let lay = self.layout(x);
        let (n, d) = x.dim();
        let q = self.rule.len();
        let k = self.k;
        let (vals, grads) = self.integrand.values_grads(lay.rows.view());
        let (ends, second) = if need_second {
            let so = self.integrand.second_order(lay.ends.view(), k);
            (so.value.clone(), Some(so))
        } else {
            (self.integrand.values(lay.ends.view()), None)
        };
        (0..n)
            .map(|i| {
                let scales = lay.scales.row(i);
                let mut value = self.offset(x.row(i));
                let mut dj = self.shift.clone().unwrap_or_else(|| vec![0.0; d]);
                for (jq, c) in scales.iter().enumerate() {
                    let r = i * q + jq;
                    value += c * vals[r];
                    for (j, g) in grads.row(r).iter().enumerate() {
                        dj[j] += c * g;
                    }
                }
                dj[k] = 0.0;
                let second = second.as_ref().map(|so| {
                    let mut djk = so.grad.row(i).to_vec();
                    let mut djkk = so.dir_grad.row(i).to_vec();
                    djk[k] = 0.0;
                    djkk[k] = 0.0;
                    SecondOrderTerms {
                        dkk: so.dir_deriv[i],
                        djk,
                        djkk,
                    }
                });
                DerivativeBundle {
                    value,
                    dk: ends[i],
                    dj,
                    second,
                }
            })
            .collect()
    }
}

impl MapComponent<PositiveMlp> {
    /// Network parameters, then `beta`, then the shift coefficients for
    /// every `j != k` in increasing order (when enabled).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.integrand.flat_params();
        p.push(self.beta);
        if let Some(g) = &self.shift {
            p.extend(g.iter().enumerate().filter(|(j, _)| *j != self.k).map(|(_, v)| *v));
        }
        p
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.integrand.num_params();
        check_width("map component parameters", self.num_params(), flat.len())?;
        self.integrand.set_flat_params(&flat[..n])?;
        self.beta = flat[n];
        let k = self.k;
        if let Some(g) = &mut self.shift {
            let mut rest = flat[n + 1..].iter();
            for (j, v) in g.iter_mut().enumerate() {
                if j != k {
                    *v = *rest.next().expect("width checked");
                }
            }
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        let shift = if self.shift.is_some() { self.dim() - 1 } else { 0 };
        self.integrand.num_params() + 1 + shift
    }
}

impl<I: Integrand> ConditionalMap for MapComponent<I> {
    fn dim(&self) -> usize {
        self.integrand.input_dim()
    }

    fn target(&self) -> usize {
        self.k
    }

    fn value_and_slope(&self, x: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        check_width("sample", self.dim(), x.ncols())?;
        let n = x.nrows();
        let mut s = Array1::zeros(n);
        let mut dk = Array1::zeros(n);
        for start in (0..n).step_by(CHUNK_ROWS) {
            let end = (start + CHUNK_ROWS).min(n);
            let (a, b) = self.value_and_slope_chunk(x.slice(s![start..end, ..]));
            s.slice_mut(s![start..end]).assign(&a);
            dk.slice_mut(s![start..end]).assign(&b);
        }
        Ok((s, dk))
    }

    fn bundles(&self, x: ArrayView2<f64>, need_second: bool) -> Result<Vec<DerivativeBundle>> {
        check_width("sample", self.dim(), x.ncols())?;
        let n = x.nrows();
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(CHUNK_ROWS) {
            let end = (start + CHUNK_ROWS).min(n);
            out.extend(self.bundles_chunk(x.slice(s![start..end, ..]), need_second));
        }
        Ok(out)
    }
}

/// Affine map `S(x) = offset + Σ_l a_l x_l` with `a_k > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    k: usize,
    coeffs: Vec<f64>,
    offset: f64,
}

impl LinearMap {
    pub fn new(k: usize, coeffs: Vec<f64>, offset: f64) -> Result<Self> {
        check_index(k, coeffs.len())?;
        if !(coeffs[k] > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "coefficient on the target coordinate must be positive, got {}",
                coeffs[k]
            )));
        }
        Ok(Self { k, coeffs, offset })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }
}

impl ConditionalMap for LinearMap {
    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn target(&self) -> usize {
        self.k
    }

    fn value_and_slope(&self, x: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        check_width("sample", self.dim(), x.ncols())?;
        let a = Array1::from(self.coeffs.clone());
        let s = x.dot(&a) + self.offset;
        Ok((s, Array1::from_elem(x.nrows(), self.coeffs[self.k])))
    }

    fn bundles(&self, x: ArrayView2<f64>, need_second: bool) -> Result<Vec<DerivativeBundle>> {
        let (s, _) = self.value_and_slope(x)?;
        let d = self.dim();
        let mut dj = self.coeffs.clone();
        dj[self.k] = 0.0;
        Ok(s.iter()
            .map(|&value| DerivativeBundle {
                value,
                dk: self.coeffs[self.k],
                dj: dj.clone(),
                second: need_second.then(|| SecondOrderTerms {
                    dkk: 0.0,
                    djk: vec![0.0; d],
                    djkk: vec![0.0; d],
                }),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::PositiveMlp;
    use crate::test_support::smooth_component;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::E;

    fn constant_integrand(d: usize, c: f64) -> Pointwise<impl Fn(&[f64], usize) -> PointJet + Send + Sync> {
        Pointwise::new(d, move |_x: &[f64], _dir| PointJet {
            value: c,
            grad: vec![0.0; d],
            dir_grad: vec![0.0; d],
        })
    }

    #[test]
    fn twenty_one_node_rule() {
        let r = cc_rule(21).unwrap();
        assert_eq!(r.len(), 21);
        let total: f64 = r.weights().iter().sum();
        assert!((total - 2.0).abs() < 1e-12);
        assert!(r.weights().iter().all(|&w| w > 0.0));
        assert!(r.nodes().windows(2).all(|p| p[0] < p[1]));
        for i in 0..21 {
            assert_eq!(r.nodes()[i], -r.nodes()[20 - i]);
        }
        assert_eq!(r.nodes()[0], -1.0);
        assert_eq!(r.nodes()[20], 1.0);
    }

    #[test]
    fn rule_integrates_square_and_exponential() {
        let r = cc_rule(21).unwrap();
        assert!((r.integrate(-1.0, 1.0, |t| t * t) - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.integrate(-1.0, 1.0, f64::exp) - (E - 1.0 / E)).abs() < 1e-10);
    }

    #[test]
    fn too_few_nodes() {
        assert!(cc_rule(1).is_err());
        assert!(cc_rule(0).is_err());
        let r = cc_rule(2).unwrap();
        assert_eq!(r.weights(), &[1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn polynomial_exactness(n in 2usize..40, coeffs in proptest::collection::vec(-2.0f64..2.0, 1..40)) {
            let r = cc_rule(n).unwrap();
            let deg = (n - 1).min(coeffs.len() - 1);
            let poly = |t: f64| (0..=deg).map(|p| coeffs[p] * t.powi(p as i32)).sum::<f64>();
            let exact: f64 = (0..=deg)
                .filter(|p| p % 2 == 0)
                .map(|p| coeffs[p] * 2.0 / (p as f64 + 1.0))
                .sum();
            prop_assert!((r.integrate(-1.0, 1.0, poly) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_integrand_is_linear_in_target() {
        let rule = cc_rule(21).unwrap();
        let mc = MapComponent::new(1, constant_integrand(3, 2.5), 0.0, rule.clone()).unwrap();
        for x in [[0.3, 1.2, -4.0], [9.0, -0.7, 2.0]] {
            assert!((mc.eval_map(&x).unwrap() - 2.5 * x[1]).abs() < 1e-12);
        }
        let unit = MapComponent::new(0, constant_integrand(2, 1.0), 0.0, rule).unwrap();
        assert!((unit.eval_map(&[-1.5, 3.0]).unwrap() + 1.5).abs() < 1e-12);
    }

    #[test]
    fn exponential_integrand_through_seam() {
        let f = Pointwise::new(2, |x: &[f64], _dir| {
            let e = x[1].exp();
            PointJet {
                value: e,
                grad: vec![0.0, e],
                dir_grad: vec![0.0, e],
            }
        });
        let mc = MapComponent::new(1, f, 0.0, cc_rule(21).unwrap()).unwrap();
        assert!((mc.eval_map(&[0.4, 1.0]).unwrap() - (E - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn constant_integrand_bundle() {
        let mc = MapComponent::new(0, constant_integrand(3, 0.8), 0.1, cc_rule(21).unwrap()).unwrap();
        let b = mc.eval_bundle(&[0.5, -1.0, 2.0], true).unwrap();
        assert!((b.dk - 0.8).abs() < 1e-15);
        assert!((b.value - (0.1 + 0.4)).abs() < 1e-12);
        assert!(b.dj.iter().all(|&v| v.abs() < 1e-15));
        let so = b.second.unwrap();
        assert_eq!(so.dkk, 0.0);
        assert!(so.djk.iter().chain(&so.djkk).all(|&v| v == 0.0));
    }

    #[test]
    fn separable_integrand_bundle() {
        // f = g(t) h(x_j) with g = exp, h = 2 + sin; target k = 2, j = 0
        let f = Pointwise::new(3, |x: &[f64], dir| {
            let g = x[2].exp();
            let h = 2.0 + x[0].sin();
            let hp = x[0].cos();
            let grad = vec![g * hp, 0.0, g * h];
            // derivative of grad along dir
            let dir_grad = match dir {
                2 => vec![g * hp, 0.0, g * h],
                0 => vec![-g * x[0].sin(), 0.0, g * hp],
                _ => vec![0.0; 3],
            };
            PointJet { value: g * h, grad, dir_grad }
        });
        let mc = MapComponent::new(2, f, 0.0, cc_rule(21).unwrap()).unwrap();
        let x = [0.7, 5.0, -0.8];
        let b = mc.eval_bundle(&x, true).unwrap();
        let g_int = x[2].exp() - 1.0;
        let hp = x[0].cos();
        assert!((b.dj[0] - hp * g_int).abs() < 1e-10);
        assert_eq!(b.dj[1], 0.0);
        let so = b.second.unwrap();
        assert!((so.djk[0] - hp * x[2].exp()).abs() < 1e-12);
        assert!((so.djkk[0] - hp * x[2].exp()).abs() < 1e-12);
        assert!((so.dkk - x[2].exp() * (2.0 + x[0].sin())).abs() < 1e-12);
    }

    fn random_component(seed: u64, d: usize, k: usize) -> MapComponent {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = PositiveMlp::glorot(d, &[8, 8], &mut rng).unwrap();
        let beta = rng.random_range(-0.5..0.5);
        MapComponent::new(k, net, beta, cc_rule(21).unwrap()).unwrap()
    }

    #[test]
    fn slope_matches_numerical_derivative_on_smooth_components() {
        let h = 1e-5;
        for seed in 0..20u64 {
            let d = 3;
            let k = (seed % 3) as usize;
            let mc = smooth_component(seed, d, k, 21);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 40);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (mc.eval_map(&xp).unwrap() - mc.eval_map(&xm).unwrap()) / (2.0 * h);
            let dk = mc.eval_bundle(&x, false).unwrap().dk;
            assert!(rel_close(dk, fd, 1e-5, 0.0), "seed {seed}: {dk} vs {fd}");
        }
    }

    fn rel_close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
    }

    #[test]
    fn bundle_matches_finite_differences() {
        let h = 1e-5;
        for seed in 0..6 {
            let d = 4;
            let k = (seed as usize) % d;
            let mc = random_component(seed, d, k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
            let b = mc.eval_bundle(&x, true).unwrap();
            let so = b.second.clone().unwrap();
            let shifted = |j: usize, s: f64| {
                let mut y = x.clone();
                y[j] += s;
                y
            };
            // value
            assert!(rel_close(b.value, mc.eval_map(&x).unwrap(), 1e-14, 1e-14));
            // dk from eval_map
            let fd_k = (mc.eval_map(&shifted(k, h)).unwrap() - mc.eval_map(&shifted(k, -h)).unwrap()) / (2.0 * h);
            assert!(rel_close(b.dk, fd_k, 1e-4, 1e-8), "dk {} vs {fd_k}", b.dk);
            // dkk from dk
            let dk_p = mc.eval_bundle(&shifted(k, h), false).unwrap().dk;
            let dk_m = mc.eval_bundle(&shifted(k, -h), false).unwrap().dk;
            assert!(rel_close(so.dkk, (dk_p - dk_m) / (2.0 * h), 1e-4, 1e-7));
            for j in (0..d).filter(|&j| j != k) {
                let fd_j = (mc.eval_map(&shifted(j, h)).unwrap() - mc.eval_map(&shifted(j, -h)).unwrap()) / (2.0 * h);
                assert!(rel_close(b.dj[j], fd_j, 1e-4, 1e-8), "dj {} vs {fd_j}", b.dj[j]);
                let bp = mc.eval_bundle(&shifted(j, h), true).unwrap();
                let bm = mc.eval_bundle(&shifted(j, -h), true).unwrap();
                let fd_jk = (bp.dk - bm.dk) / (2.0 * h);
                assert!(rel_close(so.djk[j], fd_jk, 1e-4, 1e-8));
                let fd_jkk = (bp.second.unwrap().dkk - bm.second.unwrap().dkk) / (2.0 * h);
                assert!(rel_close(so.djkk[j], fd_jkk, 1e-4, 1e-7), "djkk {} vs {fd_jkk}", so.djkk[j]);
            }
        }
    }

    #[test]
    fn batch_and_pointwise_agree() {
        let mc = random_component(4, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_simple_fn((300, 3), || rng.random_range(-2.0..2.0));
        let (s, dk) = mc.value_and_slope(x.view()).unwrap();
        let bundles = mc.bundles(x.view(), false).unwrap();
        for i in [0, 17, 255, 256, 299] {
            let xi = x.row(i).to_vec();
            assert!(rel_close(s[i], mc.eval_map(&xi).unwrap(), 1e-13, 1e-14));
            assert!(rel_close(dk[i], bundles[i].dk, 1e-13, 1e-14));
        }
    }

    #[test]
    fn monotone_in_target() {
        let grid: Vec<f64> = (0..100).map(|i| -3.0 + 6.0 * i as f64 / 99.0).collect();
        for seed in 0..1000u64 {
            let d = 3;
            let k = (seed % 3) as usize;
            let mc = {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let net = PositiveMlp::glorot(d, &[6], &mut rng).unwrap();
                MapComponent::new(k, net, 0.0, cc_rule(21).unwrap()).unwrap()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 77);
            let others: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut x = Array2::zeros((grid.len(), d));
            for (i, t) in grid.iter().enumerate() {
                for j in 0..d {
                    x[[i, j]] = if j == k { *t } else { others[j] };
                }
            }
            let (s, _) = mc.value_and_slope(x.view()).unwrap();
            assert!(s.windows(2).into_iter().all(|w| w[1] > w[0]), "seed {seed}");
        }
    }

    #[test]
    fn pullback_density_integrates_to_one() {
        // one-dimensional component: η(S(x)) ∂S(x) over a wide grid
        use statrs::distribution::ContinuousCDF;
        let mut covering = 0;
        for seed in 0..12u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = PositiveMlp::glorot(1, &[8, 8], &mut rng).unwrap();
            let mc = MapComponent::new(0, net, 0.2, cc_rule(21).unwrap()).unwrap();
            let n = 20_001;
            let (lo, hi) = (-40.0, 40.0);
            let step = (hi - lo) / (n - 1) as f64;
            let x = Array2::from_shape_fn((n, 1), |(i, _)| lo + step * i as f64);
            let (s, dk) = mc.value_and_slope(x.view()).unwrap();
            let dens: Vec<f64> = s
                .iter()
                .zip(dk.iter())
                .map(|(s, g)| (-0.5 * s * s).exp() / (2.0 * PI).sqrt() * g)
                .collect();
            let mass: f64 = dens.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
            // the pulled-back mass on [lo, hi] is Φ(S(hi)) − Φ(S(lo)), which is 1
            // when the component maps the grid onto the bulk of the normal
            let normal = statrs::distribution::Normal::standard();
            let expected = normal.cdf(s[n - 1]) - normal.cdf(s[0]);
            assert!((mass - expected).abs() < 1e-3, "seed {seed}: mass {mass} vs {expected}");
            if s[0] < -6.0 && s[n - 1] > 6.0 {
                assert!((mass - 1.0).abs() < 1e-3, "seed {seed}: mass {mass}");
                covering += 1;
            }
        }
        assert!(covering > 0);
    }

    #[test]
    fn quadrature_refinement_changes_little() {
        for seed in 0..10u64 {
            let a = smooth_component(seed + 500, 3, 0, 21);
            let b = smooth_component(seed + 500, 3, 0, 41);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let diff = (a.eval_map(&x).unwrap() - b.eval_map(&x).unwrap()).abs();
                assert!(diff < 1e-6, "seed {seed}: {diff}");
            }
        }
    }

    #[test]
    fn linear_map_bundle() {
        let m = LinearMap::new(1, vec![0.5, 2.0, -1.0], 0.3).unwrap();
        let b = m.bundle(&[1.0, 1.0, 1.0], true).unwrap();
        assert!((b.value - 1.8).abs() < 1e-15);
        assert_eq!(b.dk, 2.0);
        assert_eq!(b.dj, vec![0.5, 0.0, -1.0]);
        assert!(LinearMap::new(0, vec![-1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn wrong_width_rejected() {
        let mc = random_component(1, 3, 0);
        assert!(matches!(mc.eval_map(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(MapComponent::new(3, constant_integrand(3, 1.0), 0.0, cc_rule(5).unwrap()).is_err());
    }
}
