//! Positive-output feedforward network used as the integrand of a monotone
//! map component, with the derivative machinery the estimator needs.
//!
//! Two evaluation paths exist. The pointwise path ([`PositiveMlp::eval`],
//! [`PositiveMlp::input_jet`]) works on a single input with plain scalar
//! loops and hyper-dual numbers. The batched path ([`BatchPass`]) pushes a
//! whole matrix of inputs through the layers with matrix products, optionally
//! carrying one tangent direction per row, and can be run backwards to get
//! parameter gradients and input gradients. Training and precision assembly
//! use the batched path; the pointwise path backs the public per-point API.
//!
//! Hidden layers use ELU. The output is `softplus(z) + floor`, so every
//! finite input maps to a strictly positive value.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{check_index, check_width, Error, Result};

/// Lower bound added to the softplus output.
pub const DEFAULT_FLOOR: f64 = 1e-6;

/// `softplus^{-1}(1)`: an output bias that makes a zero-weight network return ~1.
pub const UNIT_OUTPUT_BIAS: f64 = 0.541_324_854_612_918_1;

#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

#[inline]
fn elu_d1(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

#[inline]
fn elu_d2(z: f64) -> f64 {
    if z > 0.0 {
        0.0
    } else {
        z.exp()
    }
}

/// One affine layer. `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }
}

/// Value, first directional derivative and second mixed derivative of the
/// network output along one or two coordinate directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangent {
    pub primal: f64,
    pub first: f64,
    pub second: f64,
}

/// Feedforward network `R^d -> R_{>0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveMlp {
    layers: Vec<Dense>,
    floor: f64,
}

impl PositiveMlp {
    pub fn new(layers: Vec<Dense>, floor: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::InvalidArgument(format!("output floor must be positive, got {floor}")));
        }
        for (i, layer) in layers.iter().enumerate() {
            check_width("layer bias", layer.fan_out(), layer.bias.len())?;
            if layer.fan_in() == 0 || layer.fan_out() == 0 {
                return Err(Error::InvalidArgument(format!("layer {i} has a zero width")));
            }
            if i > 0 {
                check_width("layer input", layers[i - 1].fan_out(), layer.fan_in())?;
            }
        }
        check_width("network output", 1, layers[layers.len() - 1].fan_out())?;
        Ok(Self { layers, floor })
    }

    /// Glorot-uniform weights, zero hidden biases, and an output bias chosen so
    /// the untrained network returns roughly 1.
    pub fn glorot<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input_dim);
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            if fan_in == 0 || fan_out == 0 {
                return Err(Error::InvalidArgument("layer widths must be positive".into()));
            }
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-a, a).expect("finite bounds");
            let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(rng));
            layers.push(Dense {
                weight,
                bias: Array1::zeros(fan_out),
            });
        }
        layers.last_mut().expect("at least one layer").bias[0] = UNIT_OUTPUT_BIAS;
        Self::new(layers, DEFAULT_FLOOR)
    }

    /// All-zero weights with the given output bias: a constant network.
    pub fn constant(input_dim: usize, hidden: &[usize], output_bias: f64) -> Result<Self> {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut layers: Vec<Dense> = widths
            .windows(2)
            .map(|p| Dense {
                weight: Array2::zeros((p[1], p[0])),
                bias: Array1::zeros(p[1]),
            })
            .collect();
        layers.last_mut().expect("nonempty").bias[0] = output_bias;
        Self::new(layers, DEFAULT_FLOOR)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    /// Input width, hidden widths, then 1.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(Dense::fan_out));
        sizes
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer: weights row-major, then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend(layer.weight.iter().copied());
            out.extend(layer.bias.iter().copied());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        check_width("flat parameter vector", self.num_params(), flat.len())?;
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weight.iter_mut() {
                *w = flat[offset];
                offset += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = flat[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    fn check_input(&self, width: usize) -> Result<()> {
        check_width("network input", self.input_dim(), width)
    }

    /// Network output at one input.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x.len())?;
        let mut h: Vec<f64> = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = layer.bias.to_vec();
            for (o, row) in layer.weight.outer_iter().enumerate() {
                next[o] += row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>();
            }
            if l < last {
                next.iter_mut().for_each(|v| *v = elu(*v));
            }
            h = next;
        }
        Ok(softplus(h[0]) + self.floor)
    }

    /// Output, derivative along `dir1`, and mixed second derivative along
    /// (`dir1`, `dir2`); `dir2 = None` means the pure second derivative.
    pub fn input_jet(&self, x: &[f64], dir1: usize, dir2: Option<usize>) -> Result<Tangent> {
        self.check_input(x.len())?;
        check_index(dir1, x.len())?;
        let dir2 = dir2.unwrap_or(dir1);
        check_index(dir2, x.len())?;

        let mut h: Vec<HyperDual> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| HyperDual {
                v,
                a: if i == dir1 { 1.0 } else { 0.0 },
                b: if i == dir2 { 1.0 } else { 0.0 },
                ab: 0.0,
            })
            .collect();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next: Vec<HyperDual> = layer.bias.iter().map(|&b| HyperDual::constant(b)).collect();
            for (o, row) in layer.weight.outer_iter().enumerate() {
                for (w, hv) in row.iter().zip(&h) {
                    next[o].axpy(*w, hv);
                }
            }
            if l < last {
                next.iter_mut()
                    .for_each(|v| *v = v.lift(elu(v.v), elu_d1(v.v), elu_d2(v.v)));
            }
            h = next;
        }
        let z = h[0];
        let s = sigmoid(z.v);
        let out = z.lift(softplus(z.v) + self.floor, s, s * (1.0 - s));
        Ok(Tangent {
            primal: out.v,
            first: out.a,
            second: out.ab,
        })
    }

    /// Gradient of `upstream * f(x)` with respect to the flat parameters.
    pub fn param_gradient(&self, x: &[f64], upstream: f64) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let rows = ArrayView2::from_shape((1, x.len()), x).expect("contiguous row");
        let pass = BatchPass::forward(self, rows);
        let up = Array1::from_elem(1, upstream);
        Ok(pass.backward(self, up.view(), None, true, false).params.expect("requested"))
    }

    /// Gradient with respect to the flat parameters of
    /// `up_value * f(x) + up_tangent * (∇_x f(x) · direction)`.
    ///
    /// With `direction = e_j` this differentiates `∂_j f` with respect to the
    /// parameters (forward-over-reverse).
    pub fn jet_param_gradient(
        &self,
        x: &[f64],
        direction: &[f64],
        up_value: f64,
        up_tangent: f64,
    ) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        check_width("tangent direction", x.len(), direction.len())?;
        let rows = ArrayView2::from_shape((1, x.len()), x).expect("contiguous row");
        let dirs = ArrayView2::from_shape((1, x.len()), direction).expect("contiguous row");
        let mut pass = BatchPass::forward(self, rows);
        pass.push_tangent(self, dirs);
        let upv = Array1::from_elem(1, up_value);
        let upt = Array1::from_elem(1, up_tangent);
        Ok(pass
            .backward(self, upv.view(), Some(upt.view()), true, false)
            .params
            .expect("requested"))
    }

    /// Output for every row of `rows`.
    pub fn forward_batch(&self, rows: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_input(rows.ncols())?;
        Ok(BatchPass::forward(self, rows).value)
    }

    /// Output and input gradient for every row.
    pub fn value_grad_batch(&self, rows: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        self.check_input(rows.ncols())?;
        let pass = BatchPass::forward(self, rows);
        let ones = Array1::ones(rows.nrows());
        let grads = pass
            .backward(self, ones.view(), None, false, true)
            .inputs
            .expect("requested");
        Ok((pass.value, grads))
    }

    /// Output, derivative along `dir`, input gradient, and input gradient of
    /// the `dir` derivative for every row.
    pub fn second_order_batch(&self, rows: ArrayView2<f64>, dir: usize) -> Result<SecondOrderBatch> {
        self.check_input(rows.ncols())?;
        check_index(dir, rows.ncols())?;
        let n = rows.nrows();
        let mut pass = BatchPass::forward(self, rows);
        let mut dirs = Array2::zeros((n, rows.ncols()));
        dirs.column_mut(dir).fill(1.0);
        pass.push_tangent(self, dirs.view());
        let ones = Array1::ones(n);
        let zeros = Array1::zeros(n);
        let grad = pass
            .backward(self, ones.view(), None, false, true)
            .inputs
            .expect("requested");
        let dir_grad = pass
            .backward(self, zeros.view(), Some(ones.view()), false, true)
            .inputs
            .expect("requested");
        Ok(SecondOrderBatch {
            value: pass.value,
            dir_deriv: pass.tangent.expect("tangent pushed"),
            grad,
            dir_grad,
        })
    }
}

/// Batched second-order quantities; see [`PositiveMlp::second_order_batch`].
#[derive(Debug, Clone)]
pub struct SecondOrderBatch {
    pub value: Array1<f64>,
    pub dir_deriv: Array1<f64>,
    pub grad: Array2<f64>,
    pub dir_grad: Array2<f64>,
}

/// Hyper-dual number `v + a ε1 + b ε2 + ab ε1ε2`.
#[derive(Debug, Clone, Copy)]
struct HyperDual {
    v: f64,
    a: f64,
    b: f64,
    ab: f64,
}

impl HyperDual {
    fn constant(v: f64) -> Self {
        Self { v, a: 0.0, b: 0.0, ab: 0.0 }
    }

    fn axpy(&mut self, w: f64, x: &HyperDual) {
        self.v += w * x.v;
        self.a += w * x.a;
        self.b += w * x.b;
        self.ab += w * x.ab;
    }

    /// Apply a scalar function given its value and first two derivatives at `self.v`.
    fn lift(self, g: f64, g1: f64, g2: f64) -> Self {
        Self {
            v: g,
            a: g1 * self.a,
            b: g1 * self.b,
            ab: g1 * self.ab + g2 * self.a * self.b,
        }
    }
}

/// Cached forward pass over a batch of inputs, optionally carrying one
/// tangent direction per row.
pub(crate) struct BatchPass {
    /// `acts[l]` is the input to layer `l`; `acts[0]` is the batch itself.
    acts: Vec<Array2<f64>>,
    /// Pre-activations of every layer; the last one is `n × 1`.
    pre: Vec<Array2<f64>>,
    /// Activation slope at each pre-activation (ELU' for hidden, sigmoid for output).
    slope: Vec<Array2<f64>>,
    tan_acts: Option<Vec<Array2<f64>>>,
    tan_pre: Option<Vec<Array2<f64>>>,
    pub value: Array1<f64>,
    pub tangent: Option<Array1<f64>>,
}

pub(crate) struct Backward {
    pub params: Option<Vec<f64>>,
    pub inputs: Option<Array2<f64>>,
}

impl BatchPass {
    pub fn forward(net: &PositiveMlp, rows: ArrayView2<f64>) -> Self {
        let depth = net.layers.len();
        let mut acts = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth);
        let mut slope = Vec::with_capacity(depth);
        acts.push(rows.to_owned());
        for (l, layer) in net.layers.iter().enumerate() {
            let mut z = acts[l].dot(&layer.weight.t());
            z += &layer.bias;
            if l + 1 < depth {
                let mut a = Array2::zeros(z.raw_dim());
                let mut s = Array2::zeros(z.raw_dim());
                Zip::from(&mut a).and(&mut s).and(&z).for_each(|a, s, &z| {
                    if z > 0.0 {
                        *a = z;
                        *s = 1.0;
                    } else {
                        let e = z.exp();
                        *a = e - 1.0;
                        *s = e;
                    }
                });
                acts.push(a);
                slope.push(s);
            } else {
                slope.push(z.mapv(sigmoid));
            }
            pre.push(z);
        }
        let floor = net.floor;
        let value = pre[depth - 1].column(0).mapv(|z| softplus(z) + floor);
        Self {
            acts,
            pre,
            slope,
            tan_acts: None,
            tan_pre: None,
            value,
            tangent: None,
        }
    }

    /// Push a tangent (one direction per row) through the cached primal pass.
    pub fn push_tangent(&mut self, net: &PositiveMlp, dirs: ArrayView2<f64>) {
        let depth = net.layers.len();
        let mut tan_acts = Vec::with_capacity(depth);
        let mut tan_pre = Vec::with_capacity(depth);
        tan_acts.push(dirs.to_owned());
        for (l, layer) in net.layers.iter().enumerate() {
            let zt = tan_acts[l].dot(&layer.weight.t());
            if l + 1 < depth {
                tan_acts.push(&zt * &self.slope[l]);
            }
            tan_pre.push(zt);
        }
        self.tangent = Some(&tan_pre[depth - 1].column(0) * &self.slope[depth - 1].column(0));
        self.tan_acts = Some(tan_acts);
        self.tan_pre = Some(tan_pre);
    }

    /// Reverse sweep seeded with `up_value` on the outputs and, when a tangent
    /// was pushed, `up_tangent` on the tangent outputs.
    pub fn backward(
        &self,
        net: &PositiveMlp,
        up_value: ArrayView1<f64>,
        up_tangent: Option<ArrayView1<f64>>,
        want_params: bool,
        want_inputs: bool,
    ) -> Backward {
        let depth = net.layers.len();
        let n = self.acts[0].nrows();
        let with_tan = up_tangent.is_some() && self.tan_pre.is_some();

        let s_out = self.slope[depth - 1].column(0);
        let mut zbar = Array2::zeros((n, 1));
        let mut zdbar: Option<Array2<f64>> = None;
        {
            let mut col = zbar.column_mut(0);
            Zip::from(&mut col).and(&up_value).and(&s_out).for_each(|zb, &u, &s| *zb = u * s);
        }
        if with_tan {
            let upt = up_tangent.expect("checked");
            let zt = self.tan_pre.as_ref().expect("checked")[depth - 1].column(0).to_owned();
            let mut d = Array2::zeros((n, 1));
            let mut zcol = zbar.column_mut(0);
            Zip::from(&mut zcol)
                .and(d.column_mut(0))
                .and(&upt)
                .and(&s_out)
                .and(&zt)
                .for_each(|zb, db, &u, &s, &zt| {
                    *zb += u * s * (1.0 - s) * zt;
                    *db = u * s;
                });
            zdbar = Some(d);
        }

        let mut grads: Vec<Option<(Array2<f64>, Array1<f64>)>> = vec![None; depth];
        let mut inputs = None;
        for l in (0..depth).rev() {
            let layer = &net.layers[l];
            if want_params {
                let mut gw = zbar.t().dot(&self.acts[l]);
                if let (Some(zd), Some(ta)) = (&zdbar, &self.tan_acts) {
                    gw += &zd.t().dot(&ta[l]);
                }
                let gb = zbar.sum_axis(Axis(0));
                grads[l] = Some((gw, gb));
            }
            if l == 0 {
                if want_inputs {
                    inputs = Some(zbar.dot(&layer.weight));
                }
                break;
            }
            let abar = zbar.dot(&layer.weight);
            let slope = &self.slope[l - 1];
            match &zdbar {
                Some(zd) => {
                    let adbar = zd.dot(&layer.weight);
                    let z = &self.pre[l - 1];
                    let zt = &self.tan_pre.as_ref().expect("tangent present")[l - 1];
                    let mut next = Array2::zeros(abar.raw_dim());
                    let mut next_d = Array2::zeros(abar.raw_dim());
                    Zip::from(&mut next)
                        .and(&mut next_d)
                        .and(&abar)
                        .and(&adbar)
                        .and(slope)
                        .for_each(|nz, nd, &ab, &adb, &s| {
                            *nz = ab * s;
                            *nd = adb * s;
                        });
                    // ELU'' is ELU' on the negative side and zero elsewhere.
                    Zip::from(&mut next)
                        .and(&adbar)
                        .and(slope)
                        .and(z)
                        .and(zt)
                        .for_each(|nz, &adb, &s, &z, &zt| {
                            if z <= 0.0 {
                                *nz += adb * s * zt;
                            }
                        });
                    zbar = next;
                    zdbar = Some(next_d);
                }
                None => {
                    zbar = abar * slope;
                }
            }
        }

        let params = want_params.then(|| {
            let mut flat = Vec::with_capacity(net.num_params());
            for g in grads.into_iter() {
                let (gw, gb) = g.expect("every layer visited");
                flat.extend(gw.iter().copied());
                flat.extend(gb.iter().copied());
            }
            flat
        });
        Backward { params, inputs }
    }
}
