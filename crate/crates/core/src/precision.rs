//! Generalized precision matrix and edge thresholding.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2};

use crate::error::{check_width, Error, Result};
use crate::quadmap::{ConditionalMap, DerivativeBundle};

/// Number of thresholds in a default sweep over `[0, 1]`.
pub const DEFAULT_SWEEP_POINTS: usize = 50;

/// Symmetric nonnegative score matrix; off-diagonal entries measure
/// conditional dependence.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedPrecision {
    pub omega: Array2<f64>,
    /// Off-diagonals were divided by their maximum.
    pub normalized: bool,
    /// Every off-diagonal entry was zero, so no normalization took place.
    pub degenerate: bool,
}

impl GeneralizedPrecision {
    pub fn dim(&self) -> usize {
        self.omega.nrows()
    }

    /// Largest off-diagonal entry.
    pub fn max_off_diagonal(&self) -> f64 {
        max_off_diagonal(self.omega.view())
    }
}

fn max_off_diagonal(a: ArrayView2<f64>) -> f64 {
    let mut m = 0.0_f64;
    for ((i, j), v) in a.indexed_iter() {
        if i != j {
            m = m.max(v.abs());
        }
    }
    m
}

/// Per-sample mixed partial `∂_j ∂_k` of `−½S² + log ∂_k S`.
pub fn mixed_partial(b: &DerivativeBundle, j: usize) -> f64 {
    let second = b.second.as_ref().expect("second-order terms requested");
    let (s, dk, dj) = (b.value, b.dk, b.dj[j]);
    let (djk, djkk, dkk) = (second.djk[j], second.djkk[j], second.dkk);
    -dj * dk - s * djk + (djkk * dk - dkk * djk) / (dk * dk)
}

/// Column `k` of the unsymmetrized score matrix: for each `j ≠ k` the mean
/// absolute mixed partial over `rows`; entry `k` is 1.
pub fn omega_row<M: ConditionalMap + ?Sized>(map: &M, rows: ArrayView2<f64>) -> Result<Vec<f64>> {
    if rows.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    check_width("estimation rows", map.dim(), rows.ncols())?;
    let d = map.dim();
    let k = map.target();
    let bundles = map.bundles(rows, true)?;
    let mut out = vec![0.0; d];
    for b in &bundles {
        for (j, o) in out.iter_mut().enumerate() {
            if j != k {
                *o += mixed_partial(b, j).abs();
            }
        }
    }
    let n = bundles.len() as f64;
    for o in &mut out {
        *o /= n;
    }
    out[k] = 1.0;
    Ok(out)
}

/// Place `rows[k]` as column `k`, symmetrize by averaging, and scale the
/// off-diagonals so their maximum is 1.
pub fn assemble(rows: &[Vec<f64>]) -> Result<GeneralizedPrecision> {
    let d = rows.len();
    for r in rows {
        check_width("score row", d, r.len())?;
    }
    let raw = Array2::from_shape_fn((d, d), |(j, k)| rows[k][j]);
    assemble_matrix(raw.view())
}

/// Symmetrize and normalize a square matrix of nonnegative scores.
pub fn assemble_matrix(raw: ArrayView2<f64>) -> Result<GeneralizedPrecision> {
    let d = raw.nrows();
    check_width("score matrix columns", d, raw.ncols())?;
    if let Some(v) = raw.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("score matrix has non-finite entry {v}")));
    }
    let mut omega = Array2::from_shape_fn((d, d), |(i, j)| 0.5 * (raw[[i, j]].abs() + raw[[j, i]].abs()));
    let max = max_off_diagonal(omega.view());
    let degenerate = !(max > 0.0);
    if !degenerate {
        omega.mapv_inplace(|v| v / max);
    }
    for i in 0..d {
        omega[[i, i]] = 1.0;
    }
    Ok(GeneralizedPrecision {
        omega,
        normalized: !degenerate,
        degenerate,
    })
}

/// Undirected simple graph on `d` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSet {
    d: usize,
    edges: BTreeSet<(usize, usize)>,
    tau: Option<f64>,
}

impl EdgeSet {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            edges: BTreeSet::new(),
            tau: None,
        }
    }

    pub fn from_pairs(d: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut s = Self::new(d);
        for (a, b) in pairs {
            s.insert(a, b)?;
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Threshold this set was cut at, if it came from [`threshold`].
    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    /// Insert `{a, b}`; returns whether it was new.
    pub fn insert(&mut self, a: usize, b: usize) -> Result<bool> {
        crate::error::check_index(a, self.d)?;
        crate::error::check_index(b, self.d)?;
        if a == b {
            return Err(Error::InvalidArgument(format!("self-loop on node {a}")));
        }
        Ok(self.edges.insert((a.min(b), a.max(b))))
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn neighbors(&self, k: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| j != k && self.contains(j, k)).collect()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.d];
        for (a, b) in self.iter() {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }
}

fn cut(omega: ArrayView2<f64>, tau: f64) -> BTreeSet<(usize, usize)> {
    let d = omega.nrows();
    let mut edges = BTreeSet::new();
    for i in 0..d {
        for j in (i + 1)..d {
            if omega[[i, j]].abs() > tau {
                edges.insert((i, j));
            }
        }
    }
    edges
}

/// Edges whose score strictly exceeds `tau`.
pub fn threshold(gp: &GeneralizedPrecision, tau: f64) -> Result<EdgeSet> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {tau}")));
    }
    Ok(EdgeSet {
        d: gp.dim(),
        edges: cut(gp.omega.view(), tau),
        tau: Some(tau),
    })
}

/// `(tau, edge count)` for `points` evenly spaced thresholds from 0 to 1.
pub fn tau_sweep(gp: &GeneralizedPrecision, points: usize) -> Vec<(f64, usize)> {
    let step = if points > 1 { 1.0 / (points - 1) as f64 } else { 0.0 };
    (0..points)
        .map(|i| {
            let tau = if i + 1 == points { 1.0 } else { i as f64 * step };
            (tau, cut(gp.omega.view(), tau).len())
        })
        .collect()
}

/// Ground-truth scores from a precision matrix: `|Θ|` normalized like an
/// estimate.
pub fn reference_from_precision(theta: ArrayView2<f64>) -> Result<GeneralizedPrecision> {
    assemble_matrix(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::PositiveMlp;
    use crate::quadmap::{cc_rule, LinearMap, MapComponent};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_rows(seed: u64, n: usize, chol: &Array2<f64>) -> Array2<f64> {
        let d = chol.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal));
        z.dot(&chol.t())
    }

    /// Exact conditional map of `x_k` for a zero-mean Gaussian with precision `theta`.
    fn exact_map(theta: &Array2<f64>, k: usize) -> LinearMap {
        let s = theta[[k, k]].sqrt();
        LinearMap::new(k, theta.row(k).iter().map(|v| v / s).collect(), 0.0).unwrap()
    }

    #[test]
    fn bivariate_gaussian_entry() {
        let rho: f64 = 0.5;
        let theta = array![[1.0, -rho], [-rho, 1.0]] / (1.0 - rho * rho);
        let chol = array![[1.0, 0.0], [rho, (1.0 - rho * rho).sqrt()]];
        let x = gaussian_rows(1, 10_000, &chol);
        let row = omega_row(&exact_map(&theta, 1), x.view()).unwrap();
        assert!((row[0] - 2.0 / 3.0).abs() < 0.02, "{}", row[0]);
        assert_eq!(row[1], 1.0);
    }

    #[test]
    fn independent_identity_map_has_zero_row() {
        let x = gaussian_rows(2, 100, &Array2::eye(3));
        let map = LinearMap::new(1, vec![0.0, 1.0, 0.0], 0.0).unwrap();
        assert_eq!(omega_row(&map, x.view()).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn empty_estimation_set() {
        let map = LinearMap::new(0, vec![1.0, 0.0], 0.0).unwrap();
        assert_eq!(omega_row(&map, Array2::zeros((0, 2)).view()), Err(Error::EmptyBatch));
    }

    fn scalar_objective<M: ConditionalMap>(mc: &M, x: &[f64]) -> f64 {
        let row = ArrayView2::from_shape((1, x.len()), x).unwrap();
        let (s, dk) = mc.value_and_slope(row).unwrap();
        -0.5 * s[0] * s[0] + dk[0].ln()
    }

    fn shifted(x: &[f64], j: usize, k: usize, dj: f64, dk: f64) -> Vec<f64> {
        let mut y = x.to_vec();
        y[j] += dj;
        y[k] += dk;
        y
    }

    #[test]
    fn mixed_partial_matches_finite_differences() {
        let (d, k, h) = (3, 1, 1e-4);
        for seed in 0..6u64 {
            let mut mc = crate::test_support::smooth_component(seed, d, k, 21).with_linear_shift();
            mc.set_shift(Some(vec![0.4, 0.0, -0.2])).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 300);
            let x: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let b = mc.bundle(&x, true).unwrap();
            for j in [0usize, 2] {
                let at = |a: f64, c: f64| scalar_objective(&mc, &shifted(&x, j, k, a, c));
                let fd = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
                let an = mixed_partial(&b, j);
                assert!(
                    (fd - an).abs() <= 1e-3 * fd.abs().max(an.abs()) + 1e-6,
                    "seed {seed} j {j}: fd {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn mixed_partial_of_network_component() {
        // ∂_j of the closed-form ∂_k(−½S² + log ∂_k S) by central differences
        let (d, k, h) = (3, 1, 1e-5);
        for seed in 0..6u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = PositiveMlp::glorot(d, &[8, 8], &mut rng).unwrap();
            let mc = MapComponent::new(k, net, 0.2, cc_rule(21).unwrap()).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let grad_k = |y: &[f64]| {
                let b = mc.bundle(y, true).unwrap();
                -b.value * b.dk + b.second.unwrap().dkk / b.dk
            };
            let b = mc.bundle(&x, true).unwrap();
            for j in [0usize, 2] {
                let fd = (grad_k(&shifted(&x, j, k, h, 0.0)) - grad_k(&shifted(&x, j, k, -h, 0.0))) / (2.0 * h);
                let an = mixed_partial(&b, j);
                assert!(
                    (fd - an).abs() <= 1e-3 * fd.abs().max(an.abs()) + 1e-6,
                    "seed {seed} j {j}: fd {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn symmetrizes_by_averaging() {
        // column 0 carries Ω̂_{·0}; Ω̂_12 = 0.4 lives in column 1, Ω̂_21 = 0.2 in column 0
        let rows = vec![vec![1.0, 0.2, 0.0], vec![0.4, 1.0, 0.6], vec![0.0, 0.6, 1.0]];
        let raw = Array2::from_shape_fn((3, 3), |(j, k)| rows[k][j]);
        assert_eq!(raw[[0, 1]], 0.4);
        let gp = assemble(&rows).unwrap();
        // before normalization the averaged entry is 0.3; max off-diagonal is 0.6
        assert!((gp.omega[[0, 1]] - 0.3 / 0.6).abs() < 1e-15);
        assert_eq!(gp.omega[[1, 2]], 1.0);
        assert!(gp.normalized && !gp.degenerate);
    }

    #[test]
    fn diagonal_only_is_degenerate() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let gp = assemble(&rows).unwrap();
        assert_eq!(gp.omega, Array2::eye(2));
        assert!(gp.degenerate && !gp.normalized);
    }

    #[test]
    fn threshold_is_strict() {
        let omega = array![[1.0, 0.5, 0.1], [0.5, 1.0, 0.2], [0.1, 0.2, 1.0]];
        let gp = GeneralizedPrecision {
            omega,
            normalized: true,
            degenerate: false,
        };
        let e = threshold(&gp, 0.2).unwrap();
        assert_eq!(e.iter().collect::<Vec<_>>(), vec![(0, 1)]);
        assert_eq!(e.tau(), Some(0.2));
        assert!(threshold(&gp, 1.0).unwrap().is_empty());
        assert!(threshold(&gp, 0.0).is_err());
    }

    #[test]
    fn three_variable_support_recovered() {
        let theta = array![[2.0, -0.8, 0.0], [-0.8, 2.0, 0.6], [0.0, 0.6, 1.5]];
        let sigma = crate::linalg::spd_inverse(theta.view()).unwrap();
        let chol = crate::linalg::cholesky(sigma.view()).unwrap();
        let x = gaussian_rows(3, 10_000, &chol);
        let rows: Vec<Vec<f64>> = (0..3).map(|k| omega_row(&exact_map(&theta, k), x.view()).unwrap()).collect();
        let gp = assemble(&rows).unwrap();
        let est = threshold(&gp, 0.05).unwrap();
        let truth = threshold(&reference_from_precision(theta.view()).unwrap(), 0.05).unwrap();
        assert_eq!(est, EdgeSet { tau: est.tau, ..truth });
        assert!((gp.omega[[1, 2]] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn edge_set_rejects_self_loops() {
        let mut e = EdgeSet::new(3);
        assert!(e.insert(1, 1).is_err());
        assert!(e.insert(0, 3).is_err());
        assert!(e.insert(2, 0).unwrap());
        assert!(!e.insert(0, 2).unwrap());
        assert!(e.contains(2, 0));
        assert_eq!(e.neighbors(0), vec![2]);
    }

    fn random_scores(d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(0.0..5.0f64, d), d)
    }

    proptest! {
        #[test]
        fn assembled_matrix_is_symmetric_and_bounded(rows in (2usize..7).prop_flat_map(random_scores)) {
            let gp = assemble(&rows).unwrap();
            let d = gp.dim();
            for i in 0..d {
                prop_assert_eq!(gp.omega[[i, i]], 1.0);
                for j in 0..d {
                    prop_assert_eq!(gp.omega[[i, j]], gp.omega[[j, i]]);
                    prop_assert!(gp.omega[[i, j]] >= 0.0 && gp.omega[[i, j]] <= 1.0);
                }
            }
            if !gp.degenerate {
                prop_assert_eq!(gp.max_off_diagonal(), 1.0);
            }
        }

        #[test]
        fn edge_count_non_increasing_in_tau(rows in (2usize..7).prop_flat_map(random_scores)) {
            let gp = assemble(&rows).unwrap();
            let sweep = tau_sweep(&gp, DEFAULT_SWEEP_POINTS);
            prop_assert_eq!(sweep.len(), 50);
            prop_assert_eq!(sweep[0].0, 0.0);
            prop_assert!((sweep[49].0 - 1.0).abs() < 1e-15);
            prop_assert_eq!(sweep[49].1, 0);
            for w in sweep.windows(2) {
                prop_assert!(w[1].1 <= w[0].1);
            }
        }
    }
}
