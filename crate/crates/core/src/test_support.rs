//! Shared fixtures for unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::quadmap::{cc_rule, Integrand, MapComponent, PointJet, Pointwise};

/// Random analytic integrand `0.05 + Σ_m c_m softplus(w_m·x + b_m)`.
pub(crate) fn smooth_component(seed: u64, d: usize, k: usize, nodes: usize) -> MapComponent<impl Integrand> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(f64, Vec<f64>, f64)> = (0..3)
        .map(|_| {
            let c = rng.random_range(0.2..1.0);
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            (c, w, rng.random_range(-0.5..0.5))
        })
        .collect();
    let f = Pointwise::new(d, move |x: &[f64], dir| {
        let mut jet = PointJet {
            value: 0.05,
            grad: vec![0.0; d],
            dir_grad: vec![0.0; d],
        };
        for (c, w, b) in &terms {
            let u = b + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
            let sig = 1.0 / (1.0 + (-u).exp());
            jet.value += c * (u.exp().ln_1p());
            for l in 0..d {
                jet.grad[l] += c * sig * w[l];
                jet.dir_grad[l] += c * sig * (1.0 - sig) * w[dir] * w[l];
            }
        }
        jet
    });
    MapComponent::new(k, f, 0.1, cc_rule(nodes).unwrap()).unwrap()
}
