//! Markov structure learning for continuous, possibly non-Gaussian
//! distributions.
//!
//! Each variable gets a monotone map component whose pullback of a standard
//! normal models its conditional given all other variables. The mixed second
//! derivatives of the resulting conditional log-densities, averaged over held
//! out samples, form a generalized precision matrix whose sparsity pattern is
//! the estimated graph.

pub mod baselines;
pub mod diffnet;
pub mod error;
pub mod estimator;
pub mod graphmetrics;
pub mod linalg;
pub mod objective;
pub mod precision;
pub mod quadmap;
pub mod synthdata;
pub mod training;

#[cfg(test)]
mod test_support;

pub use error::{Error, Result};
pub use diffnet::{PositiveMlp, Tangent};
pub use graphmetrics::{CentralityTable, RecoveryReport};
pub use precision::{EdgeSet, GeneralizedPrecision};
pub use quadmap::{ConditionalMap, DerivativeBundle, LinearMap, MapComponent, QuadratureRule};
pub use training::{SplitDataset, TrainConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
