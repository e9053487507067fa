//! Sequential nonnegative matrix underapproximation with sparsity and
//! spatial-coherence priors, NMF baselines, and a synthetic hyperspectral
//! benchmark.
//!
//! Data matrices are pixels × bands. Pixels of an `H × W` image are indexed
//! column-major.

pub mod error;
pub mod experiments;
pub mod grid;
pub mod hals;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod nmu;
pub mod rng;
pub mod synthetic;

pub use error::{PnmuError, Result};
pub use grid::{GridShape, IrwlsWeights, NeighborMatrix};
pub use hals::{hals_nmf, refit_fixed_support, sparse_nmf, HalsConfig, HalsOutcome};
pub use linalg::{DenseMatrix, DenseVector, FactorPair};
pub use metrics::MetricsReport;
pub use nmu::{factorize, Factorization, PnmuConfig, Variant};
pub use synthetic::{SyntheticInstance, SyntheticSpec};
