//! Bayesian origin-destination trip count models with Poisson mixtures,
//! posterior sampling, predictive checks and congestion assessment.

pub mod assign;
pub mod calibrate;
pub mod distmath;
pub mod error;
pub mod model;
pub mod predict;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use model::{Family, ModelSpec, ODDataset, ParamPoint, Posterior};
