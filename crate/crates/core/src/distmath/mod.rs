//! Special functions, mixture probabilities and random variate generators.

pub mod bessel;
pub mod gig;
pub mod hermite;
pub mod pmf;

pub use bessel::{log_bessel_k, log_bessel_k_half, HalfIntOrder};
pub use gig::{gig_log_moment, gig_logpdf, gig_sample, ig_logpdf, GigParams, IgParams};
pub use hermite::GaussHermite;
pub use pmf::{ln_factorial, nb_logpmf, pig_logpmf, pln_logpmf, poisson_logpmf, PlnMethod};
