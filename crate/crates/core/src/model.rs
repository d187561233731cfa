//! Design matrices, priors and the marginal log-posteriors of the three
//! Poisson mixture families.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, LogNormal};
use statrs::function::gamma::ln_gamma;

use crate::distmath::gig::sample_ig;
use crate::distmath::hermite::GaussHermite;
use crate::distmath::pmf::{
    ln_factorial, nb_kernel, pig_kernel, pln_mc_kernel, pln_mc_variates, pln_quadrature_kernel,
};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Largest admissible |x_i' beta| before exponentiation.
pub const MAX_LINEAR_PREDICTOR: f64 = 700.0;

/// Default Gauss–Hermite order for the Poisson–lognormal integral.
pub const DEFAULT_QUADRATURE_ORDER: usize = 64;

/// Default shape/rate of the dispersion hyperprior.
pub const DEFAULT_HYPER_A: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Gamma mixing; negative binomial marginal, dispersion theta.
    PoissonGamma,
    /// Lognormal mixing; dispersion sigma^2.
    PoissonLognormal,
    /// Inverse Gaussian mixing; dispersion zeta.
    PoissonInverseGaussian,
}

impl Family {
    pub const ALL: [Family; 3] = [
        Family::PoissonGamma,
        Family::PoissonLognormal,
        Family::PoissonInverseGaussian,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Family::PoissonGamma => "PG",
            Family::PoissonLognormal => "PLN",
            Family::PoissonInverseGaussian => "PIG",
        }
    }

    pub fn dispersion_name(self) -> &'static str {
        match self {
            Family::PoissonGamma => "theta",
            Family::PoissonLognormal => "sigma2",
            Family::PoissonInverseGaussian => "zeta",
        }
    }

    /// Var(u) of the unit-mean mixing density at the given dispersion.
    pub fn mixing_variance(self, dispersion: f64) -> f64 {
        match self {
            Family::PoissonGamma | Family::PoissonInverseGaussian => 1.0 / dispersion,
            Family::PoissonLognormal => dispersion.exp_m1(),
        }
    }

    /// Dispersion giving a mixing density with variance `v`.
    pub fn dispersion_for_mixing_variance(self, v: f64) -> f64 {
        match self {
            Family::PoissonGamma | Family::PoissonInverseGaussian => 1.0 / v,
            Family::PoissonLognormal => v.ln_1p(),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PG" | "NB" => Ok(Family::PoissonGamma),
            "PLN" => Ok(Family::PoissonLognormal),
            "PIG" => Ok(Family::PoissonInverseGaussian),
            other => Err(Error::Config(format!("unknown family '{other}' (expected PG, PLN or PIG)"))),
        }
    }
}

/// Trip counts of an m x m origin-destination matrix, vectorised row by row
/// (T11, T12, ..., Tmm), with one design row per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ODDataset {
    pub zones: Vec<String>,
    pub y: Vec<u64>,
    /// n x (p+1) design with a leading column of ones.
    pub x: DMatrix<f64>,
    pub covariate_names: Vec<String>,
}

impl ODDataset {
    pub fn new(zones: Vec<String>, y: Vec<u64>, x: DMatrix<f64>, covariate_names: Vec<String>) -> Result<Self> {
        let m = zones.len();
        if m == 0 {
            return Err(Error::Empty("dataset has no zones"));
        }
        let n = m * m;
        if y.len() != n {
            return Err(Error::domain(format!(
                "expected m^2 = {n} observations for {m} zones, got {}",
                y.len()
            )));
        }
        if x.nrows() != n {
            return Err(Error::domain(format!("design has {} rows, expected {n}", x.nrows())));
        }
        if x.ncols() != covariate_names.len() {
            return Err(Error::domain("covariate name count does not match design columns"));
        }
        if x.ncols() == 0 || x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::domain("first design column must be the intercept (all ones)"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("design contains non-finite values"));
        }
        check_full_rank(&x)?;
        Ok(Self {
            zones,
            y,
            x,
            covariate_names,
        })
    }

    pub fn m(&self) -> usize {
        self.zones.len()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of regression coefficients, p + 1.
    pub fn n_coef(&self) -> usize {
        self.x.ncols()
    }

    /// (origin index, destination index) of cell `i`.
    pub fn cell(&self, i: usize) -> (usize, usize) {
        (i / self.m(), i % self.m())
    }

    pub fn is_intrazonal(&self, i: usize) -> bool {
        let (o, d) = self.cell(i);
        o == d
    }

    /// `x_i' beta` for every cell.
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(beta);
        (&self.x * b).iter().copied().collect()
    }

    /// `exp(x_i' beta)`, failing on any row outside the admissible range.
    pub fn means(&self, beta: &[f64]) -> Result<Vec<f64>> {
        self.linear_predictor(beta)
            .into_iter()
            .enumerate()
            .map(|(row, eta)| checked_exp(row, eta))
            .collect()
    }
}

#[inline]
fn checked_exp(row: usize, eta: f64) -> Result<f64> {
    if !(eta.abs() <= MAX_LINEAR_PREDICTOR) {
        return Err(Error::Evaluation { row, eta });
    }
    Ok(eta.exp())
}

/// Modified Gram–Schmidt rank check, reporting columns that are (numerically)
/// spanned by the columns before them.
fn check_full_rank(x: &DMatrix<f64>) -> Result<()> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        let mut v = col;
        for q in &basis {
            let c = q.dot(&v);
            v -= q * c;
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= 1e-10 * norm0 {
            dependent.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    if dependent.is_empty() {
        Ok(())
    } else {
        Err(Error::SingularDesign { columns: dependent })
    }
}

/// Unit-information g-prior covariance `n (X'X)^{-1}`.
pub fn build_gprior(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_full_rank(x)?;
    let n = x.nrows() as f64;
    let xtx = x.transpose() * x;
    let chol = Cholesky::new(xtx).ok_or_else(|| Error::SingularDesign {
        columns: (0..x.ncols()).collect(),
    })?;
    let inv = chol.inverse() * n;
    Ok((&inv + inv.transpose()) * 0.5)
}

/// How the Poisson–lognormal integral is evaluated inside the likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlnIntegration {
    Quadrature { order: usize },
    /// Common random numbers: `draws` importance variates from `seed`, reused
    /// for every observation and every evaluation so the target stays a function.
    MonteCarlo { draws: usize, seed: u64 },
}

impl Default for PlnIntegration {
    fn default() -> Self {
        PlnIntegration::Quadrature {
            order: DEFAULT_QUADRATURE_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    /// Shape and rate of the dispersion hyperprior.
    pub a: f64,
    pub prior_cov: DMatrix<f64>,
    pub pln: PlnIntegration,
}

impl ModelSpec {
    pub fn new(family: Family, a: f64, prior_cov: DMatrix<f64>) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Config(format!("hyperparameter a must be positive, got {a}")));
        }
        if !prior_cov.is_square() {
            return Err(Error::Config("prior covariance must be square".into()));
        }
        let asym = (&prior_cov - prior_cov.transpose()).amax();
        if asym > 1e-9 * prior_cov.amax().max(1.0) {
            return Err(Error::Config("prior covariance must be symmetric".into()));
        }
        if Cholesky::new(prior_cov.clone()).is_none() {
            return Err(Error::Config("prior covariance must be positive definite".into()));
        }
        Ok(Self {
            family,
            a,
            prior_cov,
            pln: PlnIntegration::default(),
        })
    }

    /// The g-prior specification for `data`.
    pub fn with_gprior(family: Family, a: f64, data: &ODDataset) -> Result<Self> {
        Self::new(family, a, build_gprior(&data.x)?)
    }

    pub fn with_pln_integration(mut self, pln: PlnIntegration) -> Self {
        self.pln = pln;
        self
    }
}

/// Regression coefficients and the family's dispersion (theta, sigma^2 or zeta).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPoint {
    pub beta: Vec<f64>,
    pub dispersion: f64,
}

impl ParamPoint {
    pub fn new(beta: Vec<f64>, dispersion: f64) -> Result<Self> {
        if !(dispersion > 0.0 && dispersion.is_finite()) {
            return Err(Error::domain(format!("dispersion must be positive, got {dispersion}")));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::domain("coefficients must be finite"));
        }
        Ok(Self { beta, dispersion })
    }

    /// Flattened `(beta_0, ..., beta_p, dispersion)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.dispersion);
        v
    }
}

/// Intercept of the additive (E[eps] = 0) Poisson–lognormal parameterisation
/// corresponding to the multiplicative (E[u] = 1) intercept.
pub fn pln_additive_intercept(multiplicative: f64, sigma2: f64) -> f64 {
    multiplicative - 0.5 * sigma2
}

/// Inverse of [`pln_additive_intercept`].
pub fn pln_multiplicative_intercept(additive: f64, sigma2: f64) -> f64 {
    additive + 0.5 * sigma2
}

/// Marginal mean and variance of a count with log-mean `x' beta`.
///
/// With unit-mean mixing `u`, `Var(y) = mu + mu^2 Var(u)`: theta^-1 for gamma,
/// `e^{sigma^2} - 1` for lognormal and zeta^-1 for IG(1, zeta).
pub fn marginal_moments(family: Family, point: &ParamPoint, x: &[f64]) -> Result<(f64, f64)> {
    if x.len() != point.beta.len() {
        return Err(Error::domain("covariate row length does not match beta"));
    }
    if !(point.dispersion > 0.0) {
        return Err(Error::domain("dispersion must be positive"));
    }
    let eta: f64 = x.iter().zip(&point.beta).map(|(a, b)| a * b).sum();
    let mu = checked_exp(0, eta)?;
    Ok((mu, mu + mu * mu * family.mixing_variance(point.dispersion)))
}

/// One draw of the unit-mean mixing effect.
pub fn draw_mixing_effect<R: Rng + ?Sized>(family: Family, dispersion: f64, rng: &mut R) -> Result<f64> {
    if !(dispersion > 0.0 && dispersion.is_finite()) {
        return Err(Error::domain(format!("dispersion must be positive, got {dispersion}")));
    }
    Ok(match family {
        Family::PoissonGamma => Gamma::new(dispersion, 1.0 / dispersion)
            .map_err(|e| Error::domain(e.to_string()))?
            .sample(rng),
        Family::PoissonLognormal => LogNormal::new(-0.5 * dispersion, dispersion.sqrt())
            .map_err(|e| Error::domain(e.to_string()))?
            .sample(rng),
        Family::PoissonInverseGaussian => sample_ig(1.0, dispersion, rng),
    })
}

/// A model bound to one dataset, with per-observation constants and the prior
/// factorisation cached so repeated evaluations are cheap. Safe to share
/// between threads.
pub struct Posterior<'a> {
    spec: &'a ModelSpec,
    data: &'a ODDataset,
    ln_fact: Vec<f64>,
    prior_chol: Cholesky<f64, Dyn>,
    prior_log_norm: f64,
    hyper_log_norm: f64,
    quadrature: Option<GaussHermite>,
    mc_variates: Option<Vec<f64>>,
}

impl<'a> Posterior<'a> {
    pub fn new(spec: &'a ModelSpec, data: &'a ODDataset) -> Result<Self> {
        let k = data.n_coef();
        if spec.prior_cov.nrows() != k {
            return Err(Error::Config(format!(
                "prior covariance is {}x{}, design has {k} coefficients",
                spec.prior_cov.nrows(),
                spec.prior_cov.ncols()
            )));
        }
        let prior_chol = Cholesky::new(spec.prior_cov.clone())
            .ok_or_else(|| Error::Config("prior covariance must be positive definite".into()))?;
        let log_det: f64 = prior_chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let prior_log_norm = -0.5 * (k as f64 * (2.0 * PI).ln() + log_det);
        let hyper_log_norm = spec.a * spec.a.ln() - ln_gamma(spec.a);
        let (quadrature, mc_variates) = match (spec.family, spec.pln) {
            (Family::PoissonLognormal, PlnIntegration::Quadrature { order }) => {
                if order < 10 {
                    return Err(Error::Config(format!("quadrature order must be at least 10, got {order}")));
                }
                (Some(GaussHermite::new(order)?), None)
            }
            (Family::PoissonLognormal, PlnIntegration::MonteCarlo { draws, seed }) => {
                if draws < 1 {
                    return Err(Error::Config("Monte Carlo size must be at least 1".into()));
                }
                let mut rng = stream(seed, Purpose::Auxiliary, 0);
                (None, Some(pln_mc_variates(draws, &mut rng)))
            }
            _ => (None, None),
        };
        Ok(Self {
            spec,
            data,
            ln_fact: data.y.iter().map(|&y| ln_factorial(y)).collect(),
            prior_chol,
            prior_log_norm,
            hyper_log_norm,
            quadrature,
            mc_variates,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn data(&self) -> &ODDataset {
        self.data
    }

    fn check_point(&self, point: &ParamPoint) -> Result<()> {
        if point.beta.len() != self.data.n_coef() {
            return Err(Error::domain(format!(
                "beta has length {}, expected {}",
                point.beta.len(),
                self.data.n_coef()
            )));
        }
        if !(point.dispersion > 0.0 && point.dispersion.is_finite()) {
            return Err(Error::domain(format!("dispersion must be positive, got {}", point.dispersion)));
        }
        Ok(())
    }

    /// Visits `(row, log p(y_i | beta, d), d/d eta_i)` for every observation.
    fn for_each_term(&self, point: &ParamPoint, mut f: impl FnMut(usize, f64, f64)) -> Result<()> {
        self.check_point(point)?;
        let eta = self.data.linear_predictor(&point.beta);
        let d = point.dispersion;
        match self.spec.family {
            Family::PoissonGamma => {
                let lg = ln_gamma(d);
                for (i, (&y, &e)) in self.data.y.iter().zip(&eta).enumerate() {
                    let mu = checked_exp(i, e)?;
                    let (v, g) = nb_kernel(y, self.ln_fact[i], mu, d, lg);
                    f(i, v, g);
                }
            }
            Family::PoissonInverseGaussian => {
                for (i, (&y, &e)) in self.data.y.iter().zip(&eta).enumerate() {
                    let mu = checked_exp(i, e)?;
                    let (v, g) = pig_kernel(y, self.ln_fact[i], mu, d);
                    f(i, v, g);
                }
            }
            Family::PoissonLognormal => {
                for (i, (&y, &e)) in self.data.y.iter().zip(&eta).enumerate() {
                    let mu = checked_exp(i, e)?;
                    let (v, g) = match (&self.quadrature, &self.mc_variates) {
                        (Some(gh), _) => pln_quadrature_kernel(y as f64, self.ln_fact[i], mu, d, gh),
                        (None, Some(z)) => pln_mc_kernel(y as f64, self.ln_fact[i], mu, d, z),
                        (None, None) => unreachable!("lognormal posterior always has an integration rule"),
                    };
                    f(i, v, g);
                }
            }
        }
        Ok(())
    }

    /// Per-observation marginal log-likelihood terms.
    pub fn log_likelihood_terms(&self, point: &ParamPoint) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.data.n()];
        self.for_each_term(point, |i, v, _| out[i] = v)?;
        Ok(out)
    }

    /// Marginal log-likelihood `sum_i ln p(y_i | beta, d)` including all constants.
    pub fn log_likelihood(&self, point: &ParamPoint) -> Result<f64> {
        let mut total = 0.0;
        self.for_each_term(point, |_, v, _| total += v)?;
        Ok(total)
    }

    /// Log-likelihood and its gradient with respect to beta.
    pub fn log_likelihood_with_grad(&self, point: &ParamPoint) -> Result<(f64, Vec<f64>)> {
        let k = self.data.n_coef();
        let mut total = 0.0;
        let mut grad = vec![0.0; k];
        let x = &self.data.x;
        self.for_each_term(point, |i, v, g| {
            total += v;
            for (j, gj) in grad.iter_mut().enumerate() {
                *gj += g * x[(i, j)];
            }
        })?;
        Ok((total, grad))
    }

    /// Multivariate normal log-density of beta under the prior.
    pub fn log_prior_beta(&self, beta: &[f64]) -> f64 {
        let b = DVector::from_column_slice(beta);
        let w = self.prior_chol.l().solve_lower_triangular(&b).expect("triangular solve");
        self.prior_log_norm - 0.5 * w.norm_squared()
    }

    fn prior_precision_times(&self, beta: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(beta);
        self.prior_chol.solve(&b).iter().copied().collect()
    }

    /// Log-density of the dispersion hyperprior: Gamma(a, a) for theta and
    /// zeta, InvGamma(a, a) for sigma^2.
    pub fn log_prior_dispersion(&self, d: f64) -> f64 {
        let a = self.spec.a;
        match self.spec.family {
            Family::PoissonGamma | Family::PoissonInverseGaussian => {
                self.hyper_log_norm + (a - 1.0) * d.ln() - a * d
            }
            Family::PoissonLognormal => self.hyper_log_norm - (a + 1.0) * d.ln() - a / d,
        }
    }

    pub fn log_prior(&self, point: &ParamPoint) -> f64 {
        self.log_prior_beta(&point.beta) + self.log_prior_dispersion(point.dispersion)
    }

    pub fn log_posterior(&self, point: &ParamPoint) -> Result<f64> {
        Ok(self.log_likelihood(point)? + self.log_prior(point))
    }

    /// Gradient of the log-posterior with respect to beta.
    pub fn grad_beta(&self, point: &ParamPoint) -> Result<Vec<f64>> {
        let (_, mut g) = self.log_likelihood_with_grad(point)?;
        for (gj, pj) in g.iter_mut().zip(self.prior_precision_times(&point.beta)) {
            *gj -= pj;
        }
        Ok(g)
    }
}

/// Un-normalised log-posterior of `point` (all constants retained).
pub fn log_posterior(spec: &ModelSpec, data: &ODDataset, point: &ParamPoint) -> Result<f64> {
    Posterior::new(spec, data)?.log_posterior(point)
}
