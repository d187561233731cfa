//! Marginal count probabilities of the Poisson mixtures, on the log scale.
//!
//! The `*_kernel` functions are the unchecked hot paths used by the model
//! module; they take `ln y!` precomputed and return the log-probability
//! together with its derivative with respect to the log-mean `eta = ln mu`.

use std::f64::consts::PI;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StudentT};
use statrs::function::gamma::ln_gamma;

use super::bessel::half_scaled_with_ratio;
use super::hermite::GaussHermite;
use crate::error::{Error, Result};

// ln y! for y <= 20
const LN_FACT_TABLE: [f64; 21] = [
    0.0,
    0.0,
    0.6931471805599453,
    1.791759469228055,
    3.1780538303479458,
    4.787491742782046,
    6.579251212010101,
    8.525161361065415,
    10.60460290274525,
    12.801827480081469,
    15.104412573075516,
    17.502307845873887,
    19.987214495661885,
    22.552163853123425,
    25.19122118273868,
    27.89927138384089,
    30.671860106080672,
    33.50507345013689,
    36.39544520803305,
    39.339884187199495,
    42.335616460753485,
];

/// `ln y!`.
pub fn ln_factorial(y: u64) -> f64 {
    if y <= 20 {
        LN_FACT_TABLE[y as usize]
    } else {
        ln_gamma(y as f64 + 1.0)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::domain(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

pub fn poisson_logpmf(y: u64, mu: f64) -> Result<f64> {
    check_positive("mu", mu)?;
    Ok(poisson_kernel(y as f64, ln_factorial(y), mu.ln(), mu))
}

#[inline]
pub(crate) fn poisson_kernel(y: f64, ln_fact: f64, ln_mu: f64, mu: f64) -> f64 {
    if y == 0.0 {
        -mu
    } else {
        y * ln_mu - mu - ln_fact
    }
}

/// Negative binomial with mean `mu` and shape `theta`:
/// `Gamma(y+theta) / (Gamma(theta) y!) (theta/(mu+theta))^theta (mu/(mu+theta))^y`.
pub fn nb_logpmf(y: u64, mu: f64, theta: f64) -> Result<f64> {
    check_positive("mu", mu)?;
    check_positive("theta", theta)?;
    Ok(nb_kernel(y, ln_factorial(y), mu, theta, ln_gamma(theta)).0)
}

/// `ln Gamma(y + theta) - ln Gamma(theta)`.
#[inline]
fn ln_rising(y: u64, theta: f64, ln_gamma_theta: f64) -> f64 {
    if y < 64 {
        let mut s = 0.0;
        for k in 0..y {
            s += (theta + k as f64).ln();
        }
        s
    } else {
        ln_gamma(y as f64 + theta) - ln_gamma_theta
    }
}

#[inline]
pub(crate) fn nb_kernel(y: u64, ln_fact: f64, mu: f64, theta: f64, ln_gamma_theta: f64) -> (f64, f64) {
    let yf = y as f64;
    let ln_mt = (mu + theta).ln();
    let mut v = -theta * (mu / theta).ln_1p();
    if y > 0 {
        v += ln_rising(y, theta, ln_gamma_theta) - ln_fact + yf * (mu.ln() - ln_mt);
    }
    let d = theta * (yf - mu) / (mu + theta);
    (v, d)
}

/// Poisson–inverse Gaussian: Poisson with rate `mu u`, `u ~ IG(1, zeta)`.
///
/// `ln P(y) = ln sqrt(2 zeta / pi) + zeta + y ln mu - ln y! + ln K_{y-1/2}(z)
///  + ((y - 1/2) / 2) ln(zeta / (2 mu + zeta))` with `z = sqrt(zeta (2 mu + zeta))`.
pub fn pig_logpmf(y: u64, mu: f64, zeta: f64) -> Result<f64> {
    check_positive("mu", mu)?;
    check_positive("zeta", zeta)?;
    Ok(pig_kernel(y, ln_factorial(y), mu, zeta).0)
}

#[inline]
pub(crate) fn pig_kernel(y: u64, ln_fact: f64, mu: f64, zeta: f64) -> (f64, f64) {
    let yf = y as f64;
    let s = 2.0 * mu + zeta;
    let z = (zeta * s).sqrt();
    let steps = y.saturating_sub(1);
    let (ln_k_scaled, ratio) = half_scaled_with_ratio(steps, z);
    // zeta - z without cancellation
    let zeta_minus_z = -2.0 * mu * zeta / (zeta + z);
    let mut v = 0.5 * (2.0 * zeta / PI).ln() + zeta_minus_z + ln_k_scaled
        + 0.5 * (yf - 0.5) * (zeta / s).ln();
    if y > 0 {
        v += yf * mu.ln() - ln_fact;
    }
    // K_{y-3/2}(z) / K_{y-1/2}(z)
    let lower_ratio = if y == 0 { 1.0 + 1.0 / z } else { 1.0 / ratio };
    let d = yf - mu * zeta * lower_ratio / z - mu * (2.0 * yf - 1.0) / s;
    (v, d)
}

/// Integration rule for the Poisson–lognormal marginal.
pub enum PlnMethod<'a> {
    /// Adaptive Gauss–Hermite: nodes re-centred at the mode of the integrand
    /// in `ln u` and scaled by its curvature.
    Quadrature(&'a GaussHermite),
    /// Importance sampling with `draws` Student-t variates centred at the
    /// mode of the integrand.
    MonteCarlo {
        draws: usize,
        rng: &'a mut dyn RngCore,
    },
}

/// Poisson–lognormal: Poisson with rate `mu u`, `u ~ LN(-sigma2/2, sigma2)`.
pub fn pln_logpmf(y: u64, mu: f64, sigma2: f64, method: PlnMethod<'_>) -> Result<f64> {
    check_positive("mu", mu)?;
    check_positive("sigma2", sigma2)?;
    let ln_fact = ln_factorial(y);
    match method {
        PlnMethod::Quadrature(gh) => {
            if gh.order() < 10 {
                return Err(Error::domain(format!(
                    "quadrature order must be at least 10, got {}",
                    gh.order()
                )));
            }
            Ok(pln_quadrature_kernel(y as f64, ln_fact, mu, sigma2, gh).0)
        }
        PlnMethod::MonteCarlo { draws, rng } => {
            if draws < 1 {
                return Err(Error::domain("Monte Carlo size must be at least 1"));
            }
            let variates = pln_mc_variates(draws, rng);
            Ok(pln_mc_kernel(y as f64, ln_fact, mu, sigma2, &variates).0)
        }
    }
}

/// Mode of `h(s) = y s - mu e^s - (s + sigma2/2)^2 / (2 sigma2)`.
///
/// `h'` is concave and decreasing, so Newton started to the right of the
/// root descends monotonically onto it.
#[inline]
fn pln_mode(y: f64, mu: f64, sigma2: f64) -> f64 {
    let m = -0.5 * sigma2;
    let inv = 1.0 / sigma2;
    let mut s = ((y + 1.0) / mu).ln().max(m);
    for _ in 0..200 {
        let e = mu * s.exp();
        let g = y - e - (s - m) * inv;
        let h2 = -e - inv;
        let step = g / h2;
        s -= step;
        if step.abs() <= 1e-12 * s.abs().max(1.0) {
            break;
        }
    }
    s
}

#[inline]
pub(crate) fn pln_quadrature_kernel(
    y: f64,
    ln_fact: f64,
    mu: f64,
    sigma2: f64,
    gh: &GaussHermite,
) -> (f64, f64) {
    let ln_mu = mu.ln();
    let m = -0.5 * sigma2;
    let inv2 = 0.5 / sigma2;
    let h = |s: f64, e: f64| y * s - e - (s - m) * (s - m) * inv2;
    let mode = pln_mode(y, mu, sigma2);
    let e_mode = mu * mode.exp();
    let tau = 1.0 / (e_mode + 1.0 / sigma2).sqrt();
    let h_mode = h(mode, e_mode);
    let scale = std::f64::consts::SQRT_2 * tau;
    let mut total = 0.0;
    let mut first = 0.0;
    for (x, lw) in gh.nodes.iter().zip(&gh.log_scaled_weights) {
        let s = mode + scale * x;
        let e = mu * s.exp();
        let w = (lw + h(s, e) - h_mode).exp();
        total += w;
        first += w * e;
    }
    let log_int = scale.ln() + h_mode + total.ln();
    let v = y * ln_mu - ln_fact - 0.5 * (2.0 * PI * sigma2).ln() + log_int;
    (v, y - first / total)
}

/// Degrees of freedom of the Student-t importance density.
pub(crate) const PLN_MC_DF: f64 = 10.0;

/// `draws` standard Student-t variates in antithetic pairs `(t, -t)`.
pub(crate) fn pln_mc_variates<R: Rng + ?Sized>(draws: usize, rng: &mut R) -> Vec<f64> {
    let t = StudentT::new(PLN_MC_DF).expect("positive degrees of freedom");
    let mut out = Vec::with_capacity(draws + 1);
    while out.len() < draws {
        let v: f64 = t.sample(rng);
        out.push(v);
        out.push(-v);
    }
    out.truncate(draws);
    out
}

/// Importance-sampled Monte Carlo estimate with a Student-t density centred
/// at the mode of the integrand in `s = ln u` and scaled by its curvature
/// there. The integrand has Gaussian tails, so the weights are bounded.
#[inline]
pub(crate) fn pln_mc_kernel(y: f64, ln_fact: f64, mu: f64, sigma2: f64, variates: &[f64]) -> (f64, f64) {
    let nu = PLN_MC_DF;
    let ln_t_norm = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
    let m = -0.5 * sigma2;
    let inv2 = 0.5 / sigma2;
    let h = |s: f64, e: f64| y * s - e - (s - m) * (s - m) * inv2;
    let mode = pln_mode(y, mu, sigma2);
    let e_mode = mu * mode.exp();
    let tau = 1.0 / (e_mode + 1.0 / sigma2).sqrt();
    let h_mode = h(mode, e_mode);
    let mut total = 0.0;
    let mut first = 0.0;
    for t in variates {
        let s = mode + tau * t;
        let e = mu * s.exp();
        let w = (h(s, e) - h_mode + 0.5 * (nu + 1.0) * (t * t / nu).ln_1p()).exp();
        total += w;
        first += w * e;
    }
    let log_int = tau.ln() - ln_t_norm + h_mode + (total / variates.len() as f64).ln();
    let v = y * mu.ln() - ln_fact - 0.5 * (2.0 * PI * sigma2).ln() + log_int;
    (v, y - first / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn factorial_table_matches_gamma() {
        for y in 0..=20u64 {
            assert!((ln_factorial(y) - ln_gamma(y as f64 + 1.0)).abs() < 1e-12, "{y}");
        }
    }

    #[test]
    fn nb_geometric_special_case() {
        assert!((nb_logpmf(0, 1.0, 1.0).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert!((nb_logpmf(2, 1.0, 1.0).unwrap() - 0.125f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn nb_variance_identity() {
        let (mu, theta) = (3.0, 0.965);
        let (mut m1, mut m2, mut tot) = (0.0, 0.0, 0.0);
        for y in 0..5000u64 {
            let p = nb_logpmf(y, mu, theta).unwrap().exp();
            tot += p;
            m1 += y as f64 * p;
            m2 += (y * y) as f64 * p;
        }
        assert!((tot - 1.0).abs() < 1e-12);
        assert!((m2 - m1 * m1 - (mu + mu * mu / theta)).abs() < 1e-6);
    }

    #[test]
    fn nb_branches_agree() {
        // the rising-factorial loop and the log-gamma difference overlap at y = 64
        let theta: f64 = 2.3;
        let lg = ln_gamma(theta);
        let direct = ln_gamma(64.0 + theta) - lg;
        let looped: f64 = (0..64).map(|k| (theta + k as f64).ln()).sum();
        assert!((direct - looped).abs() < 1e-11);
        assert!((ln_rising(64, theta, lg) - direct).abs() < 1e-15);
    }

    #[test]
    fn pig_zero_count_closed_form() {
        let v = pig_logpmf(0, 1.0, 1.0).unwrap();
        assert!((v - (1.0 - 3f64.sqrt())).abs() < 1e-14, "{v}");
    }

    #[test]
    fn pig_normalises() {
        let mut tot = 0.0;
        for y in 0..20_000u64 {
            tot += pig_logpmf(y, 5.0, 0.377).unwrap().exp();
        }
        assert!((tot - 1.0).abs() < 1e-6, "{tot}");
    }

    #[test]
    fn poisson_limits() {
        for y in 0..=10u64 {
            let p = poisson_logpmf(y, 2.0).unwrap();
            assert!((pig_logpmf(y, 2.0, 1e6).unwrap() - p).abs() < 1e-4);
            assert!((nb_logpmf(y, 2.0, 1e6).unwrap() - p).abs() < 1e-4);
        }
        let gh = GaussHermite::new(64).unwrap();
        let v = pln_logpmf(3, 2.0, 1e-10, PlnMethod::Quadrature(&gh)).unwrap();
        assert!((v - poisson_logpmf(3, 2.0).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn pln_quadrature_self_convergence() {
        let a = GaussHermite::new(32).unwrap();
        let b = GaussHermite::new(128).unwrap();
        let va = pln_logpmf(50, 10.0, 2.0, PlnMethod::Quadrature(&a)).unwrap();
        let vb = pln_logpmf(50, 10.0, 2.0, PlnMethod::Quadrature(&b)).unwrap();
        assert!((va - vb).abs() < 1e-6, "{va} {vb}");
    }

    #[test]
    fn pln_quadrature_vs_monte_carlo() {
        let gh = GaussHermite::new(64).unwrap();
        let q = pln_logpmf(5, 3.0, 1.065, PlnMethod::Quadrature(&gh)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2000);
        let mc = pln_logpmf(5, 3.0, 1.065, PlnMethod::MonteCarlo { draws: 2000, rng: &mut rng }).unwrap();
        assert!((q - mc).abs() < 0.01, "{q} {mc}");
    }

    #[test]
    fn pln_monte_carlo_error_is_small_across_seeds() {
        let gh = GaussHermite::new(64).unwrap();
        for &(y, mu, s2) in &[(5u64, 3.0, 1.065), (0, 0.5, 0.3), (40, 3.0, 3.0), (10, 30.0, 1.0)] {
            let q = pln_logpmf(y, mu, s2, PlnMethod::Quadrature(&gh)).unwrap();
            for seed in 0..20 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mc = pln_logpmf(y, mu, s2, PlnMethod::MonteCarlo { draws: 2000, rng: &mut rng }).unwrap();
                assert!((q - mc).abs() < 0.02, "y={y} seed={seed}: {q} {mc}");
            }
        }
    }

    #[test]
    fn pln_normalises() {
        let gh = GaussHermite::new(64).unwrap();
        let mut tot = 0.0;
        for y in 0..4000u64 {
            tot += pln_logpmf(y, 4.0, 1.065, PlnMethod::Quadrature(&gh)).unwrap().exp();
        }
        assert!((tot - 1.0).abs() < 1e-6, "{tot}");
    }

    #[test]
    fn huge_counts_are_finite() {
        let gh = GaussHermite::new(64).unwrap();
        let y = 250_000u64;
        assert!(nb_logpmf(y, 211_681.0, 0.965).unwrap().is_finite());
        assert!(pig_logpmf(y, 211_681.0, 0.377).unwrap().is_finite());
        assert!(pig_logpmf(y, 0.5, 0.377).unwrap().is_finite());
        assert!(pln_logpmf(y, 211_681.0, 1.065, PlnMethod::Quadrature(&gh)).unwrap().is_finite());
        assert!(pln_logpmf(y, 0.5, 1.065, PlnMethod::Quadrature(&gh)).unwrap().is_finite());
    }

    #[test]
    fn domain_errors() {
        assert!(nb_logpmf(1, 0.0, 1.0).is_err());
        assert!(nb_logpmf(1, 1.0, -1.0).is_err());
        assert!(pig_logpmf(1, -1.0, 1.0).is_err());
        assert!(pig_logpmf(1, 1.0, 0.0).is_err());
        let gh = GaussHermite::new(8).unwrap();
        assert!(pln_logpmf(1, 1.0, 1.0, PlnMethod::Quadrature(&gh)).is_err());
    }

    #[test]
    fn eta_derivatives_match_finite_differences() {
        let gh = GaussHermite::new(64).unwrap();
        let h = 1e-6;
        for &y in &[0u64, 1, 3, 17, 140] {
            let lf = ln_factorial(y);
            for &mu in &[0.3f64, 2.0, 25.0] {
                let fd = |f: &dyn Fn(f64) -> f64| (f((mu.ln() + h).exp()) - f((mu.ln() - h).exp())) / (2.0 * h);
                let theta = 0.8;
                let nb = |m: f64| nb_kernel(y, lf, m, theta, ln_gamma(theta)).0;
                let pig = |m: f64| pig_kernel(y, lf, m, 0.6).0;
                let pln = |m: f64| pln_quadrature_kernel(y as f64, lf, m, 0.9, &gh).0;
                let d_nb = nb_kernel(y, lf, mu, theta, ln_gamma(theta)).1;
                let d_pig = pig_kernel(y, lf, mu, 0.6).1;
                let d_pln = pln_quadrature_kernel(y as f64, lf, mu, 0.9, &gh).1;
                assert!((fd(&nb) - d_nb).abs() < 1e-5 * d_nb.abs().max(1.0), "nb y={y} mu={mu}");
                assert!((fd(&pig) - d_pig).abs() < 1e-5 * d_pig.abs().max(1.0), "pig y={y} mu={mu}");
                assert!((fd(&pln) - d_pln).abs() < 1e-5 * d_pln.abs().max(1.0), "pln y={y} mu={mu}");
            }
        }
    }
}
