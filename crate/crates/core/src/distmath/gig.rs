//! Generalized inverse Gaussian distribution GIG(lambda, psi, chi) with density
//! proportional to `x^(lambda-1) exp(-(psi x + chi / x) / 2)`.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use super::bessel::log_bessel_k_scaled;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigParams {
    pub lambda: f64,
    pub psi: f64,
    pub chi: f64,
}

impl GigParams {
    pub fn new(lambda: f64, psi: f64, chi: f64) -> Result<Self> {
        let p = Self { lambda, psi, chi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { lambda, psi, chi } = *self;
        if !(lambda.is_finite() && psi.is_finite() && chi.is_finite()) {
            return Err(Error::domain(format!("GIG parameters must be finite: {self:?}")));
        }
        if psi <= 0.0 {
            return Err(Error::domain(format!("GIG psi must be positive, got {psi}")));
        }
        if chi < 0.0 {
            return Err(Error::domain(format!("GIG chi must be non-negative, got {chi}")));
        }
        if chi == 0.0 && lambda <= 0.0 {
            return Err(Error::domain(
                "GIG with chi = 0 requires lambda > 0 (gamma limit)".to_string(),
            ));
        }
        Ok(())
    }

    fn omega(&self) -> f64 {
        (self.psi * self.chi).sqrt()
    }
}

/// Inverse Gaussian with mean `mu` and shape `zeta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IgParams {
    pub mu: f64,
    pub zeta: f64,
}

impl IgParams {
    pub fn new(mu: f64, zeta: f64) -> Result<Self> {
        if !(mu > 0.0 && zeta > 0.0 && mu.is_finite() && zeta.is_finite()) {
            return Err(Error::domain(format!(
                "inverse Gaussian requires positive finite mean and shape, got ({mu}, {zeta})"
            )));
        }
        Ok(Self { mu, zeta })
    }

    /// The same law as a GIG: lambda = -1/2, psi = zeta / mu^2, chi = zeta.
    pub fn as_gig(&self) -> GigParams {
        GigParams {
            lambda: -0.5,
            psi: self.zeta / (self.mu * self.mu),
            chi: self.zeta,
        }
    }
}

pub fn ig_logpdf(x: f64, p: IgParams) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::domain(format!("inverse Gaussian support is x > 0, got {x}")));
    }
    let IgParams { mu, zeta } = p;
    let d = x - mu;
    Ok(0.5 * (zeta / (2.0 * PI * x * x * x)).ln() - zeta * d * d / (2.0 * mu * mu * x))
}

/// `ln K_lambda(sqrt(psi chi))`, valid for chi > 0.
fn log_normaliser_bessel(p: &GigParams) -> f64 {
    let w = p.omega();
    log_bessel_k_scaled(p.lambda, w) - w
}

pub fn gig_logpdf(x: f64, p: GigParams) -> Result<f64> {
    p.validate()?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::domain(format!("GIG support is x > 0, got {x}")));
    }
    let GigParams { lambda, psi, chi } = p;
    if chi == 0.0 {
        let rate = 0.5 * psi;
        return Ok(lambda * rate.ln() - ln_gamma(lambda) + (lambda - 1.0) * x.ln() - rate * x);
    }
    Ok(0.5 * lambda * (psi / chi).ln() - LN_2 - log_normaliser_bessel(&p) + (lambda - 1.0) * x.ln()
        - 0.5 * (psi * x + chi / x))
}

/// `ln E[X^r]` for a GIG variate.
pub fn gig_log_moment(p: GigParams, r: u32) -> Result<f64> {
    p.validate()?;
    if r < 1 {
        return Err(Error::domain("moment order must be at least 1"));
    }
    let GigParams { lambda, psi, chi } = p;
    let r = r as f64;
    if chi == 0.0 {
        return Ok(ln_gamma(lambda + r) - ln_gamma(lambda) - r * (0.5 * psi).ln());
    }
    let w = p.omega();
    Ok(0.5 * r * (chi / psi).ln() + log_bessel_k_scaled(lambda + r, w) - log_bessel_k_scaled(lambda, w))
}

/// One GIG variate.
///
/// `lambda = -1/2` uses the Michael–Schucany–Haas transformation; `chi = 0`
/// is a gamma draw; everything else goes through the ratio-of-uniforms family
/// of Hörmann & Leydold (mode-shifted ROU for large lambda or omega, plain ROU
/// in the T-concave region, and a three-piece dominating hat below it).
pub fn gig_sample<R: Rng + ?Sized>(p: GigParams, rng: &mut R) -> Result<f64> {
    p.validate()?;
    Ok(sample_unchecked(p, rng))
}

pub(crate) fn sample_unchecked<R: Rng + ?Sized>(p: GigParams, rng: &mut R) -> f64 {
    let GigParams { lambda, psi, chi } = p;
    if chi == 0.0 {
        return Gamma::new(lambda, 2.0 / psi)
            .expect("validated gamma parameters")
            .sample(rng);
    }
    if lambda == -0.5 {
        return sample_ig((chi / psi).sqrt(), chi, rng);
    }
    let omega = p.omega();
    let alpha = (chi / psi).sqrt();
    let l = lambda.abs();
    let y = if l > 2.0 || omega > 3.0 {
        rou_shift(l, omega, rng)
    } else if l >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        rou_noshift(l, omega, rng)
    } else {
        dominating_hat(l, omega, rng)
    };
    if lambda < 0.0 {
        alpha / y
    } else {
        alpha * y
    }
}

/// Inverse Gaussian draw with mean `m` and shape `s`.
pub(crate) fn sample_ig<R: Rng + ?Sized>(m: f64, s: f64, rng: &mut R) -> f64 {
    let nu: f64 = rng.sample(StandardNormal);
    let y = nu * nu;
    let c = m / (2.0 * s);
    // larger root first; the smaller one is m^2 / larger
    let big = m + c * (m * y + (4.0 * m * s * y + m * m * y * y).sqrt());
    let x = m * m / big;
    let u: f64 = rng.random();
    if u <= m / (m + x) {
        x
    } else {
        big
    }
}

fn mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0).powi(2) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda).powi(2) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

/// Ratio-of-uniforms with the mode shifted to the origin.
fn rou_shift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = mode(lambda, omega);
    let log_h = |x: f64| t * x.ln() - s * (x + 1.0 / x);
    let nc = log_h(xm);

    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = (2.0 * a * a * a) / 27.0 - (a * b) / 3.0 + c;
    let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).clamp(-1.0, 1.0).acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let mut y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let mut y2 = fak * (fi / 3.0 + 4.0 / 3.0 * PI).cos() - a / 3.0;

    // Polish the box corners: they maximise ln|x - xm| + log_h(x).
    let dg = |x: f64| 1.0 / (x - xm) + t / x - s * (1.0 - 1.0 / (x * x));
    let d2g = |x: f64| -1.0 / ((x - xm) * (x - xm)) - t / (x * x) - 2.0 * s / (x * x * x);
    let g = |x: f64| (x - xm).abs().ln() + log_h(x);
    for _ in 0..4 {
        let n1 = y1 - dg(y1) / d2g(y1);
        if n1.is_finite() && n1 > xm && g(n1) >= g(y1) {
            y1 = n1;
        }
        let n2 = y2 - dg(y2) / d2g(y2);
        if n2.is_finite() && n2 > 0.0 && n2 < xm && g(n2) >= g(y2) {
            y2 = n2;
        }
    }

    let uplus = (y1 - xm) * (log_h(y1) - nc).exp();
    let uminus = (y2 - xm) * (log_h(y2) - nc).exp();
    loop {
        let u = uminus + rng.random::<f64>() * (uplus - uminus);
        let v: f64 = rng.random();
        let x = u / v + xm;
        if x <= 0.0 {
            continue;
        }
        if v.ln() <= log_h(x) - nc {
            return x;
        }
    }
}

/// Plain ratio-of-uniforms, valid where the density is T_{-1/2}-concave.
fn rou_noshift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + ((lambda + 1.0).powi(2) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * rng.random::<f64>();
        let v: f64 = rng.random();
        let x = u / v;
        if v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

/// Rejection from a constant / power / exponential hat; 0 <= lambda < 1 and
/// small omega.
fn dominating_hat<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let xm = mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let total = a0 + a1 + a2;
    let tail_start = x0.max(2.0 / omega);
    loop {
        let mut v = total * rng.random::<f64>();
        let (x, hx) = if v <= a0 {
            (x0 * v / a0, k0)
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    let x = omega * (omega.exp() * v).exp();
                    (x, k1 / x)
                } else {
                    let x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    (x, k1 * x.powf(lambda - 1.0))
                }
            } else {
                v -= a1;
                let x = -2.0 / omega
                    * ((-omega / 2.0 * tail_start).exp() - omega / (2.0 * k2) * v).ln();
                (x, k2 * (-omega / 2.0 * x).exp())
            }
        };
        let u = rng.random::<f64>() * hx;
        if u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn validation() {
        assert!(GigParams::new(1.0, 0.0, 1.0).is_err());
        assert!(GigParams::new(1.0, 1.0, -1.0).is_err());
        assert!(GigParams::new(-1.0, 1.0, 0.0).is_err());
        assert!(GigParams::new(1.0, 1.0, 0.0).is_ok());
        assert!(gig_logpdf(0.0, GigParams::new(1.0, 1.0, 1.0).unwrap()).is_err());
        assert!(IgParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn ig_is_gig_with_minus_half() {
        for &zeta in &[0.377, 2.0, 10.0] {
            let ig = IgParams::new(1.0, zeta).unwrap();
            for &x in &[0.1, 1.0, 3.0] {
                let a = ig_logpdf(x, ig).unwrap();
                let b = gig_logpdf(x, ig.as_gig()).unwrap();
                assert!((a - b).abs() < 1e-12, "zeta={zeta} x={x}");
            }
        }
    }

    #[test]
    fn gamma_limit_matches_gamma_density() {
        let p = GigParams::new(2.5, 3.0, 0.0).unwrap();
        let x: f64 = 0.7;
        let expected = 2.5 * 1.5f64.ln() - ln_gamma(2.5) + 1.5 * x.ln() - 1.5 * x;
        assert!((gig_logpdf(x, p).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn unit_mean_for_ig_moments() {
        for &zeta in &[0.1, 0.377, 1.0, 10.0] {
            let p = GigParams::new(-0.5, zeta, zeta).unwrap();
            assert!(gig_log_moment(p, 1).unwrap().abs() < 1e-13);
        }
        let p = GigParams::new(-0.5, 1.0, 1.0).unwrap();
        assert!((gig_log_moment(p, 2).unwrap() - 2f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn mode_matches_stationary_point() {
        assert!((mode(1.0, 2.0) - 1.0).abs() < 1e-14);
        for &(l, w) in &[(0.3, 0.1), (2.0, 5.0), (0.0, 1.0)] {
            let m = mode(l, w);
            // derivative of (l-1) ln x - w/2 (x + 1/x)
            let d = (l - 1.0) / m - 0.5 * w * (1.0 - 1.0 / (m * m));
            assert!(d.abs() < 1e-10, "l={l} w={w} m={m} d={d}");
        }
    }

    fn mean_sd(p: GigParams, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..n {
            let x = gig_sample(p, &mut rng).unwrap();
            assert!(x > 0.0 && x.is_finite());
            s += x;
            s2 += x * x;
        }
        let m = s / n as f64;
        (m, (s2 / n as f64 - m * m).sqrt())
    }

    #[test]
    fn sample_moments_across_regimes() {
        let cases = [
            (1.0, 2.0, 2.0),
            (0.3, 0.01, 0.5),
            (0.0, 0.02, 0.02),
            (-0.7, 0.5, 0.3),
            (5.0, 10.0, 0.1),
            (-0.5, 3.0, 1.0),
            (2.5, 1.0, 0.0),
            (1e4 - 0.5, 3.0, 1.0),
            (0.5, 0.001, 0.001),
        ];
        for (i, &(l, psi, chi)) in cases.iter().enumerate() {
            let p = GigParams::new(l, psi, chi).unwrap();
            let n = 200_000;
            let (m, sd) = mean_sd(p, n, 11 + i as u64);
            let mean = gig_log_moment(p, 1).unwrap().exp();
            let se = sd / (n as f64).sqrt();
            assert!((m - mean).abs() < 4.0 * se, "case {i}: {m} vs {mean} (se {se})");
            let var = gig_log_moment(p, 2).unwrap().exp() - mean * mean;
            assert!((sd * sd / var - 1.0).abs() < 0.05, "case {i}: var {} vs {var}", sd * sd);
        }
    }
}
