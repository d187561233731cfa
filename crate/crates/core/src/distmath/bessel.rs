//! Modified Bessel function of the third kind, evaluated on the log scale.
//!
//! Half-integer orders start from the closed form
//! `K_{1/2}(z) = K_{-1/2}(z) = sqrt(pi / 2z) e^{-z}` and climb with the
//! upward recurrence `K_{v+1} = K_{v-1} + (2v/z) K_v`, carried as a running
//! product of successive ratios whose logarithm is flushed into an accumulator
//! before it can overflow. Generic real orders use Temme's series (z < 2) or
//! Steed's continued fraction (z >= 2) at a base order in [-1/2, 1/2) followed
//! by the same recurrence.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 100_000;
const FLUSH: f64 = 1e250;
const BIG_RATIO: f64 = 1e50;

/// A half-integer order `v = twice_order / 2` with `twice_order` odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HalfIntOrder {
    twice_order: i64,
}

impl HalfIntOrder {
    pub fn new(twice_order: i64) -> Result<Self> {
        if twice_order % 2 == 0 {
            return Err(Error::domain(format!(
                "half-integer order requires odd 2v, got {twice_order}"
            )));
        }
        Ok(Self { twice_order })
    }

    /// The order `y - 1/2` attached to a count `y`.
    pub fn for_count(y: u64) -> Self {
        Self {
            twice_order: 2 * y as i64 - 1,
        }
    }

    pub fn twice_order(self) -> i64 {
        self.twice_order
    }

    pub fn value(self) -> f64 {
        self.twice_order as f64 / 2.0
    }

    /// Number of recurrence steps above `1/2` needed to reach `|v|`.
    fn steps(self) -> u64 {
        (self.twice_order.unsigned_abs() - 1) / 2
    }
}

fn check_argument(z: f64) -> Result<()> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::domain(format!(
            "Bessel K argument must be positive and finite, got {z}"
        )));
    }
    Ok(())
}

/// Accumulates `ln prod(r_i)` for positive factors without overflow.
struct LogProduct {
    acc: f64,
    prod: f64,
}

impl LogProduct {
    fn new() -> Self {
        Self { acc: 0.0, prod: 1.0 }
    }

    #[inline]
    fn push(&mut self, r: f64) {
        if r > BIG_RATIO {
            self.acc += r.ln();
        } else {
            self.prod *= r;
            if self.prod > FLUSH {
                self.acc += self.prod.ln();
                self.prod = 1.0;
            }
        }
    }

    fn ln(&self) -> f64 {
        self.acc + self.prod.ln()
    }
}

/// `(ln(e^z K_{k+1/2}(z)), K_{k+1/2}(z) / K_{k-1/2}(z))` for `k >= 0`.
pub(crate) fn half_scaled_with_ratio(k: u64, z: f64) -> (f64, f64) {
    let base = 0.5 * (PI / (2.0 * z)).ln();
    let two_over_z = 2.0 / z;
    let mut ratio = 1.0;
    let mut product = LogProduct::new();
    for j in 1..=k {
        ratio = 1.0 / ratio + (j as f64 - 0.5) * two_over_z;
        product.push(ratio);
    }
    (base + product.ln(), ratio)
}

/// `ln K_v(z)` for half-integer `v`.
pub fn log_bessel_k_half(order: HalfIntOrder, z: f64) -> Result<f64> {
    check_argument(z)?;
    Ok(half_scaled_with_ratio(order.steps(), z).0 - z)
}

/// `ln(e^z K_v(z))` for half-integer `v`. The caller guarantees `z > 0`.
pub(crate) fn log_bessel_k_half_scaled(order: HalfIntOrder, z: f64) -> f64 {
    half_scaled_with_ratio(order.steps(), z).0
}

/// `ln K_v(z)` for any real order.
pub fn log_bessel_k(nu: f64, z: f64) -> Result<f64> {
    check_argument(z)?;
    if !nu.is_finite() {
        return Err(Error::domain(format!("Bessel K order must be finite, got {nu}")));
    }
    Ok(log_bessel_k_scaled(nu, z) - z)
}

/// `ln(e^z K_v(z))` for any real order; `z > 0` is assumed.
pub(crate) fn log_bessel_k_scaled(nu: f64, z: f64) -> f64 {
    let twice = 2.0 * nu;
    if twice == twice.round() && (twice.round() as i64) % 2 != 0 && twice.abs() < 9.0e15 {
        let order = HalfIntOrder {
            twice_order: twice.round() as i64,
        };
        return log_bessel_k_half_scaled(order, z);
    }
    generic_scaled(nu.abs(), z)
}

fn generic_scaled(nu: f64, x: f64) -> f64 {
    let nl = (nu + 0.5).floor();
    let xmu = nu - nl;
    let (ln_base, mut ratio) = if x < 2.0 {
        temme_scaled(xmu, x)
    } else {
        steed_scaled(xmu, x)
    };
    if nl < 1.0 {
        return ln_base;
    }
    let mut product = LogProduct::new();
    product.push(ratio);
    let two_over_x = 2.0 / x;
    let steps = nl as u64;
    for i in 1..steps {
        ratio = (xmu + i as f64) * two_over_x + 1.0 / ratio;
        product.push(ratio);
    }
    ln_base + product.ln()
}

/// Chebyshev evaluation of Temme's gamma-function combinations for |mu| <= 1/2.
/// Returns (gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu)).
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    const C1: [f64; 7] = [
        -1.142022680371168e0,
        6.5165112670737e-3,
        3.087090173086e-4,
        -3.4706269649e-6,
        6.9437664e-9,
        3.67795e-11,
        -1.356e-13,
    ];
    const C2: [f64; 8] = [
        1.843740587300905e0,
        -7.68528408447867e-2,
        1.2719271366546e-3,
        -4.9717367042e-6,
        -3.31261198e-8,
        2.423096e-10,
        -1.702e-13,
        -1.49e-15,
    ];
    let xx = 8.0 * mu * mu - 1.0;
    let gam1 = chebyshev(&C1, xx);
    let gam2 = chebyshev(&C2, xx);
    (gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1)
}

fn chebyshev(c: &[f64], x: f64) -> f64 {
    let y2 = 2.0 * x;
    let (mut d, mut dd) = (0.0, 0.0);
    for &cj in c[1..].iter().rev() {
        let sv = d;
        d = y2 * d - dd + cj;
        dd = sv;
    }
    x * d - dd + 0.5 * c[0]
}

/// Temme's series for K_mu and K_{mu+1} at small argument.
fn temme_scaled(xmu: f64, x: f64) -> (f64, f64) {
    let xmu2 = xmu * xmu;
    let x2 = 0.5 * x;
    let pimu = PI * xmu;
    let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
    let d = -x2.ln();
    let e = xmu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = temme_gammas(xmu);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp();
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let dd = x2 * x2;
    let mut sum1 = p;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - xmu2);
        c *= dd / fi;
        p /= fi - xmu;
        q /= fi + xmu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    let k1 = sum1 * 2.0 / x;
    (sum.ln() + x, k1 / sum)
}

/// Steed's continued fraction for K_mu and K_{mu+1} at x >= 2.
fn steed_scaled(xmu: f64, x: f64) -> (f64, f64) {
    let xmu2 = xmu * xmu;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - xmu2;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    let ln_kmu = 0.5 * (PI / (2.0 * x)).ln() - s.ln();
    let ratio = (xmu + x + 0.5 - a1 * h) / x;
    (ln_kmu, ratio)
}
