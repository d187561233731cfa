use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss–Hermite rule for weight `exp(-x^2)` on the real line.
///
/// `log_scaled_weights[k] = ln(w_k) + x_k^2`, the form needed when the
/// integrand is not written as `g(x) exp(-x^2)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_scaled_weights: Vec<f64>,
}

impl GaussHermite {
    /// Newton iteration on the orthonormal Hermite recurrence.
    pub fn new(order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::domain("Gauss-Hermite order must be at least 1"));
        }
        let n = order;
        let nf = n as f64;
        let pim4 = PI.powf(-0.25);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
        let log_scaled_weights = x.iter().zip(&w).map(|(xi, wi)| wi.ln() + xi * xi).collect();
        Ok(Self {
            nodes: x,
            weights: w,
            log_scaled_weights,
        })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}
