//! Synthetic OD matrices with known parameters.
//!
//! Zones sit uniformly in a 50 x 50 square. Each attribute pair draws one
//! lognormal attribute per zone, used as `<name>_o` for the origin and
//! `<name>_d` for the destination. The last covariate is the log Euclidean
//! distance with the intra-zonal floor. All covariates enter on the log scale.

use nalgebra::DMatrix;
use odmix::distmath::{nb_logpmf, pig_logpmf, pln_logpmf, GaussHermite, PlnMethod};
use odmix::model::{draw_mixing_effect, Family, ODDataset};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{CliError, CliResult};
use crate::io::{DISTANCE_COLUMN, INTERCEPT, INTRAZONAL_DISTANCE};

const SQUARE_SIDE: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub m: usize,
    pub family: Family,
    /// Intercept first, then one coefficient per attribute column, then distance.
    pub beta: Vec<f64>,
    pub dispersion: f64,
    /// When set, the intercept is re-tuned so the expected fraction of zero
    /// cells equals this value.
    pub zero_fraction: Option<f64>,
}

/// Parameters behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub family: Family,
    pub beta: Vec<f64>,
    pub dispersion: f64,
    pub u: Vec<f64>,
}

impl SynthSpec {
    pub fn validate(&self) -> CliResult<()> {
        if self.m < 2 {
            return Err(CliError::Validation("synthetic data needs at least 2 zones".into()));
        }
        if !(self.dispersion > 0.0 && self.dispersion.is_finite()) {
            return Err(CliError::Validation("synthetic dispersion must be positive".into()));
        }
        if self.beta.len() < 2 || self.beta.len() % 2 != 0 {
            return Err(CliError::Validation(
                "synthetic beta needs an intercept, attribute pairs and a distance coefficient".into(),
            ));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(CliError::Validation("synthetic beta must be finite".into()));
        }
        if let Some(z) = self.zero_fraction {
            if !(z > 0.0 && z < 1.0) {
                return Err(CliError::Validation("target zero fraction must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }

    pub fn n_pairs(&self) -> usize {
        (self.beta.len() - 2) / 2
    }
}

fn covariate_names(pairs: usize) -> Vec<String> {
    let mut names = vec![INTERCEPT.to_string()];
    for k in 0..pairs {
        names.push(format!("attr{}_o", k + 1));
        names.push(format!("attr{}_d", k + 1));
    }
    names.push(DISTANCE_COLUMN.to_string());
    names
}

fn design<R: Rng + ?Sized>(m: usize, pairs: usize, rng: &mut R) -> DMatrix<f64> {
    let coords: Vec<(f64, f64)> = (0..m)
        .map(|_| (rng.random::<f64>() * SQUARE_SIDE, rng.random::<f64>() * SQUARE_SIDE))
        .collect();
    let attrs: Vec<Vec<f64>> = (0..pairs)
        .map(|_| (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let p = 2 * pairs + 1;
    let n = m * m;
    DMatrix::from_fn(n, p + 1, |i, c| {
        let (o, d) = (i / m, i % m);
        if c == 0 {
            1.0
        } else if c == p {
            let dist = if o == d {
                INTRAZONAL_DISTANCE
            } else {
                (coords[o].0 - coords[d].0).hypot(coords[o].1 - coords[d].1)
            };
            dist.ln()
        } else {
            let k = (c - 1) / 2;
            if (c - 1) % 2 == 0 {
                attrs[k][o]
            } else {
                attrs[k][d]
            }
        }
    })
}

/// Expected fraction of zero cells at the given linear predictors.
pub fn expected_zero_fraction(family: Family, eta: &[f64], dispersion: f64) -> CliResult<f64> {
    let gh = GaussHermite::new(odmix::model::DEFAULT_QUADRATURE_ORDER)?;
    let mut total = 0.0;
    for &e in eta {
        let mu = e.exp();
        let lp = match family {
            Family::PoissonGamma => nb_logpmf(0, mu, dispersion)?,
            Family::PoissonInverseGaussian => pig_logpmf(0, mu, dispersion)?,
            Family::PoissonLognormal => pln_logpmf(0, mu, dispersion, PlnMethod::Quadrature(&gh))?,
        };
        total += lp.exp();
    }
    Ok(total / eta.len() as f64)
}

/// Draws covariates, tunes the intercept if asked, then latent effects and counts.
pub fn synth_generate<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> CliResult<(ODDataset, Truth)> {
    spec.validate()?;
    let pairs = spec.n_pairs();
    let x = design(spec.m, pairs, rng);
    let mut beta = spec.beta.clone();
    let slope_part: Vec<f64> = (0..x.nrows())
        .map(|i| (1..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum())
        .collect();
    if let Some(target) = spec.zero_fraction {
        let zf = |b0: f64| -> CliResult<f64> {
            let eta: Vec<f64> = slope_part.iter().map(|s| s + b0).collect();
            expected_zero_fraction(spec.family, &eta, spec.dispersion)
        };
        // zero fraction decreases in the intercept
        let (mut lo, mut hi) = (-40.0, 40.0);
        if zf(hi)? > target || zf(lo)? < target {
            return Err(CliError::Validation(format!(
                "target zero fraction {target} is not attainable for this dispersion"
            )));
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if zf(mid)? > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-10 {
                break;
            }
        }
        beta[0] = 0.5 * (lo + hi);
    }
    let mut y = Vec::with_capacity(x.nrows());
    let mut u = Vec::with_capacity(x.nrows());
    for s in &slope_part {
        let mu = (s + beta[0]).exp();
        let ui = draw_mixing_effect(spec.family, spec.dispersion, rng)?;
        let rate = mu * ui;
        let yi = if rate > 0.0 {
            Poisson::new(rate)
                .map_err(|e| CliError::Numerical(format!("synthetic rate {rate}: {e}")))?
                .sample(rng) as u64
        } else {
            0
        };
        u.push(ui);
        y.push(yi);
    }
    let zones = (1..=spec.m).map(|z| format!("Z{z:03}")).collect();
    let data = ODDataset::new(zones, y, x, covariate_names(pairs))?;
    Ok((
        data,
        Truth {
            family: spec.family,
            beta,
            dispersion: spec.dispersion,
            u,
        },
    ))
}
