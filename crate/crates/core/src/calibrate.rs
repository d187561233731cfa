//! Maximum-likelihood fits that fix the location and scale of the
//! independence proposal.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Gamma as GammaCdf, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{Family, ModelSpec, ODDataset, ParamPoint, Posterior, MAX_LINEAR_PREDICTOR};

/// Guard on the log-dispersion during optimisation.
pub const LOG_DISPERSION_GUARD: f64 = 25.0;

const MAX_ITERATIONS: usize = 500;
const FD_STEP: f64 = 1e-5;
/// Line-search steps below this count as no progress.
const STALL_STEP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MlFit {
    pub beta_hat: Vec<f64>,
    pub dispersion_hat: f64,
    pub cov_beta: DMatrix<f64>,
    pub var_dispersion: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// The log-dispersion ended on its guard or on the flat Poisson ridge
    /// (no detectable overdispersion); `var_dispersion` is then infinite and
    /// `cov_beta` is conditional on the dispersion.
    pub dispersion_at_guard: bool,
}

/// Starting point: two Poisson Fisher-scoring steps for beta, then a
/// method-of-moments estimate of Var(u) for the dispersion.
pub fn initial_point(family: Family, data: &ODDataset) -> Result<ParamPoint> {
    let k = data.n_coef();
    let ybar = data.y.iter().sum::<u64>() as f64 / data.n() as f64;
    let mut beta = vec![0.0; k];
    beta[0] = (ybar + 0.5).ln();
    for _ in 0..2 {
        let eta = data.linear_predictor(&beta);
        let mut xtwx = DMatrix::zeros(k, k);
        let mut xtwz = DVector::zeros(k);
        for (i, &e) in eta.iter().enumerate() {
            let e = e.clamp(-30.0, 30.0);
            let mu = e.exp();
            let z = e + (data.y[i] as f64 - mu) / mu;
            let row = data.x.row(i);
            for a in 0..k {
                xtwz[a] += mu * row[a] * z;
                for b in 0..=a {
                    xtwx[(a, b)] += mu * row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                xtwx[(b, a)] = xtwx[(a, b)];
            }
        }
        let chol = Cholesky::new(xtwx).ok_or(Error::SingularInformation)?;
        let next = chol.solve(&xtwz);
        beta = next.iter().copied().collect();
    }
    let eta = data.linear_predictor(&beta);
    if eta.iter().any(|e| !(e.abs() < MAX_LINEAR_PREDICTOR)) {
        beta = vec![0.0; k];
        beta[0] = (ybar + 0.5).ln();
    }
    let mus = data.means(&beta)?;
    let (num, den) = data.y.iter().zip(&mus).fold((0.0, 0.0), |(n, d), (&y, &mu)| {
        let r = y as f64 - mu;
        (n + r * r - y as f64, d + mu * mu)
    });
    let mix_var = (num / den).clamp(1e-3, 1e3);
    ParamPoint::new(beta, family.dispersion_for_mixing_variance(mix_var))
}

struct Objective<'a> {
    post: Posterior<'a>,
    k: usize,
}

impl Objective<'_> {
    fn point(&self, z: &[f64]) -> ParamPoint {
        ParamPoint {
            beta: z[..self.k].to_vec(),
            dispersion: z[self.k].exp(),
        }
    }

    /// Negative log-likelihood, `+inf` outside the admissible region.
    fn value(&self, z: &[f64]) -> f64 {
        match self.post.log_likelihood(&self.point(z)) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    }

    fn value_and_grad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (ll, gb) = self.post.log_likelihood_with_grad(&self.point(z))?;
        let mut g: Vec<f64> = gb.iter().map(|v| -v).collect();
        let mut up = z.to_vec();
        let mut dn = z.to_vec();
        up[self.k] += FD_STEP;
        dn[self.k] -= FD_STEP;
        g.push((self.value(&up) - self.value(&dn)) / (2.0 * FD_STEP));
        if !g.iter().all(|v| v.is_finite()) || !ll.is_finite() {
            return Err(Error::Diagnostics("non-finite gradient during maximum-likelihood fit".into()));
        }
        Ok((-ll, g))
    }
}

fn projected_norm(z: &[f64], g: &[f64], k: usize) -> f64 {
    g.iter()
        .enumerate()
        .map(|(j, &gj)| {
            let at_upper = j == k && z[k] >= LOG_DISPERSION_GUARD && gj < 0.0;
            let at_lower = j == k && z[k] <= -LOG_DISPERSION_GUARD && gj > 0.0;
            if at_upper || at_lower {
                0.0
            } else {
                gj.abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Maximises the marginal log-likelihood (no priors) over `(beta, ln d)` by
/// BFGS with a backtracking line search. Converged means the projected
/// gradient sup-norm is below `tol`.
pub fn fit_ml(spec: &ModelSpec, data: &ODDataset, init: &ParamPoint, tol: f64) -> Result<MlFit> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let k = data.n_coef();
    if init.beta.len() != k {
        return Err(Error::domain("initial beta has the wrong length"));
    }
    let obj = Objective {
        post: Posterior::new(spec, data)?,
        k,
    };
    let dim = k + 1;
    let clamp = |z: &mut Vec<f64>| z[k] = z[k].clamp(-LOG_DISPERSION_GUARD, LOG_DISPERSION_GUARD);
    let mut z = init.beta.clone();
    z.push(init.dispersion.ln());
    clamp(&mut z);
    let (mut f, mut g) = obj.value_and_grad(&z)?;
    let mut h = initial_inverse_hessian(&obj, &z)?;
    let mut tail = vec![f];
    let mut iterations = 0;
    let mut restarted = false;
    let mut converged = projected_norm(&z, &g, k) < tol;
    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let mut dir: Vec<f64> = (-(&h * &gv)).iter().copied().collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        if !(slope < 0.0) {
            h = DMatrix::identity(dim, dim) * (1.0 / gv.amax().max(1.0));
            dir = (-(&h * &gv)).iter().copied().collect();
            slope = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = z.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            clamp(&mut trial);
            let ft = obj.value(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope.min(0.0) {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        let stalled = step < STALL_STEP;
        let Some(next) = accepted.filter(|_| !stalled) else {
            // the quasi-Newton direction has degenerated: restart once from
            // the expected-information curvature before giving up
            if restarted {
                break;
            }
            restarted = true;
            h = initial_inverse_hessian(&obj, &z)?;
            continue;
        };
        restarted = false;
        let (fn_, gn) = obj.value_and_grad(&next)?;
        let s = DVector::from_iterator(dim, next.iter().zip(&z).map(|(a, b)| a - b));
        let yv = DVector::from_iterator(dim, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        z = next;
        f = fn_;
        g = gn;
        tail.push(f);
        converged = projected_norm(&z, &g, k) < tol;
    }
    let grad_norm = projected_norm(&z, &g, k);
    if !converged {
        let start = tail.len().saturating_sub(5);
        return Err(Error::FitNotConverged {
            iterations,
            grad_norm,
            tail: tail[start..].to_vec(),
        });
    }
    let mut at_guard = z[k].abs() >= LOG_DISPERSION_GUARD;
    let (cov_beta, var_log_d) = match covariance(&obj, &z, at_guard) {
        Err(Error::SingularInformation) if !at_guard && on_poisson_ridge(spec.family, z[k]) => {
            at_guard = true;
            covariance(&obj, &z, true)?
        }
        other => other?,
    };
    let d = z[k].exp();
    Ok(MlFit {
        beta_hat: z[..k].to_vec(),
        dispersion_hat: d,
        cov_beta,
        var_dispersion: if at_guard { f64::INFINITY } else { d * d * var_log_d },
        log_likelihood: -f,
        converged,
        iterations,
        dispersion_at_guard: at_guard,
    })
}

/// Far enough towards the Poisson limit that the likelihood is flat in the
/// dispersion.
fn on_poisson_ridge(family: Family, log_d: f64) -> bool {
    family.mixing_variance(log_d.exp()) < 1e-3
}

fn initial_inverse_hessian(obj: &Objective<'_>, z: &[f64]) -> Result<DMatrix<f64>> {
    let k = obj.k;
    let p = obj.point(z);
    let mus = obj.post.data().means(&p.beta)?;
    let x = &obj.post.data().x;
    let mut info = DMatrix::zeros(k + 1, k + 1);
    let mix_var = obj.post.spec().family.mixing_variance(p.dispersion);
    for (i, &mu) in mus.iter().enumerate() {
        let w = mu / (1.0 + mu * mix_var);
        for a in 0..k {
            for b in 0..k {
                info[(a, b)] += w * x[(i, a)] * x[(i, b)];
            }
        }
    }
    let h = 1e-3;
    let f0 = obj.value(z);
    let mut up = z.to_vec();
    let mut dn = z.to_vec();
    up[k] += h;
    dn[k] -= h;
    let curv = (obj.value(&up) - 2.0 * f0 + obj.value(&dn)) / (h * h);
    info[(k, k)] = if curv.is_finite() && curv > 1e-8 { curv } else { 1.0 };
    Ok(match Cholesky::new(info) {
        Some(c) => c.inverse(),
        None => DMatrix::identity(k + 1, k + 1),
    })
}

/// Inverse of the finite-difference observed information in `(beta, ln d)`.
fn covariance(obj: &Objective<'_>, z: &[f64], at_guard: bool) -> Result<(DMatrix<f64>, f64)> {
    let k = obj.k;
    let dim = if at_guard { k } else { k + 1 };
    let mut hess = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let h = FD_STEP * z[j].abs().max(1.0);
        let mut up = z.to_vec();
        let mut dn = z.to_vec();
        up[j] += h;
        dn[j] -= h;
        let (_, gu) = obj.value_and_grad(&up)?;
        let (_, gd) = obj.value_and_grad(&dn)?;
        for i in 0..dim {
            hess[(i, j)] = (gu[i] - gd[i]) / (2.0 * h);
        }
    }
    let hess = (&hess + hess.transpose()) * 0.5;
    let chol = Cholesky::new(hess).ok_or(Error::SingularInformation)?;
    let cov = chol.inverse();
    let cov_beta = cov.view((0, 0), (k, k)).into_owned();
    let var_log_d = if at_guard { f64::INFINITY } else { cov[(k, k)] };
    if !cov.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularInformation);
    }
    Ok((cov_beta, var_log_d))
}

/// Fixed independence proposal: `N(beta_hat, V)` times `Gamma(shape, rate)`
/// for the dispersion, drawn jointly.
#[derive(Debug, Clone)]
pub struct ProposalSpec {
    pub beta_mean: Vec<f64>,
    pub beta_cov: DMatrix<f64>,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    log_norm: f64,
}

impl ProposalSpec {
    pub fn new(beta_mean: Vec<f64>, beta_cov: DMatrix<f64>, gamma_shape: f64, gamma_rate: f64) -> Result<Self> {
        let k = beta_mean.len();
        if beta_cov.nrows() != k || beta_cov.ncols() != k {
            return Err(Error::Config("proposal covariance has the wrong shape".into()));
        }
        if !(gamma_shape > 0.0 && gamma_rate > 0.0 && gamma_shape.is_finite() && gamma_rate.is_finite()) {
            return Err(Error::Config(format!(
                "gamma proposal needs positive finite shape and rate, got ({gamma_shape}, {gamma_rate})"
            )));
        }
        let (chol, log_det) = if k == 0 {
            (None, 0.0)
        } else {
            let c = Cholesky::new(beta_cov.clone())
                .ok_or_else(|| Error::Config("proposal covariance must be positive definite".into()))?;
            let ld: f64 = c.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            (Some(c), ld)
        };
        let log_norm = -0.5 * (k as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self {
            beta_mean,
            beta_cov,
            gamma_shape,
            gamma_rate,
            chol,
            log_norm,
        })
    }

    /// Shape and rate matching the given mean and variance.
    pub fn gamma_from_moments(mean: f64, var: f64) -> (f64, f64) {
        (mean * mean / var, mean / var)
    }

    pub fn dim(&self) -> usize {
        self.beta_mean.len()
    }

    /// Widens the proposal: the beta covariance and the dispersion variance
    /// are both multiplied by `factor` with the means held fixed.
    pub fn inflated(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Config(format!("inflation factor must be positive, got {factor}")));
        }
        Self::new(
            self.beta_mean.clone(),
            &self.beta_cov * factor,
            self.gamma_shape / factor,
            self.gamma_rate / factor,
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamPoint {
        let beta = match &self.chol {
            None => Vec::new(),
            Some(c) => {
                let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample(StandardNormal)));
                let b = c.l() * z;
                b.iter().zip(&self.beta_mean).map(|(v, m)| v + m).collect()
            }
        };
        let g = Gamma::new(self.gamma_shape, 1.0 / self.gamma_rate).expect("validated gamma parameters");
        ParamPoint {
            beta,
            dispersion: g.sample(rng),
        }
    }

    /// Normalised joint log-density.
    pub fn log_density(&self, p: &ParamPoint) -> f64 {
        let quad = match &self.chol {
            None => 0.0,
            Some(c) => {
                let r = DVector::from_iterator(self.dim(), p.beta.iter().zip(&self.beta_mean).map(|(b, m)| b - m));
                let w = c.l().solve_lower_triangular(&r).expect("triangular solve");
                w.norm_squared()
            }
        };
        let (a, b, d) = (self.gamma_shape, self.gamma_rate, p.dispersion);
        let gamma = a * b.ln() - ln_gamma(a) + (a - 1.0) * d.ln() - b * d;
        self.log_norm - 0.5 * quad + gamma
    }

    /// Every coordinate at the `q` quantile of its proposal marginal.
    pub fn quantile_point(&self, q: f64) -> Result<ParamPoint> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Config(format!("start quantile must lie in (0, 1), got {q}")));
        }
        let z = Normal::standard().inverse_cdf(q);
        let beta = (0..self.dim())
            .map(|j| self.beta_mean[j] + z * self.beta_cov[(j, j)].sqrt())
            .collect();
        let g = GammaCdf::new(self.gamma_shape, self.gamma_rate).map_err(|e| Error::Config(e.to_string()))?;
        Ok(ParamPoint {
            beta,
            dispersion: g.inverse_cdf(q),
        })
    }
}

/// Moment-matched proposal from a converged fit.
pub fn build_proposals(fit: &MlFit) -> Result<ProposalSpec> {
    if !fit.converged {
        return Err(Error::Config("cannot build proposals from a non-converged fit".into()));
    }
    if !(fit.var_dispersion.is_finite() && fit.var_dispersion > 0.0) {
        return Err(Error::Config(
            "the fitted dispersion sits on its guard, so the data show no usable overdispersion for this family".into(),
        ));
    }
    let (shape, rate) = ProposalSpec::gamma_from_moments(fit.dispersion_hat, fit.var_dispersion);
    ProposalSpec::new(fit.beta_hat.clone(), fit.cov_beta.clone(), shape, rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::draw_mixing_effect;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Poisson;

    fn simulate(fam: Family, beta: &[f64], d: Option<f64>, m: usize, seed: u64) -> ODDataset {
        let n = m * m;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = beta.len();
        let x = DMatrix::from_fn(n, k, |_, j| if j == 0 { 1.0 } else { rng.sample::<f64, _>(StandardNormal) * 0.5 });
        let eta = &x * DVector::from_column_slice(beta);
        let y = eta
            .iter()
            .map(|e| {
                let u = d.map_or(1.0, |d| draw_mixing_effect(fam, d, &mut rng).unwrap());
                Poisson::new(e.exp() * u).unwrap().sample(&mut rng) as u64
            })
            .collect();
        let names = (0..k).map(|j| format!("c{j}")).collect();
        ODDataset::new((0..m).map(|i| i.to_string()).collect(), y, x, names).unwrap()
    }

    fn fit(fam: Family, data: &ODDataset) -> MlFit {
        let spec = ModelSpec::with_gprior(fam, 1e-3, data).unwrap();
        let init = initial_point(fam, data).unwrap();
        fit_ml(&spec, data, &init, 1e-5).unwrap()
    }

    #[test]
    fn recovers_pg_truth() {
        let data = simulate(Family::PoissonGamma, &[1.0, -0.5], Some(1.0), 71, 5);
        let f = fit(Family::PoissonGamma, &data);
        assert!(f.converged);
        for (j, t) in [1.0, -0.5].iter().enumerate() {
            let se = f.cov_beta[(j, j)].sqrt();
            assert!((f.beta_hat[j] - t).abs() < 3.0 * se, "coef {j}: {} se {se}", f.beta_hat[j]);
        }
        assert!((f.dispersion_hat - 1.0).abs() < 4.0 * f.var_dispersion.sqrt());
    }

    #[test]
    fn poisson_data_drive_theta_up() {
        // without sample overdispersion the NB likelihood increases all the way to theta = inf
        let mut hit_guard = 0;
        for seed in 0..8 {
            let data = simulate(Family::PoissonGamma, &[1.5, 0.4], None, 40, seed);
            let f = fit(Family::PoissonGamma, &data);
            let mus = data.means(&f.beta_hat).unwrap();
            let excess: f64 = data.y.iter().zip(&mus).map(|(&y, mu)| (y as f64 - mu).powi(2) - y as f64).sum();
            assert!(f.dispersion_hat > 20.0, "seed {seed}: {}", f.dispersion_hat);
            if excess <= 0.0 {
                assert!(f.dispersion_hat > 1e3 || f.dispersion_at_guard, "seed {seed}: {}", f.dispersion_hat);
                assert!(build_proposals(&f).is_err() || f.dispersion_hat > 1e3);
                hit_guard += 1;
            }
        }
        assert!(hit_guard > 0);
    }

    #[test]
    fn intercept_only_mean_is_sample_mean() {
        let data = simulate(Family::PoissonGamma, &[1.3], Some(0.8), 30, 2);
        let f = fit(Family::PoissonGamma, &data);
        let ybar = data.y.iter().sum::<u64>() as f64 / data.n() as f64;
        assert!((f.beta_hat[0] - ybar.ln()).abs() < 1e-6);
    }

    #[test]
    fn gradient_vanishes_at_optimum_for_all_families() {
        for (fam, d) in [
            (Family::PoissonGamma, 1.2),
            (Family::PoissonLognormal, 0.6),
            (Family::PoissonInverseGaussian, 0.8),
        ] {
            let data = simulate(fam, &[0.8, 0.3, -0.2], Some(d), 25, 11);
            let f = fit(fam, &data);
            let spec = ModelSpec::with_gprior(fam, 1e-3, &data).unwrap();
            let post = Posterior::new(&spec, &data).unwrap();
            let mut z = f.beta_hat.clone();
            z.push(f.dispersion_hat.ln());
            for j in 0..z.len() {
                let h = 1e-5;
                let eval = |v: f64| {
                    let mut w = z.clone();
                    w[j] = v;
                    let p = ParamPoint::new(w[..3].to_vec(), w[3].exp()).unwrap();
                    post.log_likelihood(&p).unwrap()
                };
                let fd = (eval(z[j] + h) - eval(z[j] - h)) / (2.0 * h);
                assert!(fd.abs() < 1e-4, "{fam} coord {j}: {fd}");
            }
        }
    }

    #[test]
    fn observation_order_does_not_matter() {
        let data = simulate(Family::PoissonInverseGaussian, &[1.0, 0.5], Some(0.5), 20, 3);
        let n = data.n();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let x = DMatrix::from_fn(n, 2, |i, j| data.x[(perm[i], j)]);
        let permuted = ODDataset {
            y: perm.iter().map(|&i| data.y[i]).collect(),
            x,
            ..data.clone()
        };
        let a = fit(Family::PoissonInverseGaussian, &data);
        let b = fit(Family::PoissonInverseGaussian, &permuted);
        for j in 0..2 {
            assert!((a.beta_hat[j] - b.beta_hat[j]).abs() < 1e-4);
        }
        assert!((a.dispersion_hat.ln() - b.dispersion_hat.ln()).abs() < 1e-4);
    }

    #[test]
    fn moment_matching_examples() {
        let (a, b) = ProposalSpec::gamma_from_moments(1.0, 0.25);
        assert!((a - 4.0).abs() < 1e-12 && (b - 4.0).abs() < 1e-12);
        let (a, b) = ProposalSpec::gamma_from_moments(0.377, 1e-4);
        assert!((a - 1421.29).abs() < 1e-9);
        assert!((b - 3770.0).abs() < 1e-9);
        assert!((a / b - 0.377).abs() < 1e-14);
    }

    #[test]
    fn gamma_proposal_round_trip() {
        let fit = MlFit {
            beta_hat: vec![0.2],
            dispersion_hat: 0.377,
            cov_beta: DMatrix::from_element(1, 1, 0.01),
            var_dispersion: 0.0001,
            log_likelihood: 0.0,
            converged: true,
            iterations: 1,
            dispersion_at_guard: false,
        };
        let prop = build_proposals(&fit).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| prop.sample(&mut rng).dispersion).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((mean - 0.377).abs() < 4.0 * (1e-4 / n as f64).sqrt());
        // Var(s^2) = 2 sigma^4 / n plus the excess-kurtosis term 6/shape
        let se_var = 1e-4 * ((2.0 + 6.0 / prop.gamma_shape) / n as f64).sqrt();
        assert!((var - 1e-4).abs() < 4.0 * se_var);
    }

    #[test]
    fn non_converged_fit_is_refused() {
        let fit = MlFit {
            beta_hat: vec![0.0],
            dispersion_hat: 1.0,
            cov_beta: DMatrix::identity(1, 1),
            var_dispersion: 1.0,
            log_likelihood: 0.0,
            converged: false,
            iterations: 500,
            dispersion_at_guard: false,
        };
        assert!(build_proposals(&fit).is_err());
    }

    #[test]
    fn proposal_density_integrates_consistently() {
        let prop = ProposalSpec::new(vec![0.5], DMatrix::from_element(1, 1, 0.04), 4.0, 4.0).unwrap();
        let p = ParamPoint::new(vec![0.5], 1.0).unwrap();
        let normal = -0.5 * (2.0 * std::f64::consts::PI * 0.04).ln();
        let gamma = 4.0 * 4f64.ln() - ln_gamma(4.0) + 3.0 * 0.0 - 4.0;
        assert!((prop.log_density(&p) - normal - gamma).abs() < 1e-12);
        let median = prop.quantile_point(0.5).unwrap();
        assert!((median.beta[0] - 0.5).abs() < 1e-12);
    }
}
