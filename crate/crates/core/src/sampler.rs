//! Independence-chain Metropolis–Hastings, multi-chain bookkeeping and
//! convergence diagnostics.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::calibrate::ProposalSpec;
use crate::error::{Error, Result};
use crate::model::ParamPoint;
use crate::rng::chain_seeds;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seeds: Vec<u64>,
    /// One proposal quantile level per chain, used for every coordinate of
    /// that chain's starting point.
    pub start_quantiles: Vec<f64>,
    /// Emit a line on stderr at every 10% of each chain.
    pub progress: bool,
}

impl ChainConfig {
    pub const DEFAULT_START_QUANTILES: [f64; 5] = [0.10, 0.30, 0.50, 0.70, 0.90];

    /// Five chains of 4200 iterations, 200 burn-in, thinning 5, seeds split
    /// from `master_seed`.
    pub fn with_master_seed(master_seed: u64) -> Self {
        Self {
            n_chains: 5,
            iterations: 4200,
            burn_in: 200,
            thin: 5,
            seeds: chain_seeds(master_seed, 5),
            start_quantiles: Self::DEFAULT_START_QUANTILES.to_vec(),
            progress: false,
        }
    }

    /// Changes the chain count, re-deriving seeds and spreading start
    /// quantiles evenly over (0, 1) when the defaults no longer fit.
    pub fn with_chains(mut self, n_chains: usize, master_seed: u64) -> Self {
        self.n_chains = n_chains;
        self.seeds = chain_seeds(master_seed, n_chains);
        if self.start_quantiles.len() != n_chains {
            self.start_quantiles = (0..n_chains).map(|c| (c as f64 + 0.5) / n_chains as f64).collect();
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::Config("at least one chain is required".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than the iteration count ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thinning interval must be at least 1".into()));
        }
        if self.seeds.len() != self.n_chains || self.start_quantiles.len() != self.n_chains {
            return Err(Error::Config("need exactly one seed and one start quantile per chain".into()));
        }
        for i in 0..self.seeds.len() {
            if self.seeds[i + 1..].contains(&self.seeds[i]) {
                return Err(Error::Config("chain seeds must be distinct".into()));
            }
        }
        if self.start_quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return Err(Error::Config("start quantiles must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// 1-based iteration numbers that are kept: past the burn-in and on the
    /// thinning grid counted from the end of the burn-in.
    pub fn retained_iterations(&self) -> Vec<usize> {
        (self.burn_in + self.thin..=self.iterations).step_by(self.thin).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    /// `draws[c][t]` is the t-th retained state of chain c.
    pub draws: Vec<Vec<ParamPoint>>,
    /// Fraction of accepted proposals over all iterations, burn-in included.
    pub acceptance_rate: Vec<f64>,
    /// Iteration number of each retained draw (shared by all chains).
    pub iterations: Vec<usize>,
    pub config: ChainConfig,
}

impl ChainSet {
    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn chain_len(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    /// Number of coordinates: beta plus the dispersion.
    pub fn dim(&self) -> usize {
        self.draws
            .first()
            .and_then(|c| c.first())
            .map_or(0, |p| p.beta.len() + 1)
    }

    /// Draws of all chains in chain order.
    pub fn pooled(&self) -> impl Iterator<Item = &ParamPoint> {
        self.draws.iter().flatten()
    }

    pub fn n_pooled(&self) -> usize {
        self.draws.iter().map(Vec::len).sum()
    }

    /// Coordinate `j` of chain `c` (`j == beta.len()` is the dispersion).
    pub fn coordinate(&self, c: usize, j: usize) -> Vec<f64> {
        self.draws[c]
            .iter()
            .map(|p| if j < p.beta.len() { p.beta[j] } else { p.dispersion })
            .collect()
    }

    /// Pooled posterior mean of every coordinate.
    pub fn posterior_mean(&self) -> ParamPoint {
        let n = self.n_pooled() as f64;
        let k = self.dim().saturating_sub(1);
        let mut beta = vec![0.0; k];
        let mut d = 0.0;
        for p in self.pooled() {
            for (b, v) in beta.iter_mut().zip(&p.beta) {
                *b += v;
            }
            d += p.dispersion;
        }
        ParamPoint {
            beta: beta.into_iter().map(|b| b / n).collect(),
            dispersion: d / n,
        }
    }
}

/// Runs `config.n_chains` independence chains in parallel.
///
/// Each step proposes `(beta*, d*)` jointly from `proposal` and accepts with
/// probability `min(1, pi(x*) q(x) / (pi(x) q(x*)))`, evaluated in log space.
/// Chain c draws from `ChaCha8Rng::seed_from_u64(config.seeds[c])`.
pub fn mh_run<F>(target: &F, proposal: &ProposalSpec, config: &ChainConfig) -> Result<ChainSet>
where
    F: Fn(&ParamPoint) -> Result<f64> + Sync,
{
    config.validate()?;
    let results: Vec<Result<(Vec<ParamPoint>, f64)>> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(target, proposal, config, c))
        .collect();
    let mut draws = Vec::with_capacity(config.n_chains);
    let mut acceptance_rate = Vec::with_capacity(config.n_chains);
    for r in results {
        let (d, a) = r?;
        draws.push(d);
        acceptance_rate.push(a);
    }
    Ok(ChainSet {
        draws,
        acceptance_rate,
        iterations: config.retained_iterations(),
        config: config.clone(),
    })
}

fn run_chain<F>(target: &F, proposal: &ProposalSpec, config: &ChainConfig, c: usize) -> Result<(Vec<ParamPoint>, f64)>
where
    F: Fn(&ParamPoint) -> Result<f64> + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seeds[c]);
    let mut current = proposal.quantile_point(config.start_quantiles[c])?;
    let mut log_pi = target(&current)?;
    if !log_pi.is_finite() {
        return Err(Error::Config(format!(
            "target is not finite at the starting point of chain {c} (quantile {})",
            config.start_quantiles[c]
        )));
    }
    let mut log_q = proposal.log_density(&current);
    let mut accepted = 0usize;
    let mut kept = Vec::with_capacity(config.retained_iterations().len());
    let tick = (config.iterations / 10).max(1);
    for t in 1..=config.iterations {
        let cand = proposal.sample(&mut rng);
        let cand_pi = target(&cand)?;
        let cand_q = proposal.log_density(&cand);
        let log_ratio = (cand_pi - log_pi) + (log_q - cand_q);
        let u: f64 = rng.random();
        if cand_pi.is_finite() && u.ln() < log_ratio {
            current = cand;
            log_pi = cand_pi;
            log_q = cand_q;
            accepted += 1;
        }
        if t > config.burn_in && (t - config.burn_in) % config.thin == 0 {
            kept.push(current.clone());
        }
        if config.progress && t % tick == 0 {
            eprintln!(
                "chain {c}: {}% ({t}/{}), acceptance {:.3}",
                100 * t / config.iterations,
                config.iterations,
                accepted as f64 / t as f64
            );
        }
    }
    if accepted == 0 {
        return Err(Error::Diagnostics(format!(
            "chain {c} accepted no proposals in {} iterations; recalibrate the proposal (refit or inflate its scale)",
            config.iterations
        )));
    }
    Ok((kept, accepted as f64 / config.iterations as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsrfReport {
    /// Per coordinate (beta..., dispersion); `+inf` for degenerate coordinates.
    pub univariate: Vec<f64>,
    pub multivariate: f64,
}

impl PsrfReport {
    pub fn max_univariate(&self) -> f64 {
        self.univariate.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Univariate PSRF from per-chain sequences of equal length `L`:
/// `sqrt(((L-1)/L W + B/L) / W)`.
pub fn psrf_univariate(chains: &[Vec<f64>]) -> f64 {
    let l = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b_over_l = sample_var(&means);
    let w = mean(&chains.iter().map(|c| sample_var(c)).collect::<Vec<_>>());
    if !(w > 0.0) {
        return f64::INFINITY;
    }
    (((l - 1.0) / l * w + b_over_l) / w).sqrt()
}

/// Between/within multivariate PSRF: `(L-1)/L + (m+1)/m lambda_1` with
/// `lambda_1` the largest eigenvalue of `W^{-1} B / L`.
pub fn psrf_multivariate(chains: &[Vec<Vec<f64>>]) -> f64 {
    let m = chains.len();
    let l = chains[0].len();
    let d = chains[0][0].len();
    let mut w = DMatrix::zeros(d, d);
    let mut means = Vec::with_capacity(m);
    for chain in chains {
        let mu = chain
            .iter()
            .fold(DVector::zeros(d), |acc, x| acc + DVector::from_column_slice(x))
            / l as f64;
        for x in chain {
            let r = DVector::from_column_slice(x) - &mu;
            w += &r * r.transpose();
        }
        means.push(mu);
    }
    w /= (m * (l - 1)) as f64;
    let grand = means.iter().fold(DVector::zeros(d), |acc, x| acc + x) / m as f64;
    let mut b_over_l = DMatrix::zeros(d, d);
    for mu in &means {
        let r = mu - &grand;
        b_over_l += &r * r.transpose();
    }
    b_over_l /= (m - 1) as f64;
    let Some(chol) = Cholesky::new(w) else {
        return f64::INFINITY;
    };
    let linv = chol.l().try_inverse().expect("triangular factor is invertible");
    let sym = &linv * b_over_l * linv.transpose();
    let lambda = SymmetricEigen::new((&sym + sym.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    (l as f64 - 1.0) / l as f64 + (m as f64 + 1.0) / m as f64 * lambda
}

/// Gelman–Rubin diagnostics for every coordinate and the Brooks–Gelman
/// multivariate form over all coordinates.
pub fn psrf(chains: &ChainSet) -> Result<PsrfReport> {
    if chains.n_chains() < 2 {
        return Err(Error::Diagnostics("PSRF needs at least two chains".into()));
    }
    if chains.chain_len() < 10 {
        return Err(Error::Diagnostics("PSRF needs at least 10 draws per chain".into()));
    }
    let dim = chains.dim();
    let mut univariate = Vec::with_capacity(dim);
    for j in 0..dim {
        let seqs: Vec<Vec<f64>> = (0..chains.n_chains()).map(|c| chains.coordinate(c, j)).collect();
        let r = psrf_univariate(&seqs);
        if r.is_infinite() {
            log::warn!("coordinate {j} has zero within-chain variance; PSRF reported as infinite");
        }
        univariate.push(r);
    }
    let seqs: Vec<Vec<Vec<f64>>> = chains.draws.iter().map(|c| c.iter().map(ParamPoint::to_vec).collect()).collect();
    let multivariate = if univariate.iter().any(|r| r.is_infinite()) {
        f64::INFINITY
    } else {
        psrf_multivariate(&seqs)
    };
    Ok(PsrfReport { univariate, multivariate })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateSummary {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Linear-interpolation sample quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pooled posterior mean, sd and equal-tail `prob` interval per coordinate.
pub fn summarize(chains: &ChainSet, prob: f64) -> Result<Vec<CoordinateSummary>> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Config(format!("interval probability must lie in (0, 1), got {prob}")));
    }
    if chains.n_pooled() < 100 {
        return Err(Error::Diagnostics(format!(
            "summaries need at least 100 pooled draws, have {}",
            chains.n_pooled()
        )));
    }
    Ok((0..chains.dim())
        .map(|j| {
            let mut v: Vec<f64> = (0..chains.n_chains()).flat_map(|c| chains.coordinate(c, j)).collect();
            summarize_values(&mut v, prob)
        })
        .collect())
}

pub(crate) fn summarize_values(v: &mut [f64], prob: f64) -> CoordinateSummary {
    let m = mean(v);
    let sd = if v.len() > 1 { sample_var(v).max(0.0).sqrt() } else { 0.0 };
    v.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - prob);
    CoordinateSummary {
        mean: m,
        sd,
        lower: quantile_sorted(v, tail),
        upper: quantile_sorted(v, 1.0 - tail),
    }
}
