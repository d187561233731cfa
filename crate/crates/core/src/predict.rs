//! Latent-effect draws, posterior predictive replication, Bayesian p-values
//! and information criteria.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;

use crate::distmath::gig::{sample_unchecked, GigParams};
use crate::distmath::pmf::ln_factorial;
use crate::error::{Error, Result};
use crate::model::{Family, ModelSpec, ODDataset, ParamPoint, Posterior};
use crate::rng::{stream, Purpose};
use crate::sampler::ChainSet;

/// Number of posterior draws behind the hierarchical DIC.
pub const HIERARCHICAL_DIC_DRAWS: usize = 500;

/// Draws `u_i` from its full conditional given `y_i`, `mu_i` and the
/// dispersion: `Gamma(y + theta, mu + theta)` for PG and
/// `GIG(y - 1/2, 2 mu + zeta, zeta)` for PIG.
pub fn draw_latent_u<R: Rng + ?Sized>(family: Family, y: u64, mu: f64, dispersion: f64, rng: &mut R) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::domain(format!("mu must be positive and finite, got {mu}")));
    }
    if !(dispersion > 0.0 && dispersion.is_finite()) {
        return Err(Error::domain(format!("dispersion must be positive, got {dispersion}")));
    }
    match family {
        Family::PoissonGamma => {
            let g = Gamma::new(y as f64 + dispersion, 1.0 / (mu + dispersion)).map_err(|e| Error::domain(e.to_string()))?;
            // the gamma sampler can underflow to 0 for tiny shapes
            Ok(g.sample(rng).max(f64::MIN_POSITIVE))
        }
        Family::PoissonInverseGaussian => {
            let p = GigParams::new(y as f64 - 0.5, 2.0 * mu + dispersion, dispersion)?;
            Ok(sample_unchecked(p, rng).max(f64::MIN_POSITIVE))
        }
        Family::PoissonLognormal => Err(Error::UnsupportedFamily {
            family,
            op: "closed-form latent-effect conditional",
        }),
    }
}

/// Conjugate draw of the dispersion given latent effects `u`:
/// `zeta | u ~ Gamma(a + n/2, a + sum (u - 1)^2 / (2u))` for PIG and
/// `sigma^2 | u ~ InvGamma(a + n/2, a + sum (ln u)^2 / 2)` for PLN.
pub fn draw_conditional_dispersion<R: Rng + ?Sized>(family: Family, u: &[f64], a: f64, rng: &mut R) -> Result<f64> {
    if u.is_empty() {
        return Err(Error::Empty("latent effect vector"));
    }
    if u.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::domain("latent effects must be positive and finite"));
    }
    if !(a > 0.0) {
        return Err(Error::domain(format!("hyperparameter a must be positive, got {a}")));
    }
    let shape = a + 0.5 * u.len() as f64;
    let rate = match family {
        Family::PoissonInverseGaussian => a + u.iter().map(|v| (v - 1.0) * (v - 1.0) / (2.0 * v)).sum::<f64>(),
        Family::PoissonLognormal => a + 0.5 * u.iter().map(|v| v.ln().powi(2)).sum::<f64>(),
        Family::PoissonGamma => {
            return Err(Error::UnsupportedFamily {
                family,
                op: "conjugate dispersion conditional",
            })
        }
    };
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::domain(e.to_string()))?;
    let draw = g.sample(rng);
    Ok(match family {
        Family::PoissonInverseGaussian => draw,
        _ => 1.0 / draw,
    })
}

/// `count` indices spread evenly over `0..total` (all of them if
/// `count >= total`).
pub fn evenly_spaced(total: usize, count: usize) -> Vec<usize> {
    if count >= total {
        return (0..total).collect();
    }
    (0..count).map(|j| j * total / count).collect()
}

/// One replicated dataset generated from pooled posterior draw `draw_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveRow {
    pub draw_index: usize,
    pub u: Vec<f64>,
    pub y_pred: Vec<u64>,
}

/// `M` replicated datasets; row `m` comes from pooled posterior draw
/// `rows[m].draw_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveEnsemble {
    pub family: Family,
    pub rows: Vec<PredictiveRow>,
}

impl PredictiveEnsemble {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_cells(&self) -> usize {
        self.rows.first().map_or(0, |r| r.u.len())
    }
}

/// Generates predictive rows one at a time. Row for pooled draw `k` uses
/// RNG stream `(Predictive, k)` of the master seed, so any subset of rows
/// can be regenerated independently and in any order.
pub struct PredictiveStream<'a> {
    family: Family,
    pooled: Vec<&'a ParamPoint>,
    data: &'a ODDataset,
    master_seed: u64,
    indices: std::vec::IntoIter<usize>,
}

impl<'a> PredictiveStream<'a> {
    /// Rows for `count` evenly spaced pooled draws (all draws if `None`).
    pub fn new(chains: &'a ChainSet, data: &'a ODDataset, family: Family, master_seed: u64, count: Option<usize>) -> Result<Self> {
        if family == Family::PoissonLognormal {
            return Err(Error::UnsupportedFamily {
                family,
                op: "predictive simulation",
            });
        }
        let pooled: Vec<&ParamPoint> = chains.pooled().collect();
        if pooled.is_empty() {
            return Err(Error::Empty("chain set"));
        }
        if pooled[0].beta.len() != data.n_coef() {
            return Err(Error::domain("chain dimension does not match the design"));
        }
        let indices = evenly_spaced(pooled.len(), count.unwrap_or(pooled.len()));
        Ok(Self {
            family,
            pooled,
            data,
            master_seed,
            indices: indices.into_iter(),
        })
    }

    pub fn row(&self, draw_index: usize) -> Result<PredictiveRow> {
        generate_row(self.family, self.pooled[draw_index], self.data, self.master_seed, draw_index)
    }

    /// Remaining draw indices.
    pub fn remaining(&self) -> &[usize] {
        self.indices.as_slice()
    }
}

impl Iterator for PredictiveStream<'_> {
    type Item = Result<PredictiveRow>;

    fn next(&mut self) -> Option<Self::Item> {
        let k = self.indices.next()?;
        Some(self.row(k))
    }
}

fn generate_row(family: Family, point: &ParamPoint, data: &ODDataset, master_seed: u64, draw_index: usize) -> Result<PredictiveRow> {
    let mut rng = stream(master_seed, Purpose::Predictive, draw_index as u32);
    let mus = data.means(&point.beta)?;
    let mut u = Vec::with_capacity(mus.len());
    let mut y_pred = Vec::with_capacity(mus.len());
    for (&y, &mu) in data.y.iter().zip(&mus) {
        let ui = draw_latent_u(family, y, mu, point.dispersion, &mut rng)?;
        let rate = mu * ui;
        let yp = if rate > 0.0 {
            Poisson::new(rate).map_err(|e| Error::domain(e.to_string()))?.sample(&mut rng) as u64
        } else {
            0
        };
        u.push(ui);
        y_pred.push(yp);
    }
    Ok(PredictiveRow { draw_index, u, y_pred })
}

/// Materialises the predictive ensemble for `count` evenly spaced pooled
/// draws, generating rows in parallel. Identical to collecting a
/// [`PredictiveStream`] with the same arguments.
pub fn predictive_draws(chains: &ChainSet, data: &ODDataset, family: Family, master_seed: u64, count: Option<usize>) -> Result<PredictiveEnsemble> {
    let s = PredictiveStream::new(chains, data, family, master_seed, count)?;
    let rows: Result<Vec<PredictiveRow>> = s
        .remaining()
        .par_iter()
        .map(|&k| s.row(k).map_err(|e| Error::Row { row: k, source: Box::new(e) }))
        .collect();
    Ok(PredictiveEnsemble { family, rows: rows? })
}

/// Table-4 style discrepancies of counts `y` against conditional means `e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancies {
    /// `sum |y - e|`
    pub absolute: f64,
    /// `sum (y - e)^2`
    pub squared: f64,
    /// `-2 sum ln Poisson(y; e)`
    pub deviance: f64,
}

pub fn discrepancies(y: impl Iterator<Item = u64>, e: &[f64]) -> Discrepancies {
    let mut out = Discrepancies {
        absolute: 0.0,
        squared: 0.0,
        deviance: 0.0,
    };
    for (yi, &ei) in y.zip(e) {
        let r = yi as f64 - ei;
        out.absolute += r.abs();
        out.squared += r * r;
        out.deviance += -2.0 * poisson_ln(yi, ei);
    }
    out
}

fn poisson_ln(y: u64, e: f64) -> f64 {
    if y == 0 {
        -e
    } else {
        y as f64 * e.ln() - e - ln_factorial(y)
    }
}

/// Bayesian p-values: fraction of draws where the replicated statistic is at
/// least the observed one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpcPValues {
    pub absolute: f64,
    pub squared: f64,
    pub deviance: f64,
}

pub fn ppc_pvalues(ensemble: &PredictiveEnsemble, data: &ODDataset, chains: &ChainSet) -> Result<PpcPValues> {
    if ensemble.is_empty() {
        return Err(Error::Empty("predictive ensemble"));
    }
    let pooled: Vec<&ParamPoint> = chains.pooled().collect();
    let counts: Result<Vec<[bool; 3]>> = ensemble
        .rows
        .par_iter()
        .map(|row| {
            let point = pooled
                .get(row.draw_index)
                .ok_or_else(|| Error::domain("ensemble row refers to a draw outside the chain set"))?;
            let mus = data.means(&point.beta)?;
            let e: Vec<f64> = mus.iter().zip(&row.u).map(|(m, u)| m * u).collect();
            let obs = discrepancies(data.y.iter().copied(), &e);
            let rep = discrepancies(row.y_pred.iter().copied(), &e);
            Ok([rep.absolute >= obs.absolute, rep.squared >= obs.squared, rep.deviance >= obs.deviance])
        })
        .collect();
    let counts = counts?;
    let m = counts.len() as f64;
    let frac = |j: usize| counts.iter().filter(|c| c[j]).count() as f64 / m;
    Ok(PpcPValues {
        absolute: frac(0),
        squared: frac(1),
        deviance: frac(2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sidedness {
    /// `min(1, 2 min(P(S >= obs), P(S <= obs)))`
    TwoSided,
    /// `P(S >= obs)`
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCheck {
    /// Per-draw replicated subset sums.
    pub sums: Vec<f64>,
    pub observed: f64,
    pub p_value: f64,
    pub sidedness: Sidedness,
    /// Gaussian-kernel density estimate of the sums as (x, density) pairs.
    pub density: Vec<(f64, f64)>,
    pub bandwidth: f64,
}

/// Compares the observed total over `cells` with its predictive
/// distribution.
pub fn aggregate_check(ensemble: &PredictiveEnsemble, data: &ODDataset, cells: &[usize], sidedness: Sidedness) -> Result<AggregateCheck> {
    if cells.is_empty() {
        return Err(Error::Empty("aggregation subset"));
    }
    if ensemble.is_empty() {
        return Err(Error::Empty("predictive ensemble"));
    }
    if let Some(&bad) = cells.iter().find(|&&c| c >= data.n()) {
        return Err(Error::domain(format!("cell index {bad} is outside 0..{}", data.n())));
    }
    let observed = cells.iter().map(|&c| data.y[c] as f64).sum::<f64>();
    let sums: Vec<f64> = ensemble
        .rows
        .iter()
        .map(|r| cells.iter().map(|&c| r.y_pred[c] as f64).sum())
        .collect();
    let m = sums.len() as f64;
    let upper = sums.iter().filter(|&&s| s >= observed).count() as f64 / m;
    let lower = sums.iter().filter(|&&s| s <= observed).count() as f64 / m;
    let p_value = match sidedness {
        Sidedness::TwoSided => (2.0 * upper.min(lower)).min(1.0),
        Sidedness::Upper => upper,
    };
    let (density, bandwidth) = kde(&sums, 512);
    Ok(AggregateCheck {
        sums,
        observed,
        p_value,
        sidedness,
        density,
        bandwidth,
    })
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^{-1/5}`; half a count when the
/// sample has no spread.
pub fn silverman_bandwidth(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = if x.len() > 1 {
        (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = crate::sampler::quantile_sorted(&s, 0.75) - crate::sampler::quantile_sorted(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        0.5
    }
}

/// Gaussian kernel density on an even grid spanning the data +- 3 bandwidths.
pub fn kde(x: &[f64], points: usize) -> (Vec<(f64, f64)>, f64) {
    let h = silverman_bandwidth(x);
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let norm = 1.0 / (x.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let grid = (0..points)
        .map(|i| {
            let g = lo + (hi - lo) * i as f64 / (points - 1).max(1) as f64;
            let d = x.iter().map(|v| (-0.5 * ((g - v) / h).powi(2)).exp()).sum::<f64>() * norm;
            (g, d)
        })
        .collect();
    (grid, h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriteriaReport {
    /// Posterior mean of the marginal deviance.
    pub mean_deviance: f64,
    /// Number of parameters, p + 2.
    pub k: usize,
    pub aic: f64,
    pub bic: f64,
    pub dic_marginal: f64,
    pub pd_marginal: f64,
    pub hierarchical: Option<HierarchicalDic>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierarchicalDic {
    pub mean_deviance: f64,
    pub pd: f64,
    pub dic: f64,
    pub draws: usize,
}

/// Streaming accumulator for the DIC on the conditional Poisson deviance
/// `-2 ln p(y | beta, u)`; the plug-in point is the posterior mean of
/// `(beta, u)`.
#[derive(Debug, Clone)]
pub struct HierarchicalDicAccumulator {
    sum_deviance: f64,
    sum_beta: Vec<f64>,
    sum_u: Vec<f64>,
    count: usize,
}

impl HierarchicalDicAccumulator {
    pub fn new(n_coef: usize, n_cells: usize) -> Self {
        Self {
            sum_deviance: 0.0,
            sum_beta: vec![0.0; n_coef],
            sum_u: vec![0.0; n_cells],
            count: 0,
        }
    }

    pub fn push(&mut self, data: &ODDataset, beta: &[f64], u: &[f64]) -> Result<()> {
        let mus = data.means(beta)?;
        let e: Vec<f64> = mus.iter().zip(u).map(|(m, u)| m * u).collect();
        self.sum_deviance += discrepancies(data.y.iter().copied(), &e).deviance;
        for (s, b) in self.sum_beta.iter_mut().zip(beta) {
            *s += b;
        }
        for (s, v) in self.sum_u.iter_mut().zip(u) {
            *s += v;
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(&self, data: &ODDataset) -> Result<HierarchicalDic> {
        if self.count == 0 {
            return Err(Error::Empty("hierarchical DIC draws"));
        }
        let c = self.count as f64;
        let beta: Vec<f64> = self.sum_beta.iter().map(|s| s / c).collect();
        let mus = data.means(&beta)?;
        let e: Vec<f64> = mus.iter().zip(&self.sum_u).map(|(m, s)| m * s / c).collect();
        let at_mean = discrepancies(data.y.iter().copied(), &e).deviance;
        let mean_deviance = self.sum_deviance / c;
        let pd = mean_deviance - at_mean;
        Ok(HierarchicalDic {
            mean_deviance,
            pd,
            dic: mean_deviance + pd,
            draws: self.count,
        })
    }
}

/// Hierarchical DIC over the 500 evenly spaced pooled draws, regenerating
/// each latent row from its own stream so nothing is held beyond one row.
pub fn hierarchical_dic_streaming(chains: &ChainSet, data: &ODDataset, family: Family, master_seed: u64) -> Result<HierarchicalDic> {
    let s = PredictiveStream::new(chains, data, family, master_seed, Some(HIERARCHICAL_DIC_DRAWS))?;
    let pooled: Vec<&ParamPoint> = chains.pooled().collect();
    let mut acc = HierarchicalDicAccumulator::new(data.n_coef(), data.n());
    for row in s {
        let row = row?;
        acc.push(data, &pooled[row.draw_index].beta, &row.u)?;
    }
    acc.finish(data)
}

/// Hierarchical DIC from a materialised ensemble (at most 500 evenly spaced
/// rows are used).
pub fn hierarchical_dic_batch(ensemble: &PredictiveEnsemble, chains: &ChainSet, data: &ODDataset) -> Result<HierarchicalDic> {
    let pooled: Vec<&ParamPoint> = chains.pooled().collect();
    let rows = evenly_spaced(ensemble.len(), HIERARCHICAL_DIC_DRAWS);
    if rows.is_empty() {
        return Err(Error::Empty("predictive ensemble"));
    }
    let mut deviances = Vec::with_capacity(rows.len());
    let mut beta_mean = vec![0.0; data.n_coef()];
    let mut u_mean = vec![0.0; data.n()];
    let c = rows.len() as f64;
    for &r in &rows {
        let row = &ensemble.rows[r];
        let point = pooled
            .get(row.draw_index)
            .ok_or_else(|| Error::domain("ensemble row refers to a draw outside the chain set"))?;
        let mus = data.means(&point.beta)?;
        let e: Vec<f64> = mus.iter().zip(&row.u).map(|(m, u)| m * u).collect();
        deviances.push(discrepancies(data.y.iter().copied(), &e).deviance);
        for (s, b) in beta_mean.iter_mut().zip(&point.beta) {
            *s += b / c;
        }
        for (s, v) in u_mean.iter_mut().zip(&row.u) {
            *s += v / c;
        }
    }
    let mus = data.means(&beta_mean)?;
    let e: Vec<f64> = mus.iter().zip(&u_mean).map(|(m, u)| m * u).collect();
    let at_mean = discrepancies(data.y.iter().copied(), &e).deviance;
    let mean_deviance = deviances.iter().sum::<f64>() / c;
    let pd = mean_deviance - at_mean;
    Ok(HierarchicalDic {
        mean_deviance,
        pd,
        dic: mean_deviance + pd,
        draws: rows.len(),
    })
}

/// AIC and BIC on the posterior mean marginal deviance, marginal DIC, and,
/// when an ensemble is supplied, the hierarchical DIC.
pub fn criteria(chains: &ChainSet, data: &ODDataset, spec: &ModelSpec, ensemble: Option<&PredictiveEnsemble>) -> Result<CriteriaReport> {
    if chains.n_pooled() == 0 {
        return Err(Error::Empty("chain set"));
    }
    let post = Posterior::new(spec, data)?;
    let pooled: Vec<&ParamPoint> = chains.pooled().collect();
    let devs: Result<Vec<f64>> = pooled.par_iter().map(|p| Ok(-2.0 * post.log_likelihood(p)?)).collect();
    let devs = devs?;
    let mean_deviance = devs.iter().sum::<f64>() / devs.len() as f64;
    let at_mean = -2.0 * post.log_likelihood(&chains.posterior_mean())?;
    let pd_marginal = mean_deviance - at_mean;
    let k = data.n_coef() + 1;
    let hierarchical = match ensemble {
        None => None,
        Some(_) if spec.family == Family::PoissonLognormal => {
            return Err(Error::UnsupportedFamily {
                family: spec.family,
                op: "hierarchical DIC",
            })
        }
        Some(e) => Some(hierarchical_dic_batch(e, chains, data)?),
    };
    Ok(CriteriaReport {
        mean_deviance,
        k,
        aic: mean_deviance + 2.0 * k as f64,
        bic: mean_deviance + k as f64 * (data.n() as f64).ln(),
        dic_marginal: mean_deviance + pd_marginal,
        pd_marginal,
        hierarchical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distmath::gig::gig_log_moment;
    use crate::distmath::pmf::nb_logpmf;
    use crate::sampler::ChainConfig;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_sd(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
    }

    fn fixed_chains(point: ParamPoint, per_chain: usize, n_chains: usize) -> ChainSet {
        ChainSet {
            draws: vec![vec![point; per_chain]; n_chains],
            acceptance_rate: vec![1.0; n_chains],
            iterations: (1..=per_chain).collect(),
            config: ChainConfig::with_master_seed(0).with_chains(n_chains, 0),
        }
    }

    fn intercept_data(y: Vec<u64>) -> ODDataset {
        let n = y.len();
        let m = (n as f64).sqrt() as usize;
        ODDataset::new(
            (0..m).map(|i| i.to_string()).collect(),
            y,
            DMatrix::from_element(n, 1, 1.0),
            vec!["intercept".into()],
        )
        .unwrap()
    }

    #[test]
    fn pg_latent_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..200_000).map(|_| draw_latent_u(Family::PoissonGamma, 0, 1.0, 1.0, &mut rng).unwrap()).collect();
        let (m, sd) = mean_sd(&v);
        assert!((m - 0.5).abs() < 3.0 * sd / (v.len() as f64).sqrt());
    }

    #[test]
    fn pig_latent_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..200_000)
            .map(|_| draw_latent_u(Family::PoissonInverseGaussian, 0, 1.0, 1.0, &mut rng).unwrap())
            .collect();
        let (m, sd) = mean_sd(&v);
        let expected = gig_log_moment(GigParams::new(-0.5, 3.0, 1.0).unwrap(), 1).unwrap().exp();
        assert!((expected - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((m - expected).abs() < 3.0 * sd / (v.len() as f64).sqrt());
    }

    #[test]
    fn pig_latent_mean_grows_with_count() {
        let means: Vec<f64> = [10u64, 100, 10_000]
            .iter()
            .map(|&y| gig_log_moment(GigParams::new(y as f64 - 0.5, 3.0, 1.0).unwrap(), 1).unwrap())
            .collect();
        assert!(means[0] < means[1] && means[1] < means[2]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..20_000)
            .map(|_| draw_latent_u(Family::PoissonInverseGaussian, 10_000, 1.0, 1.0, &mut rng).unwrap())
            .collect();
        let (m, _) = mean_sd(&v);
        assert!((m.ln() - means[2]).abs() < 1e-3);
    }

    #[test]
    fn lognormal_latent_is_unsupported() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            draw_latent_u(Family::PoissonLognormal, 1, 1.0, 1.0, &mut rng),
            Err(Error::UnsupportedFamily { .. })
        ));
        assert!(matches!(
            draw_conditional_dispersion(Family::PoissonGamma, &[1.0], 1.0, &mut rng),
            Err(Error::UnsupportedFamily { .. })
        ));
    }

    #[test]
    fn conjugate_dispersion_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ones = vec![1.0; 100];
        let v: Vec<f64> = (0..20_000)
            .map(|_| draw_conditional_dispersion(Family::PoissonInverseGaussian, &ones, 1e-3, &mut rng).unwrap())
            .collect();
        let (m, sd) = mean_sd(&v);
        assert!((m - 50.001 / 0.001).abs() < 4.0 * sd / (v.len() as f64).sqrt());
        let v: Vec<f64> = (0..20_000)
            .map(|_| draw_conditional_dispersion(Family::PoissonLognormal, &ones, 1e-3, &mut rng).unwrap())
            .collect();
        let (m, sd) = mean_sd(&v);
        assert!((m - 0.001 / 49.001).abs() < 4.0 * sd / (v.len() as f64).sqrt());
        let u: Vec<f64> = (0..100_000)
            .map(|_| crate::model::draw_mixing_effect(Family::PoissonInverseGaussian, 2.0, &mut rng).unwrap())
            .collect();
        let z = draw_conditional_dispersion(Family::PoissonInverseGaussian, &u, 1e-3, &mut rng).unwrap();
        assert!((z - 2.0).abs() < 0.1, "{z}");
    }

    #[test]
    fn poisson_limit_predictive_mean() {
        let data = intercept_data(vec![3; 4]);
        let chains = fixed_chains(ParamPoint::new(vec![2f64.ln()], 1e8).unwrap(), 2000, 2);
        let ens = predictive_draws(&chains, &data, Family::PoissonGamma, 9, None).unwrap();
        for cell in 0..4 {
            let v: Vec<f64> = ens.rows.iter().map(|r| r.y_pred[cell] as f64).collect();
            let (m, _) = mean_sd(&v);
            assert!((m - 2.0).abs() < 4.0 * (2.0 / v.len() as f64).sqrt(), "{m}");
        }
    }

    #[test]
    fn stream_and_batch_agree_and_are_deterministic() {
        let data = intercept_data(vec![0, 1, 5, 2]);
        let chains = fixed_chains(ParamPoint::new(vec![0.4], 0.7).unwrap(), 50, 2);
        let a = predictive_draws(&chains, &data, Family::PoissonInverseGaussian, 5, Some(30)).unwrap();
        let b = predictive_draws(&chains, &data, Family::PoissonInverseGaussian, 5, Some(30)).unwrap();
        assert_eq!(a, b);
        let streamed: Vec<PredictiveRow> = PredictiveStream::new(&chains, &data, Family::PoissonInverseGaussian, 5, Some(30))
            .unwrap()
            .map(Result::unwrap)
            .collect();
        assert_eq!(a.rows, streamed);
    }

    #[test]
    fn pvalue_is_one_when_replicates_always_exceed() {
        let data = intercept_data(vec![1; 4]);
        let chains = fixed_chains(ParamPoint::new(vec![0.0], 1.0).unwrap(), 5, 2);
        let ens = PredictiveEnsemble {
            family: Family::PoissonGamma,
            rows: (0..10)
                .map(|k| PredictiveRow {
                    draw_index: k,
                    u: vec![1.0; 4],
                    y_pred: vec![50; 4],
                })
                .collect(),
        };
        let p = ppc_pvalues(&ens, &data, &chains).unwrap();
        assert_eq!(p, PpcPValues { absolute: 1.0, squared: 1.0, deviance: 1.0 });
    }

    #[test]
    fn aggregate_properties() {
        let data = intercept_data(vec![0, 2, 3, 1]);
        let chains = fixed_chains(ParamPoint::new(vec![0.3], 2.0).unwrap(), 100, 2);
        let ens = predictive_draws(&chains, &data, Family::PoissonGamma, 1, None).unwrap();
        let all = aggregate_check(&ens, &data, &[0, 1, 2, 3], Sidedness::TwoSided).unwrap();
        let a = aggregate_check(&ens, &data, &[0, 2], Sidedness::TwoSided).unwrap();
        let b = aggregate_check(&ens, &data, &[1, 3], Sidedness::TwoSided).unwrap();
        for i in 0..all.sums.len() {
            assert_eq!(a.sums[i] + b.sums[i], all.sums[i]);
        }
        assert!(aggregate_check(&ens, &data, &[], Sidedness::TwoSided).is_err());
        let area: f64 = all.density.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
        assert!((area - 1.0).abs() < 1e-3, "{area}");
    }

    #[test]
    fn structural_zero_cell() {
        let data = intercept_data(vec![0, 0, 0, 0]);
        let chains = fixed_chains(ParamPoint::new(vec![-650.0], 1.0).unwrap(), 50, 2);
        let ens = predictive_draws(&chains, &data, Family::PoissonGamma, 1, None).unwrap();
        let c = aggregate_check(&ens, &data, &[2], Sidedness::TwoSided).unwrap();
        assert!(c.sums.iter().all(|&s| s == 0.0));
        assert_eq!(c.p_value, 1.0);
    }

    #[test]
    fn collapsed_chains_have_zero_pd() {
        let data = intercept_data(vec![0, 4, 2, 7]);
        let spec = ModelSpec::with_gprior(Family::PoissonGamma, 1e-3, &data).unwrap();
        let point = ParamPoint::new(vec![1.1], 1.7).unwrap();
        let chains = fixed_chains(point.clone(), 20, 2);
        let r = criteria(&chains, &data, &spec, None).unwrap();
        assert!(r.pd_marginal.abs() < 1e-9);
        let d: f64 = data.y.iter().map(|&y| -2.0 * nb_logpmf(y, 1.1f64.exp(), 1.7).unwrap()).sum();
        assert!((r.dic_marginal - d).abs() < 1e-9);
        assert!((r.aic - (d + 4.0)).abs() < 1e-9);
        assert!((r.bic - (d + 2.0 * 4f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn intercept_only_hand_computed_dic() {
        let data = intercept_data(vec![1, 3, 0, 2]);
        let spec = ModelSpec::with_gprior(Family::PoissonGamma, 1e-3, &data).unwrap();
        let p1 = ParamPoint::new(vec![0.2], 1.0).unwrap();
        let p2 = ParamPoint::new(vec![0.6], 3.0).unwrap();
        let chains = ChainSet {
            draws: vec![vec![p1.clone()], vec![p2.clone()]],
            acceptance_rate: vec![1.0, 1.0],
            iterations: vec![1],
            config: ChainConfig::with_master_seed(0).with_chains(2, 0),
        };
        let dev = |b: f64, t: f64| -> f64 { data.y.iter().map(|&y| -2.0 * nb_logpmf(y, b.exp(), t).unwrap()).sum() };
        let dbar = 0.5 * (dev(0.2, 1.0) + dev(0.6, 3.0));
        let dhat = dev(0.4, 2.0);
        let r = criteria(&chains, &data, &spec, None).unwrap();
        assert!((r.mean_deviance - dbar).abs() < 1e-10);
        assert!((r.dic_marginal - (2.0 * dbar - dhat)).abs() < 1e-10);
    }

    #[test]
    fn streaming_hierarchical_dic_matches_batch() {
        let data = intercept_data((0..16).map(|i| (i * 3 % 7) as u64).collect());
        let mut chains = fixed_chains(ParamPoint::new(vec![0.5], 1.3).unwrap(), 300, 3);
        for (c, chain) in chains.draws.iter_mut().enumerate() {
            for (t, p) in chain.iter_mut().enumerate() {
                p.beta[0] += 0.01 * ((c * 7 + t) % 11) as f64;
                p.dispersion += 0.02 * ((c + t) % 5) as f64;
            }
        }
        for fam in [Family::PoissonGamma, Family::PoissonInverseGaussian] {
            let streamed = hierarchical_dic_streaming(&chains, &data, fam, 77).unwrap();
            let ens = predictive_draws(&chains, &data, fam, 77, Some(HIERARCHICAL_DIC_DRAWS)).unwrap();
            let batch = hierarchical_dic_batch(&ens, &chains, &data).unwrap();
            assert_eq!(streamed.draws, 500);
            assert!((streamed.dic - batch.dic).abs() < 1e-9);
            assert!((streamed.pd - batch.pd).abs() < 1e-9);
        }
        let spec = ModelSpec::with_gprior(Family::PoissonLognormal, 1e-3, &data).unwrap();
        let ens = predictive_draws(&chains, &data, Family::PoissonGamma, 77, Some(10)).unwrap();
        assert!(criteria(&chains, &data, &spec, Some(&ens)).is_err());
    }

    #[test]
    fn evenly_spaced_selection() {
        assert_eq!(evenly_spaced(10, 4), vec![0, 2, 5, 7]);
        assert_eq!(evenly_spaced(3, 5), vec![0, 1, 2]);
        assert_eq!(evenly_spaced(4000, 500).len(), 500);
    }
}
