//! Fit pipeline shared by the commands and the test suites.

use odmix::calibrate::{build_proposals, fit_ml, initial_point, MlFit, ProposalSpec};
use odmix::sampler::{mh_run, psrf, ChainConfig, ChainSet, PsrfReport};
use odmix::{ModelSpec, ODDataset, Posterior, Result};

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub ml: MlFit,
    pub proposal: ProposalSpec,
    pub chains: ChainSet,
    pub psrf: PsrfReport,
}

/// Maximum likelihood, moment-matched independence proposal (covariance
/// scaled by `inflate`), then the multi-chain sampler.
pub fn fit_model(spec: &ModelSpec, data: &ODDataset, chain: &ChainConfig, inflate: f64, ml_tol: f64) -> Result<FitOutcome> {
    let init = initial_point(spec.family, data)?;
    let ml = fit_ml(spec, data, &init, ml_tol)?;
    let mut proposal = build_proposals(&ml)?;
    if inflate != 1.0 {
        proposal = proposal.inflated(inflate)?;
    }
    let posterior = Posterior::new(spec, data)?;
    let target = |p: &odmix::ParamPoint| posterior.log_posterior(p);
    let chains = mh_run(&target, &proposal, chain)?;
    let psrf = psrf(&chains)?;
    Ok(FitOutcome {
        ml,
        proposal,
        chains,
        psrf,
    })
}
