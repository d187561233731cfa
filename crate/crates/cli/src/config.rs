//! Run configuration: a flat `key = value` file plus `key=value` overrides.

use std::path::{Path, PathBuf};

use odmix::model::{Family, PlnIntegration, DEFAULT_HYPER_A, DEFAULT_QUADRATURE_ORDER};
use odmix::predict::Sidedness;
use odmix::sampler::ChainConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub family: Family,
    pub a: f64,
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Multiplies the proposal covariance and the dispersion proposal variance.
    pub proposal_inflate: f64,
    pub ml_tol: f64,
    /// `quadrature` or `mc`.
    pub pln_integration: String,
    pub quadrature_order: usize,
    pub mc_draws: usize,
    pub ensemble_size: usize,
    pub sidedness: Sidedness,
    pub interval: f64,
    pub psrf_threshold: f64,
    pub strict: bool,
    pub tol: f64,
    pub max_iter: usize,
    /// Daily-to-assignment-period demand factor.
    pub peak_factor: f64,
    pub bpr_alpha: f64,
    pub bpr_beta: f64,
    pub vc_threshold: f64,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub network: Option<PathBuf>,
    pub zone_map: Option<PathBuf>,
    /// Fixed `origin,destination,trips` demand; when set, `assign` skips the ensemble.
    pub demand: Option<PathBuf>,
    pub out: PathBuf,
    pub synth_m: usize,
    pub synth_beta: Vec<f64>,
    pub synth_dispersion: f64,
    /// Negative disables intercept tuning.
    pub synth_zero_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            family: Family::PoissonGamma,
            a: DEFAULT_HYPER_A,
            chains: 5,
            iterations: 4200,
            burn_in: 200,
            thin: 5,
            proposal_inflate: 1.0,
            ml_tol: 1e-3,
            pln_integration: "quadrature".into(),
            quadrature_order: DEFAULT_QUADRATURE_ORDER,
            mc_draws: 2000,
            ensemble_size: 500,
            sidedness: Sidedness::TwoSided,
            interval: 0.95,
            psrf_threshold: 1.1,
            strict: false,
            tol: odmix::assign::DEFAULT_GAP_TOLERANCE,
            max_iter: odmix::assign::DEFAULT_MAX_ITERATIONS,
            peak_factor: 1.0,
            bpr_alpha: odmix::assign::DEFAULT_BPR_ALPHA,
            bpr_beta: odmix::assign::DEFAULT_BPR_BETA,
            vc_threshold: 1.0,
            seed: None,
            data: None,
            network: None,
            zone_map: None,
            demand: None,
            out: PathBuf::from("out"),
            synth_m: 45,
            synth_beta: vec![0.0, 0.6, 0.6, -1.0],
            synth_dispersion: 1.0,
            synth_zero_fraction: 0.63,
        }
    }
}

fn bad(key: &str, value: &str, what: &str) -> CliError {
    CliError::Validation(format!("config key '{key}': cannot read '{value}' as {what}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> CliResult<T> {
    value.parse().map_err(|_| bad(key, value, what))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies every `key = value` line; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("config line {}: expected key = value", lineno + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// `key=value`, as given to `--set`.
    pub fn apply_override(&mut self, kv: &str) -> CliResult<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("override '{kv}' is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key {
            "family" => self.family = value.parse().map_err(|_| bad(key, value, "a family (PG, PLN, PIG)"))?,
            "a" => self.a = num(key, value, "a number")?,
            "chains" => self.chains = num(key, value, "a count")?,
            "iterations" => self.iterations = num(key, value, "a count")?,
            "burn_in" => self.burn_in = num(key, value, "a count")?,
            "thin" => self.thin = num(key, value, "a count")?,
            "proposal_inflate" => self.proposal_inflate = num(key, value, "a number")?,
            "ml_tol" => self.ml_tol = num(key, value, "a number")?,
            "pln_integration" => match value {
                "quadrature" | "mc" => self.pln_integration = value.into(),
                _ => return Err(bad(key, value, "'quadrature' or 'mc'")),
            },
            "quadrature_order" => self.quadrature_order = num(key, value, "a count")?,
            "mc_draws" => self.mc_draws = num(key, value, "a count")?,
            "ensemble_size" => self.ensemble_size = num(key, value, "a count")?,
            "sidedness" => {
                self.sidedness = match value {
                    "two-sided" => Sidedness::TwoSided,
                    "upper" => Sidedness::Upper,
                    _ => return Err(bad(key, value, "'two-sided' or 'upper'")),
                }
            }
            "interval" => self.interval = num(key, value, "a number")?,
            "psrf_threshold" => self.psrf_threshold = num(key, value, "a number")?,
            "strict" => self.strict = num(key, value, "true or false")?,
            "tol" => self.tol = num(key, value, "a number")?,
            "max_iter" => self.max_iter = num(key, value, "a count")?,
            "peak_factor" => self.peak_factor = num(key, value, "a number")?,
            "bpr_alpha" => self.bpr_alpha = num(key, value, "a number")?,
            "bpr_beta" => self.bpr_beta = num(key, value, "a number")?,
            "vc_threshold" => self.vc_threshold = num(key, value, "a number")?,
            "seed" => self.seed = if value.is_empty() { None } else { Some(num(key, value, "an unsigned integer")?) },
            "data" => self.data = opt_path(value),
            "network" => self.network = opt_path(value),
            "zone_map" => self.zone_map = opt_path(value),
            "demand" => self.demand = opt_path(value),
            "out" => self.out = PathBuf::from(value),
            "synth_m" => self.synth_m = num(key, value, "a count")?,
            "synth_beta" => {
                self.synth_beta = value
                    .split(',')
                    .map(|s| num(key, s.trim(), "a comma-separated list of numbers"))
                    .collect::<CliResult<_>>()?
            }
            "synth_dispersion" => self.synth_dispersion = num(key, value, "a number")?,
            "synth_zero_fraction" => self.synth_zero_fraction = num(key, value, "a number")?,
            _ => return Err(CliError::Validation(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Every key in a fixed order; `apply_text` of the rendered pairs restores `self`.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("family", self.family.tag().to_string()),
            ("a", format!("{:?}", self.a)),
            ("chains", self.chains.to_string()),
            ("iterations", self.iterations.to_string()),
            ("burn_in", self.burn_in.to_string()),
            ("thin", self.thin.to_string()),
            ("proposal_inflate", format!("{:?}", self.proposal_inflate)),
            ("ml_tol", format!("{:?}", self.ml_tol)),
            ("pln_integration", self.pln_integration.clone()),
            ("quadrature_order", self.quadrature_order.to_string()),
            ("mc_draws", self.mc_draws.to_string()),
            ("ensemble_size", self.ensemble_size.to_string()),
            (
                "sidedness",
                match self.sidedness {
                    Sidedness::TwoSided => "two-sided",
                    Sidedness::Upper => "upper",
                }
                .to_string(),
            ),
            ("interval", format!("{:?}", self.interval)),
            ("psrf_threshold", format!("{:?}", self.psrf_threshold)),
            ("strict", self.strict.to_string()),
            ("tol", format!("{:?}", self.tol)),
            ("max_iter", self.max_iter.to_string()),
            ("peak_factor", format!("{:?}", self.peak_factor)),
            ("bpr_alpha", format!("{:?}", self.bpr_alpha)),
            ("bpr_beta", format!("{:?}", self.bpr_beta)),
            ("vc_threshold", format!("{:?}", self.vc_threshold)),
            ("seed", self.seed.map(|s| s.to_string()).unwrap_or_default()),
            ("data", show_path(&self.data)),
            ("network", show_path(&self.network)),
            ("zone_map", show_path(&self.zone_map)),
            ("demand", show_path(&self.demand)),
            ("out", self.out.display().to_string()),
            ("synth_m", self.synth_m.to_string()),
            (
                "synth_beta",
                self.synth_beta.iter().map(|b| format!("{b:?}")).collect::<Vec<_>>().join(","),
            ),
            ("synth_dispersion", format!("{:?}", self.synth_dispersion)),
            ("synth_zero_fraction", format!("{:?}", self.synth_zero_fraction)),
        ]
    }

    pub fn render(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> CliResult<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(CliError::Validation(msg.to_string())) };
        check(self.a > 0.0 && self.a.is_finite(), "a must be positive")?;
        check(self.chains >= 1, "chains must be at least 1")?;
        check(self.thin >= 1, "thin must be at least 1")?;
        check(self.burn_in < self.iterations, "burn_in must be below iterations")?;
        check(self.proposal_inflate > 0.0 && self.proposal_inflate.is_finite(), "proposal_inflate must be positive")?;
        check(self.ml_tol > 0.0, "ml_tol must be positive")?;
        check(self.quadrature_order >= 2, "quadrature_order must be at least 2")?;
        check(self.mc_draws >= 2, "mc_draws must be at least 2")?;
        check(self.ensemble_size >= 1, "ensemble_size must be at least 1")?;
        check(self.interval > 0.0 && self.interval < 1.0, "interval must lie in (0, 1)")?;
        check(self.psrf_threshold >= 1.0, "psrf_threshold must be at least 1")?;
        check(self.tol > 0.0, "tol must be positive")?;
        check(self.max_iter >= 1, "max_iter must be at least 1")?;
        check(self.peak_factor > 0.0 && self.peak_factor.is_finite(), "peak_factor must be positive")?;
        check(self.bpr_alpha >= 0.0 && self.bpr_beta >= 0.0, "BPR parameters must be non-negative")?;
        check(self.vc_threshold > 0.0, "vc_threshold must be positive")?;
        check(self.synth_m >= 2, "synth_m must be at least 2")?;
        check(self.synth_dispersion > 0.0 && self.synth_dispersion.is_finite(), "synth_dispersion must be positive")?;
        check(self.synth_zero_fraction < 1.0, "synth_zero_fraction must be below 1")?;
        Ok(())
    }

    pub fn require_seed(&self) -> CliResult<u64> {
        self.seed
            .ok_or_else(|| CliError::Validation("a master seed is required (set seed = <integer>)".into()))
    }

    pub fn chain_config(&self) -> CliResult<ChainConfig> {
        let seed = self.require_seed()?;
        let mut c = ChainConfig::with_master_seed(seed).with_chains(self.chains, seed);
        c.iterations = self.iterations;
        c.burn_in = self.burn_in;
        c.thin = self.thin;
        Ok(c)
    }

    pub fn pln(&self) -> CliResult<PlnIntegration> {
        Ok(if self.pln_integration == "mc" {
            PlnIntegration::MonteCarlo {
                draws: self.mc_draws,
                seed: self.require_seed()?,
            }
        } else {
            PlnIntegration::Quadrature {
                order: self.quadrature_order,
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_then_parse_is_identity() {
        let mut c = RunConfig::default();
        c.seed = Some(17);
        c.family = Family::PoissonInverseGaussian;
        c.a = 0.1;
        c.data = Some("od.csv".into());
        c.synth_beta = vec![-0.5, 1.25];
        let mut back = RunConfig::default();
        back.apply_text(&c.render()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_win_over_file_values() {
        let mut c = RunConfig::default();
        c.apply_text("family = PLN\nseed = 3\n# comment\n\nchains = 4\n").unwrap();
        c.apply_override("chains=2").unwrap();
        assert_eq!(c.family, Family::PoissonLognormal);
        assert_eq!(c.chains, 2);
        assert_eq!(c.seed, Some(3));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut c = RunConfig::default();
        assert!(matches!(c.apply_override("colour=red"), Err(CliError::Validation(_))));
        assert!(matches!(c.apply_override("chains=two"), Err(CliError::Validation(_))));
        assert!(matches!(c.apply_override("novalue"), Err(CliError::Validation(_))));
    }

    #[test]
    fn seed_is_mandatory_for_chain_settings() {
        assert!(RunConfig::default().chain_config().is_err());
        let mut c = RunConfig::default();
        c.seed = Some(1);
        assert_eq!(c.chain_config().unwrap().seeds.len(), 5);
    }

    #[test]
    fn out_of_range_values_fail_validation() {
        let mut c = RunConfig::default();
        c.burn_in = c.iterations;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.interval = 1.0;
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }
}
