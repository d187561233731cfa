//! Columnar text artifacts.
//!
//! Layout: a schema line `# odmix <kind> v1 columns=<c1>,<c2>,...`, then
//! `# version=...`, one `# config <key> = <value>` line per configuration key,
//! free `# <key>=<value>` metadata lines, and finally comma-separated rows.
//! Floats are written with `{:?}`, which round-trips exactly.

use std::fmt::Write as _;
use std::path::Path;

use odmix::model::{Family, ParamPoint};
use odmix::predict::{PredictiveEnsemble, PredictiveRow};
use odmix::sampler::ChainSet;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
const SCHEMA_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub kind: String,
    pub columns: Vec<String>,
    pub version: String,
    pub config: RunConfig,
    pub meta: Vec<(String, String)>,
    pub rows: Vec<Vec<String>>,
}

impl Artifact {
    pub fn new(kind: &str, columns: &[&str], config: &RunConfig) -> Self {
        Self {
            kind: kind.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            version: CODE_VERSION.to_string(),
            config: config.clone(),
            meta: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.meta.push((key.to_string(), value.into()));
        self
    }

    pub fn get_meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# odmix {} {SCHEMA_VERSION} columns={}", self.kind, self.columns.join(","));
        let _ = writeln!(s, "# version={}", self.version);
        for (k, v) in self.config.pairs() {
            let _ = writeln!(s, "# config {k} = {v}");
        }
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k}={v}");
        }
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        std::fs::write(path, self.render()).map_err(|e| CliError::io(path, e))
    }

    /// Reads an artifact of the given kind. A missing file is a dependency error.
    pub fn read(path: &Path, kind: &str) -> CliResult<Self> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(CliError::Dependency(format!(
                    "required {kind} artifact {} is missing; run the upstream command first",
                    path.display()
                )))
            }
            Err(e) => return Err(CliError::io(path, e)),
        };
        Self::parse(&text, kind).map_err(|msg| CliError::Dependency(format!("{}: {msg}", path.display())))
    }

    pub fn parse(text: &str, kind: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let schema = lines.next().ok_or("empty artifact")?;
        let rest = schema
            .strip_prefix("# odmix ")
            .ok_or("missing schema line")?;
        let mut parts = rest.splitn(3, ' ');
        let found = parts.next().unwrap_or_default();
        if found != kind {
            return Err(format!("expected a {kind} artifact, found {found}"));
        }
        if parts.next() != Some(SCHEMA_VERSION) {
            return Err("unsupported schema version".into());
        }
        let columns: Vec<String> = parts
            .next()
            .and_then(|c| c.strip_prefix("columns="))
            .ok_or("schema line lacks columns")?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut art = Artifact {
            kind: kind.to_string(),
            columns,
            version: String::new(),
            config: RunConfig::default(),
            meta: Vec::new(),
            rows: Vec::new(),
        };
        let mut config_text = String::new();
        for line in lines {
            if let Some(c) = line.strip_prefix("# config ") {
                config_text.push_str(c);
                config_text.push('\n');
            } else if let Some(v) = line.strip_prefix("# version=") {
                art.version = v.to_string();
            } else if let Some(m) = line.strip_prefix("# ") {
                let (k, v) = m.split_once('=').ok_or("malformed metadata line")?;
                art.meta.push((k.to_string(), v.to_string()));
            } else {
                let row: Vec<String> = line.split(',').map(str::to_string).collect();
                if row.len() != art.columns.len() {
                    return Err(format!("row has {} fields, schema has {}", row.len(), art.columns.len()));
                }
                art.rows.push(row);
            }
        }
        art.config.apply_text(&config_text).map_err(|e| e.to_string())?;
        Ok(art)
    }
}

fn field<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<T> {
    s.parse()
        .map_err(|_| CliError::Dependency(format!("artifact field '{s}' is not a valid {what}")))
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";")
}

fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(';').map(|x| field(x, "number")).collect()
}

/// `chain,iteration,<coefficient names>,<dispersion name>`.
pub fn chains_artifact(chains: &ChainSet, coef_names: &[String], family: Family, config: &RunConfig) -> Artifact {
    let mut cols = vec!["chain".to_string(), "iteration".to_string()];
    cols.extend(coef_names.iter().cloned());
    cols.push(family.dispersion_name().to_string());
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut art = Artifact::new("chains", &col_refs, config);
    art.meta("family", family.tag());
    art.meta("acceptance", fmt_list(&chains.acceptance_rate));
    for (c, chain) in chains.draws.iter().enumerate() {
        for (t, p) in chain.iter().enumerate() {
            let mut row = vec![c.to_string(), chains.iterations[t].to_string()];
            row.extend(p.to_vec().into_iter().map(fmt_f64));
            art.push(row);
        }
    }
    art
}

/// Rebuilds the chain set; the chain settings come from the embedded config.
pub fn read_chains(art: &Artifact) -> CliResult<(ChainSet, Family)> {
    let family: Family = field(art.get_meta("family").unwrap_or_default(), "family")?;
    let acceptance = parse_list(art.get_meta("acceptance").unwrap_or_default())?;
    let config = art.config.chain_config()?;
    let k = art.columns.len() - 3;
    let mut draws: Vec<Vec<ParamPoint>> = vec![Vec::new(); config.n_chains];
    let mut iterations = Vec::new();
    for row in &art.rows {
        let c: usize = field(&row[0], "chain index")?;
        let t: usize = field(&row[1], "iteration")?;
        if c >= draws.len() {
            return Err(CliError::Dependency(format!("chain index {c} exceeds the configured chain count")));
        }
        if c == 0 {
            iterations.push(t);
        }
        let v: Vec<f64> = row[2..].iter().map(|s| field(s, "number")).collect::<CliResult<_>>()?;
        draws[c].push(ParamPoint::new(v[..k].to_vec(), v[k])?);
    }
    if draws.iter().any(|d| d.len() != iterations.len()) || acceptance.len() != draws.len() {
        return Err(CliError::Dependency("chains artifact is truncated".into()));
    }
    Ok((
        ChainSet {
            draws,
            acceptance_rate: acceptance,
            iterations,
            config,
        },
        family,
    ))
}

/// `draw,cell,u,y_pred`, one row per cell of every replicated matrix.
pub fn ensemble_artifact(ens: &PredictiveEnsemble, config: &RunConfig) -> Artifact {
    let mut art = Artifact::new("ensemble", &["draw", "cell", "u", "y_pred"], config);
    art.meta("family", ens.family.tag());
    art.meta("rows", ens.len().to_string());
    for r in &ens.rows {
        for (i, (u, y)) in r.u.iter().zip(&r.y_pred).enumerate() {
            art.push(vec![r.draw_index.to_string(), i.to_string(), fmt_f64(*u), y.to_string()]);
        }
    }
    art
}

pub fn read_ensemble(art: &Artifact) -> CliResult<PredictiveEnsemble> {
    let family: Family = field(art.get_meta("family").unwrap_or_default(), "family")?;
    let mut rows: Vec<PredictiveRow> = Vec::new();
    for r in &art.rows {
        let draw: usize = field(&r[0], "draw index")?;
        let cell: usize = field(&r[1], "cell index")?;
        if cell == 0 {
            rows.push(PredictiveRow {
                draw_index: draw,
                u: Vec::new(),
                y_pred: Vec::new(),
            });
        }
        let row = rows
            .last_mut()
            .filter(|row| row.draw_index == draw && row.u.len() == cell)
            .ok_or_else(|| CliError::Dependency("ensemble rows are out of order".into()))?;
        row.u.push(field(&r[2], "number")?);
        row.y_pred.push(field(&r[3], "count")?);
    }
    Ok(PredictiveEnsemble { family, rows })
}
