//! CSV readers and writers for OD matrices, networks, demand and zone maps.
//!
//! OD files carry `origin,destination,flow` followed by covariates, one row
//! per cell in row-major order of the zones as they first appear in the
//! origin column. Covariate columns are transformed on load:
//!
//! * `dummy_<name>`: used as given.
//! * `log_<name>`: already on the log scale, used as given and stored as `<name>`.
//! * anything else: must be positive and is logged.
//!
//! A `distance` column (raw or `log_`) is set to 0.1 on intra-zonal rows
//! before logging. Origin/destination attribute pairs are spelled
//! `<name>_o` / `<name>_d`; an unmatched half is rejected.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;
use odmix::assign::{DemandEntry, Link, LinkType, Network, ODDemand, ZoneMap};
use odmix::model::ODDataset;

use crate::error::{CliError, CliResult};

pub const INTRAZONAL_DISTANCE: f64 = 0.1;
pub const DISTANCE_COLUMN: &str = "distance";
pub const INTERCEPT: &str = "intercept";

fn reader(path: &Path) -> CliResult<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Validation(format!("{}: {e}", path.display()))
}

fn headers(path: &Path, rdr: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> CliResult<Vec<String>> {
    let h: Vec<String> = rdr.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    if h.len() < expected.len() || h.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(CliError::Validation(format!(
            "{}: header must start with {}",
            path.display(),
            expected.join(",")
        )));
    }
    Ok(h)
}

fn parse_flow(s: &str, row: usize) -> CliResult<u64> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(CliError::Validation(format!(
            "row {row}: flow '{s}' is not a non-negative integer"
        ))),
    }
}

fn parse_f64(s: &str, row: usize, col: &str) -> CliResult<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::Validation(format!("row {row}: column '{col}' value '{s}' is not a finite number")))
}

enum Transform {
    Raw,
    Log,
}

struct Column {
    name: String,
    transform: Transform,
    distance: bool,
}

fn classify(header: &str) -> Column {
    let (name, transform) = if header.starts_with("dummy_") {
        (header.to_string(), Transform::Raw)
    } else if let Some(base) = header.strip_prefix("log_") {
        (base.to_string(), Transform::Raw)
    } else {
        (header.to_string(), Transform::Log)
    };
    let distance = name == DISTANCE_COLUMN;
    Column { name, transform, distance }
}

fn check_pairs(path: &Path, names: &[String]) -> CliResult<()> {
    let set: HashSet<&str> = names.iter().map(String::as_str).collect();
    for n in names {
        let partner = if let Some(b) = n.strip_suffix("_o") {
            format!("{b}_d")
        } else if let Some(b) = n.strip_suffix("_d") {
            format!("{b}_o")
        } else {
            continue;
        };
        if !set.contains(partner.as_str()) {
            return Err(CliError::Validation(format!(
                "{}: covariate '{n}' has no '{partner}' partner",
                path.display()
            )));
        }
    }
    Ok(())
}

/// Reads an OD file (see the module docs for the conventions).
pub fn load_od_csv(path: &Path) -> CliResult<ODDataset> {
    let mut rdr = reader(path)?;
    let h = headers(path, &mut rdr, &["origin", "destination", "flow"])?;
    let cols: Vec<Column> = h[3..].iter().map(|s| classify(s)).collect();
    let names: Vec<String> = cols.iter().map(|c| c.name.clone()).collect();
    if names.iter().collect::<HashSet<_>>().len() != names.len() || names.iter().any(|n| n == INTERCEPT) {
        return Err(CliError::Validation(format!("{}: duplicate covariate names", path.display())));
    }
    check_pairs(path, &names)?;

    let mut cells = Vec::new();
    let mut y = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != h.len() {
            return Err(CliError::Validation(format!("row {row}: expected {} fields, got {}", h.len(), rec.len())));
        }
        let (o, d) = (rec[0].to_string(), rec[1].to_string());
        y.push(parse_flow(&rec[2], row)?);
        for (j, c) in cols.iter().enumerate() {
            let mut v = parse_f64(&rec[3 + j], row, &h[3 + j])?;
            if c.distance && o == d {
                v = match c.transform {
                    Transform::Log => INTRAZONAL_DISTANCE,
                    Transform::Raw => INTRAZONAL_DISTANCE.ln(),
                };
            }
            if let Transform::Log = c.transform {
                if !(v > 0.0) {
                    return Err(CliError::Validation(format!(
                        "row {row}: column '{}' must be positive to be logged, got {v}",
                        h[3 + j]
                    )));
                }
                v = v.ln();
            }
            values.push(v);
        }
        cells.push((o, d));
    }

    let mut zones: Vec<String> = Vec::new();
    for (o, _) in &cells {
        if zones.last() != Some(o) && !zones.contains(o) {
            zones.push(o.clone());
        }
    }
    let m = zones.len();
    if m == 0 {
        return Err(CliError::Validation(format!("{}: no data rows", path.display())));
    }
    if cells.len() != m * m {
        return Err(CliError::Validation(format!(
            "{}: shape error: {} rows for {m} origin zones, expected {}",
            path.display(),
            cells.len(),
            m * m
        )));
    }
    for (i, (o, d)) in cells.iter().enumerate() {
        if *o != zones[i / m] || *d != zones[i % m] {
            return Err(CliError::Validation(format!(
                "row {}: expected cell ({}, {}), found ({o}, {d})",
                i + 2,
                zones[i / m],
                zones[i % m]
            )));
        }
    }

    let p = cols.len();
    let n = m * m;
    let x = DMatrix::from_fn(n, p + 1, |r, c| if c == 0 { 1.0 } else { values[r * p + c - 1] });
    let mut covariate_names = vec![INTERCEPT.to_string()];
    covariate_names.extend(names);
    ODDataset::new(zones, y, x, covariate_names).map_err(|e| match e {
        odmix::Error::SingularDesign { .. } => CliError::Validation(format!("{}: design error: {e}", path.display())),
        other => CliError::from(other),
    })
}

/// Writes `data` so that [`load_od_csv`] reproduces it exactly: transformed
/// covariates go out as `log_<name>` columns, dummies as themselves.
pub fn write_od_csv(path: &Path, data: &ODDataset) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["origin".to_string(), "destination".to_string(), "flow".to_string()];
    for name in &data.covariate_names[1..] {
        header.push(if name.starts_with("dummy_") { name.clone() } else { format!("log_{name}") });
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for i in 0..data.n() {
        let (o, d) = data.cell(i);
        let mut rec = vec![data.zones[o].clone(), data.zones[d].clone(), data.y[i].to_string()];
        rec.extend((1..data.x.ncols()).map(|j| format!("{:?}", data.x[(i, j)])));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Network links with header `link_id,from,to,t_f,capacity,type,alpha,beta`.
/// Empty `alpha`/`beta` fields take the given defaults. Node names are
/// numbered in order of first appearance.
pub fn load_network(path: &Path, default_alpha: f64, default_beta: f64) -> CliResult<Network> {
    let mut rdr = reader(path)?;
    headers(path, &mut rdr, &["link_id", "from", "to", "t_f", "capacity", "type", "alpha", "beta"])?;
    let mut nodes: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut intern = |name: &str| -> usize {
        if let Some(&i) = index.get(name) {
            return i;
        }
        nodes.push(name.to_string());
        index.insert(name.to_string(), nodes.len() - 1);
        nodes.len() - 1
    };
    let mut links = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let opt = |k: usize, default: f64, col: &str| -> CliResult<f64> {
            if rec[k].is_empty() {
                Ok(default)
            } else {
                parse_f64(&rec[k], row, col)
            }
        };
        let link_type: LinkType = rec[5]
            .parse()
            .map_err(|e: odmix::Error| CliError::Validation(format!("row {row}: {e}")))?;
        links.push(Link {
            id: rec[0].to_string(),
            from: intern(&rec[1]),
            to: intern(&rec[2]),
            t_f: parse_f64(&rec[3], row, "t_f")?,
            capacity: parse_f64(&rec[4], row, "capacity")?,
            link_type,
            alpha: opt(6, default_alpha, "alpha")?,
            beta: opt(7, default_beta, "beta")?,
        });
    }
    Ok(Network::new(nodes, links)?)
}

/// `zone,node` pairs attaching zones to centroid nodes.
pub fn load_zone_map(path: &Path) -> CliResult<HashMap<String, String>> {
    let mut rdr = reader(path)?;
    headers(path, &mut rdr, &["zone", "node"])?;
    let mut out = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if out.insert(rec[0].to_string(), rec[1].to_string()).is_some() {
            return Err(CliError::Validation(format!("row {}: zone '{}' mapped twice", i + 2, &rec[0])));
        }
    }
    Ok(out)
}

/// Fixed demand `origin,destination,trips`; intra-zonal and zero rows are dropped.
pub fn load_demand(path: &Path, network: &Network, pairs: &HashMap<String, String>, scaling: f64) -> CliResult<ODDemand> {
    let mut rdr = reader(path)?;
    headers(path, &mut rdr, &["origin", "destination", "trips"])?;
    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let trips = parse_f64(&rec[2], row, "trips")?;
        if trips < 0.0 {
            return Err(CliError::Validation(format!("row {row}: negative trips")));
        }
        if rec[0] == rec[1] || trips == 0.0 {
            continue;
        }
        let zones = [rec[0].to_string(), rec[1].to_string()];
        let map = ZoneMap::new(&zones, network, pairs)?;
        entries.push(DemandEntry {
            origin: zones[0].clone(),
            destination: zones[1].clone(),
            origin_node: map.node(0),
            destination_node: map.node(1),
            trips: trips * scaling,
        });
    }
    Ok(ODDemand { entries })
}
