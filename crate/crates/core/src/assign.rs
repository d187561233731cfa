//! Deterministic user-equilibrium assignment with BPR link costs, and
//! congestion summaries over predictive OD ensembles.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ODDataset;
use crate::predict::PredictiveEnsemble;

pub const DEFAULT_BPR_ALPHA: f64 = 0.15;
pub const DEFAULT_BPR_BETA: f64 = 4.0;
pub const DEFAULT_GAP_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkType {
    Highway,
    MainRegional,
    SmallRegional,
    Local,
    Path,
}

impl LinkType {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkType::Highway => "highway",
            LinkType::MainRegional => "main_regional",
            LinkType::SmallRegional => "small_regional",
            LinkType::Local => "local",
            LinkType::Path => "path",
        }
    }
}

impl fmt::Display for LinkType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LinkType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "highway" => Ok(LinkType::Highway),
            "main_regional" => Ok(LinkType::MainRegional),
            "small_regional" => Ok(LinkType::SmallRegional),
            "local" => Ok(LinkType::Local),
            "path" => Ok(LinkType::Path),
            other => Err(Error::Config(format!("unknown link type '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: String,
    pub from: usize,
    pub to: usize,
    /// Free-flow travel time in seconds.
    pub t_f: f64,
    /// Vehicles per hour.
    pub capacity: f64,
    pub link_type: LinkType,
    pub alpha: f64,
    pub beta: f64,
}

impl Link {
    pub fn time(&self, v: f64) -> f64 {
        self.t_f * (1.0 + self.alpha * (v / self.capacity).powf(self.beta))
    }

    /// `int_0^v t(s) ds`
    pub fn integral(&self, v: f64) -> f64 {
        self.t_f * (v + self.alpha * self.capacity / (self.beta + 1.0) * (v / self.capacity).powf(self.beta + 1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub nodes: Vec<String>,
    pub links: Vec<Link>,
    outgoing: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl Network {
    pub fn new(nodes: Vec<String>, links: Vec<Link>) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate node '{n}'")));
            }
        }
        let mut outgoing = vec![Vec::new(); nodes.len()];
        for (k, l) in links.iter().enumerate() {
            if l.from >= nodes.len() || l.to >= nodes.len() {
                return Err(Error::Config(format!("link '{}' refers to an unknown node", l.id)));
            }
            if !(l.t_f > 0.0 && l.t_f.is_finite()) {
                return Err(Error::Config(format!("link '{}' needs a positive free-flow time", l.id)));
            }
            if !(l.capacity > 0.0 && l.capacity.is_finite()) {
                return Err(Error::Config(format!("link '{}' needs a positive capacity", l.id)));
            }
            if !(l.alpha >= 0.0 && l.beta >= 0.0) {
                return Err(Error::Config(format!("link '{}' has negative BPR parameters", l.id)));
            }
            outgoing[l.from].push(k);
        }
        Ok(Self {
            nodes,
            links,
            outgoing,
            index,
        })
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Shortest-path tree from `origin` under `costs`: `(distance, predecessor link)`.
    /// Ties keep the first label found, visiting nodes in index order.
    fn shortest_paths(&self, origin: usize, costs: &[f64]) -> (Vec<f64>, Vec<Option<usize>>) {
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[origin] = 0.0;
        heap.push(Reverse((OrdF64(0.0), origin)));
        while let Some(Reverse((OrdF64(d), v))) = heap.pop() {
            if done[v] {
                continue;
            }
            done[v] = true;
            for &k in &self.outgoing[v] {
                let w = self.links[k].to;
                let nd = d + costs[k];
                if nd < dist[w] {
                    dist[w] = nd;
                    pred[w] = Some(k);
                    heap.push(Reverse((OrdF64(nd), w)));
                }
            }
        }
        (dist, pred)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// `t_f (1 + alpha (v/c)^beta)`.
pub fn bpr_time(t_f: f64, v: f64, c: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(Error::domain(format!("volume must be non-negative, got {v}")));
    }
    if !(t_f > 0.0 && c > 0.0) {
        return Err(Error::domain("free-flow time and capacity must be positive"));
    }
    Ok(t_f * (1.0 + alpha * (v / c).powf(beta)))
}

/// Trips between network nodes. Origins and destinations keep their zone
/// labels for error messages.
#[derive(Debug, Clone, PartialEq)]
pub struct ODDemand {
    pub entries: Vec<DemandEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandEntry {
    pub origin: String,
    pub destination: String,
    pub origin_node: usize,
    pub destination_node: usize,
    pub trips: f64,
}

/// Maps each zone label to its centroid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneMap {
    nodes: Vec<usize>,
}

impl ZoneMap {
    /// `pairs` are (zone, node name); zones absent from `pairs` attach to the
    /// node of the same name.
    pub fn new(zones: &[String], network: &Network, pairs: &HashMap<String, String>) -> Result<Self> {
        let nodes = zones
            .iter()
            .map(|z| {
                let node = pairs.get(z).unwrap_or(z);
                network
                    .node_index(node)
                    .ok_or_else(|| Error::Config(format!("zone '{z}' attaches to unknown node '{node}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { nodes })
    }

    pub fn node(&self, zone: usize) -> usize {
        self.nodes[zone]
    }
}

impl ODDemand {
    /// Inter-zonal cells of a vectorised OD row, multiplied by `scaling`.
    pub fn from_cells(zones: &[String], zone_map: &ZoneMap, counts: &[f64], scaling: f64) -> Result<Self> {
        let m = zones.len();
        if counts.len() != m * m {
            return Err(Error::domain("OD row length is not the square of the zone count"));
        }
        if !(scaling > 0.0 && scaling.is_finite()) {
            return Err(Error::Config(format!("scaling factor must be positive, got {scaling}")));
        }
        let mut entries = Vec::new();
        for o in 0..m {
            for d in 0..m {
                let t = counts[o * m + d];
                if o == d || t == 0.0 {
                    continue;
                }
                if !(t >= 0.0) {
                    return Err(Error::domain(format!("negative demand for {} -> {}", zones[o], zones[d])));
                }
                entries.push(DemandEntry {
                    origin: zones[o].clone(),
                    destination: zones[d].clone(),
                    origin_node: zone_map.node(o),
                    destination_node: zone_map.node(d),
                    trips: t * scaling,
                });
            }
        }
        Ok(Self { entries })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub volumes: Vec<f64>,
    pub iterations: usize,
    /// `(sum t x - sum t y) / sum t x` at the final costs.
    pub relative_gap: f64,
    /// Beckmann objective after each iteration (first entry: initial AON).
    pub objective: Vec<f64>,
}

fn all_or_nothing(network: &Network, by_origin: &[(usize, Vec<(usize, f64, usize)>)], costs: &[f64], demand: &ODDemand) -> Result<(Vec<f64>, f64)> {
    let mut flows = vec![0.0; network.links.len()];
    let mut sptt = 0.0;
    for (origin, dests) in by_origin {
        let (dist, pred) = network.shortest_paths(*origin, costs);
        for &(dest, trips, entry) in dests {
            if !dist[dest].is_finite() {
                let e = &demand.entries[entry];
                return Err(Error::Unreachable {
                    origin: e.origin.clone(),
                    destination: e.destination.clone(),
                    demand: e.trips,
                });
            }
            sptt += trips * dist[dest];
            let mut node = dest;
            while let Some(k) = pred[node] {
                flows[k] += trips;
                node = network.links[k].from;
            }
        }
    }
    Ok((flows, sptt))
}

fn beckmann(network: &Network, x: &[f64]) -> f64 {
    network.links.iter().zip(x).map(|(l, &v)| l.integral(v)).sum()
}

/// Frank–Wolfe on the Beckmann objective: all-or-nothing start on free-flow
/// times, then all-or-nothing directions with an exact (bisection) line
/// search, until the relative gap is below `tol` or `max_iter` directions
/// have been taken.
pub fn due_assign(network: &Network, demand: &ODDemand, tol: f64, max_iter: usize) -> Result<Assignment> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("gap tolerance must be positive, got {tol}")));
    }
    let mut groups: HashMap<usize, Vec<(usize, f64, usize)>> = HashMap::new();
    for (i, e) in demand.entries.iter().enumerate() {
        if e.trips < 0.0 || !e.trips.is_finite() {
            return Err(Error::domain(format!("invalid demand {} for {} -> {}", e.trips, e.origin, e.destination)));
        }
        if e.trips == 0.0 || e.origin_node == e.destination_node {
            continue;
        }
        groups.entry(e.origin_node).or_default().push((e.destination_node, e.trips, i));
    }
    let mut by_origin: Vec<(usize, Vec<(usize, f64, usize)>)> = groups.into_iter().collect();
    by_origin.sort_by_key(|g| g.0);

    let free: Vec<f64> = network.links.iter().map(|l| l.t_f).collect();
    let (mut x, _) = all_or_nothing(network, &by_origin, &free, demand)?;
    let mut objective = vec![beckmann(network, &x)];
    let mut iterations = 0;
    let mut gap;
    loop {
        let costs: Vec<f64> = network.links.iter().zip(&x).map(|(l, &v)| l.time(v)).collect();
        let (y, sptt) = all_or_nothing(network, &by_origin, &costs, demand)?;
        let tstt: f64 = costs.iter().zip(&x).map(|(c, v)| c * v).sum();
        gap = if tstt > 0.0 { ((tstt - sptt) / tstt).max(0.0) } else { 0.0 };
        if gap < tol || iterations >= max_iter {
            break;
        }
        let step = line_search(network, &x, &y);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi += step * (yi - *xi);
        }
        iterations += 1;
        objective.push(beckmann(network, &x));
    }
    Ok(Assignment {
        volumes: x,
        iterations,
        relative_gap: gap,
        objective,
    })
}

/// Minimiser over [0, 1] of the Beckmann objective along `x + s (y - x)`,
/// by bisection on its (monotone) derivative.
fn line_search(network: &Network, x: &[f64], y: &[f64]) -> f64 {
    let slope = |s: f64| -> f64 {
        network
            .links
            .iter()
            .zip(x.iter().zip(y))
            .map(|(l, (&xi, &yi))| (yi - xi) * l.time(xi + s * (yi - xi)))
            .sum()
    };
    if slope(1.0) <= 0.0 {
        return 1.0;
    }
    if slope(0.0) >= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Link volumes for every ensemble row (`volumes[m][link]`).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkFlowEnsemble {
    pub volumes: Vec<Vec<f64>>,
    pub iterations: Vec<usize>,
    pub gaps: Vec<f64>,
}

impl LinkFlowEnsemble {
    /// Link-wise average over rows: the "mean state" of the network.
    pub fn mean(&self) -> Vec<f64> {
        let m = self.volumes.len() as f64;
        let l = self.volumes.first().map_or(0, Vec::len);
        let mut out = vec![0.0; l];
        for row in &self.volumes {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.into_iter().map(|v| v / m).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignSettings {
    /// Multiplier from modelled counts to the assigned hour.
    pub scaling: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AssignSettings {
    fn default() -> Self {
        Self {
            scaling: 1.0,
            tol: DEFAULT_GAP_TOLERANCE,
            max_iter: DEFAULT_MAX_ITERATIONS,
        }
    }
}

/// Assigns every replicated OD matrix of `ensemble` independently.
pub fn ensemble_assign(network: &Network, ensemble: &PredictiveEnsemble, data: &ODDataset, zone_map: &ZoneMap, settings: AssignSettings) -> Result<LinkFlowEnsemble> {
    let rows: Result<Vec<Assignment>> = ensemble
        .rows
        .par_iter()
        .enumerate()
        .map(|(m, row)| {
            let counts: Vec<f64> = row.y_pred.iter().map(|&y| y as f64).collect();
            ODDemand::from_cells(&data.zones, zone_map, &counts, settings.scaling)
                .and_then(|d| due_assign(network, &d, settings.tol, settings.max_iter))
                .map_err(|e| Error::Row { row: m, source: Box::new(e) })
        })
        .collect();
    let rows = rows?;
    Ok(LinkFlowEnsemble {
        iterations: rows.iter().map(|a| a.iterations).collect(),
        gaps: rows.iter().map(|a| a.relative_gap).collect(),
        volumes: rows.into_iter().map(|a| a.volumes).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Congestion {
    pub mean_vc: f64,
    /// Fraction of rows with V/C strictly above the threshold.
    pub exceedance: f64,
}

/// Per link: mean V/C over the ensemble and `P(V/C > threshold)`.
pub fn congestion_probability(flows: &LinkFlowEnsemble, network: &Network, threshold: f64) -> Result<Vec<Congestion>> {
    if !(threshold > 0.0) {
        return Err(Error::Config(format!("threshold must be positive, got {threshold}")));
    }
    if flows.volumes.is_empty() {
        return Err(Error::Empty("link-flow ensemble"));
    }
    let m = flows.volumes.len() as f64;
    Ok(network
        .links
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let vc = flows.volumes.iter().map(|row| row[k] / l.capacity);
            let (sum, over) = vc.fold((0.0, 0usize), |(s, o), r| (s + r, o + usize::from(r > threshold)));
            Congestion {
                mean_vc: sum / m,
                exceedance: over as f64 / m,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn link(id: &str, from: usize, to: usize, t_f: f64, c: f64) -> Link {
        Link {
            id: id.into(),
            from,
            to,
            t_f,
            capacity: c,
            link_type: LinkType::Local,
            alpha: DEFAULT_BPR_ALPHA,
            beta: DEFAULT_BPR_BETA,
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    fn demand(o: usize, d: usize, trips: f64) -> ODDemand {
        ODDemand {
            entries: vec![DemandEntry {
                origin: format!("n{o}"),
                destination: format!("n{d}"),
                origin_node: o,
                destination_node: d,
                trips,
            }],
        }
    }

    #[test]
    fn bpr_spot_values() {
        assert_eq!(bpr_time(30.0, 0.0, 100.0, 0.15, 4.0).unwrap(), 30.0);
        assert!((bpr_time(30.0, 100.0, 100.0, 0.15, 4.0).unwrap() - 1.15 * 30.0).abs() < 1e-12);
        assert!((bpr_time(30.0, 200.0, 100.0, 0.15, 4.0).unwrap() - 3.4 * 30.0).abs() < 1e-12);
        assert!(bpr_time(30.0, -1.0, 100.0, 0.15, 4.0).is_err());
    }

    #[test]
    fn identical_parallel_links_split_evenly() {
        let net = Network::new(names(2), vec![link("a", 0, 1, 10.0, 10.0), link("b", 0, 1, 10.0, 10.0)]).unwrap();
        let a = due_assign(&net, &demand(0, 1, 10.0), 1e-8, 1000).unwrap();
        assert!((a.volumes[0] - 5.0).abs() < 1e-3 && (a.volumes[1] - 5.0).abs() < 1e-3, "{:?}", a.volumes);
    }

    #[test]
    fn dominated_link_stays_empty() {
        let net = Network::new(names(2), vec![link("fast", 0, 1, 10.0, 10.0), link("slow", 0, 1, 20.0, 10.0)]).unwrap();
        let a = due_assign(&net, &demand(0, 1, 10.0), 1e-6, 200).unwrap();
        assert!(net.links[0].time(10.0) < 20.0);
        assert_eq!(a.volumes, vec![10.0, 0.0]);
        assert_eq!(a.relative_gap, 0.0);
    }

    #[test]
    fn unreachable_pair_is_named() {
        let net = Network::new(names(3), vec![link("a", 0, 1, 1.0, 1.0)]).unwrap();
        match due_assign(&net, &demand(0, 2, 1.0), 1e-4, 10) {
            Err(Error::Unreachable { origin, destination, .. }) => {
                assert_eq!((origin.as_str(), destination.as_str()), ("n0", "n2"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn objective_is_monotone_and_flows_conserve() {
        // grid with several route choices and two OD pairs
        let links = vec![
            link("01", 0, 1, 5.0, 4.0),
            link("02", 0, 2, 7.0, 6.0),
            link("13", 1, 3, 6.0, 5.0),
            link("23", 2, 3, 4.0, 3.0),
            link("12", 1, 2, 1.0, 8.0),
            link("34", 3, 4, 3.0, 9.0),
            link("24", 2, 4, 9.0, 2.0),
        ];
        let net = Network::new(names(5), links).unwrap();
        let mut d = demand(0, 4, 12.0);
        d.entries.extend(demand(1, 3, 5.0).entries);
        let a = due_assign(&net, &d, 1e-6, 500).unwrap();
        for w in a.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs());
        }
        let mut net_out = [0.0f64; 5];
        for (l, v) in net.links.iter().zip(&a.volumes) {
            net_out[l.from] += v;
            net_out[l.to] -= v;
        }
        let expected = [12.0, 5.0, 0.0, -5.0, -12.0];
        for (got, want) in net_out.iter().zip(expected) {
            assert!((got - want).abs() < 1e-6 * 17.0, "{net_out:?}");
        }
    }

    #[test]
    fn congestion_counts() {
        let net = Network::new(names(2), vec![link("a", 0, 1, 1.0, 10.0), link("b", 0, 1, 1.0, 5.0)]).unwrap();
        let flows = LinkFlowEnsemble {
            volumes: vec![vec![20.0, 10.0], vec![20.0, 3.0], vec![20.0, 5.0]],
            iterations: vec![0; 3],
            gaps: vec![0.0; 3],
        };
        let c = congestion_probability(&flows, &net, 0.95).unwrap();
        assert_eq!(c[0], Congestion { mean_vc: 2.0, exceedance: 1.0 });
        assert!((c[1].mean_vc - 18.0 / 15.0).abs() < 1e-12);
        assert_eq!(c[1].exceedance, 2.0 / 3.0);
        assert_eq!(flows.mean(), vec![20.0, 6.0]);
    }

    proptest! {
        #[test]
        fn bpr_strictly_increasing(t_f in 0.1f64..1e3, c in 1.0f64..1e4, alpha in 0.01f64..2.0, beta in 1.0f64..8.0,
                                   v in 0.0f64..1e4, dv in 1e-3f64..1e3) {
            let a = bpr_time(t_f, v, c, alpha, beta).unwrap();
            let b = bpr_time(t_f, v + dv, c, alpha, beta).unwrap();
            prop_assert!(b >= a);
            // strict once the congestion term is visible at double precision
            if alpha * ((v + dv) / c).powf(beta) > 1e-12 {
                prop_assert!(b > a);
            }
        }
    }
}
