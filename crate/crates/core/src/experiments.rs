//! Seeded experiment sweeps and their failure-rate tables.
//!
//! Replicate `i` of every configuration point uses seed `base_seed + i`, and
//! draws from one ChaCha stream in a fixed order: graph links, HCs, proactive
//! tie-breaks, then for each connection its endpoints and protocol choices.
//! Points that differ only in retries or degree therefore share seeds.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice::Chooser;
use crate::error::{Error, Result};
use crate::proactive::{build_proactive_overlay, swap_closure};
use crate::protocol::{setup_connection, ConnectionResult, FallbackBudget};
use crate::topology::{generate_graph, GraphParams, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

impl Experiment {
    /// Loop-breaking budget used by the default sweeps. A budget that grows
    /// with the node count lets nearly every request succeed on its first
    /// attempt, which leaves nothing for the retry axis to show.
    pub const SWEEP_BUDGET: FallbackBudget = FallbackBudget { c1: 2, c2: 2 };

    pub const ALL: [Experiment; 4] = [Self::Fig3, Self::Fig4, Self::Fig5, Self::Fig6];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fig3 => "fig3",
            Self::Fig4 => "fig4",
            Self::Fig5 => "fig5",
            Self::Fig6 => "fig6",
        }
    }

    /// Default sweep for this experiment.
    pub fn default_config(self) -> ExperimentConfig {
        let base = ExperimentConfig {
            nodes: vec![20],
            retries: (1..=10).collect(),
            connections: 50,
            avg_degree: 3.0,
            hc_max: GraphParams::DEFAULT_HC_MAX,
            replicates: 100,
            base_seed: 0,
            budget: Some(Self::SWEEP_BUDGET),
            max_graph_attempts: GraphParams::DEFAULT_MAX_ATTEMPTS,
        };
        match self {
            Self::Fig3 => ExperimentConfig {
                nodes: (1..=10).map(|i| i * 10).collect(),
                connections: 1,
                ..base
            },
            Self::Fig4 | Self::Fig5 => base,
            Self::Fig6 => ExperimentConfig {
                nodes: vec![100],
                avg_degree: 10.0,
                ..base
            },
        }
    }

    pub fn run(self, config: &ExperimentConfig) -> Result<MetricsTable> {
        match self {
            Self::Fig3 => run_single_connection_sweep(config),
            Self::Fig4 => run_multi_connection_sweep(config),
            Self::Fig5 => run_variance_sweep(config),
            Self::Fig6 => run_sparsity_comparison(config),
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::invalid("experiment", format!("unknown experiment `{s}` (fig3|fig4|fig5|fig6)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub nodes: Vec<usize>,
    pub retries: Vec<u32>,
    /// Sequential connection requests per replicate.
    pub connections: usize,
    pub avg_degree: f64,
    pub hc_max: u32,
    pub replicates: usize,
    pub base_seed: u64,
    /// `None` gives each network one counter of each kind per node.
    pub budget: Option<FallbackBudget>,
    pub max_graph_attempts: u32,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("nodes", "at least one node count is required"));
        }
        if self.retries.is_empty() {
            return Err(Error::invalid("retries", "at least one retry value is required"));
        }
        if self.retries.contains(&0) {
            return Err(Error::invalid("retries", "retry values must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates", "must be at least 1"));
        }
        Ok(())
    }

    pub fn point(&self, nodes: usize, avg_degree: f64, connections: usize, max_retries: u32) -> ConfigPoint {
        ConfigPoint {
            graph: GraphParams {
                n: nodes,
                avg_degree,
                hc_max: self.hc_max,
                max_attempts: self.max_graph_attempts,
            },
            connections,
            max_retries,
            budget: self.budget.unwrap_or_else(|| FallbackBudget::for_nodes(nodes)),
        }
    }

    fn max_retries(&self) -> u32 {
        self.retries.iter().copied().max().unwrap_or(1)
    }

    fn sorted_retries(&self) -> Vec<u32> {
        let mut r = self.retries.clone();
        r.sort_unstable();
        r.dedup();
        r
    }

    fn seeds(&self) -> Range<u64> {
        self.base_seed..self.base_seed + self.replicates as u64
    }
}

/// One fully specified simulation setting.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigPoint {
    pub graph: GraphParams,
    pub connections: usize,
    pub max_retries: u32,
    pub budget: FallbackBudget,
}

/// What a single connection request cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionStats {
    pub attempts: u32,
    pub failures: u32,
    pub success: bool,
}

impl From<&ConnectionResult> for ConnectionStats {
    fn from(r: &ConnectionResult) -> Self {
        Self {
            attempts: r.attempts_used,
            failures: r.failures,
            success: r.success,
        }
    }
}

impl ConnectionStats {
    /// The stats this request would have had with only `max_retries`
    /// attempts. Exact for a request that nothing else follows, since attempt
    /// `k` sees the same overlay and random stream either way.
    pub fn truncated(self, max_retries: u32) -> Self {
        if self.attempts <= max_retries {
            self
        } else {
            Self {
                attempts: max_retries,
                failures: max_retries,
                success: false,
            }
        }
    }
}

/// Uniform ordered pair of distinct nodes.
pub fn draw_endpoints(n: usize, chooser: &mut impl Chooser) -> (NodeId, NodeId) {
    let s = chooser.index(n);
    let mut t = chooser.index(n - 1);
    if t >= s {
        t += 1;
    }
    (s.into(), t.into())
}

/// Builds a network and overlay from `seed` and issues the point's
/// connection requests one after another on the shared overlay.
pub fn run_replicate(point: &ConfigPoint, seed: u64) -> Result<Vec<ConnectionStats>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = generate_graph(&point.graph, &mut rng)?;
    let mut o = swap_closure(&build_proactive_overlay(&g, &mut rng));
    let mut out = Vec::with_capacity(point.connections);
    for _ in 0..point.connections {
        let (s, t) = draw_endpoints(g.node_count(), &mut rng);
        let r = setup_connection(&g, &mut o, s, t, point.max_retries, point.budget, &mut rng)?;
        out.push(ConnectionStats::from(&r));
    }
    Ok(out)
}

fn run_replicates(point: &ConfigPoint, seeds: Range<u64>) -> Result<Vec<Vec<ConnectionStats>>> {
    seeds
        .into_par_iter()
        .map(|seed| run_replicate(point, seed))
        .collect()
}

/// All replicate runs of one (nodes, degree, retries) point.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCell {
    pub nodes: usize,
    pub avg_degree: f64,
    pub retries: u32,
    /// `runs[replicate][connection]`.
    pub runs: Vec<Vec<ConnectionStats>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Totals {
    pub attempts: u64,
    pub failures: u64,
    pub connections: u64,
    pub final_failures: u64,
}

impl Totals {
    /// Failed attempts over all attempts.
    pub fn failure_rate(&self) -> f64 {
        ratio(self.failures, self.attempts)
    }

    /// Requests that never succeeded over all requests.
    pub fn final_failure_fraction(&self) -> f64 {
        ratio(self.final_failures, self.connections)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl RawCell {
    /// Totals over the given connection indices of every run.
    pub fn totals(&self, connections: Range<usize>) -> Totals {
        let mut t = Totals::default();
        for run in &self.runs {
            let end = connections.end.min(run.len());
            for s in run.get(connections.start.min(end)..end).unwrap_or(&[]) {
                t.attempts += s.attempts as u64;
                t.failures += s.failures as u64;
                t.connections += 1;
                t.final_failures += u64::from(!s.success);
            }
        }
        t
    }

    /// Per-attempt failure rate of each connection index across replicates.
    pub fn failure_profile(&self) -> Vec<f64> {
        let len = self.runs.iter().map(Vec::len).max().unwrap_or(0);
        (0..len).map(|i| self.totals(i..i + 1).failure_rate()).collect()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    mean(&xs.iter().map(|x| (x - m) * (x - m)).collect::<Vec<_>>())
}

/// One CSV row; field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub experiment: String,
    pub nodes: usize,
    pub avg_degree: f64,
    pub connections: usize,
    pub retries: u32,
    pub replicates: usize,
    pub failure_rate: f64,
    pub final_failure_fraction: f64,
    /// Population variance of `failure_rate` across the retry axis of the
    /// row's (nodes, degree, connections) group.
    pub variance: f64,
}

impl MetricsRow {
    pub fn success_rate(&self) -> f64 {
        1.0 - self.final_failure_fraction
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub const HEADER: &'static str =
        "experiment,nodes,avg_degree,connections,retries,replicates,failure_rate,final_failure_fraction,variance";

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        if self.rows.is_empty() {
            w.write_record(Self::HEADER.split(','))?;
        }
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON array of objects keyed like the CSV columns.
    pub fn write_json<W: Write>(&self, mut sink: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut sink, &self.rows)?;
        sink.write_all(b"\n")?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn filter(&self, pred: impl Fn(&MetricsRow) -> bool) -> Vec<&MetricsRow> {
        self.rows.iter().filter(|r| pred(r)).collect()
    }
}

fn group_key(c: &RawCell) -> (usize, u64) {
    (c.nodes, c.avg_degree.to_bits())
}

/// Rows for the first `connections` requests of each cell, ordered by
/// (nodes, degree, retries), with variance taken across retries inside each
/// (nodes, degree) group.
pub fn summarize(experiment: &str, cells: &[RawCell], connections: usize) -> MetricsTable {
    let mut groups: BTreeMap<(usize, u64), Vec<&RawCell>> = BTreeMap::new();
    for c in cells {
        groups.entry(group_key(c)).or_default().push(c);
    }
    let mut rows = Vec::new();
    for mut group in groups.into_values() {
        group.sort_by_key(|c| c.retries);
        let totals: Vec<Totals> = group.iter().map(|c| c.totals(0..connections)).collect();
        let rates: Vec<f64> = totals.iter().map(Totals::failure_rate).collect();
        let variance = population_variance(&rates);
        for (c, t) in group.iter().zip(&totals) {
            rows.push(MetricsRow {
                experiment: experiment.to_string(),
                nodes: c.nodes,
                avg_degree: c.avg_degree,
                connections,
                retries: c.retries,
                replicates: c.runs.len(),
                failure_rate: t.failure_rate(),
                final_failure_fraction: t.final_failure_fraction(),
                variance,
            });
        }
    }
    MetricsTable { rows }
}

/// Single first-connection runs over (nodes x retries).
///
/// Each replicate is simulated once with the largest retry budget and cut
/// down to every smaller one with [`ConnectionStats::truncated`].
pub fn collect_single_connection(config: &ExperimentConfig) -> Result<Vec<RawCell>> {
    config.validate()?;
    let mut cells = Vec::new();
    for &n in &config.nodes {
        let point = config.point(n, config.avg_degree, 1, config.max_retries());
        let runs = run_replicates(&point, config.seeds())?;
        for r in config.sorted_retries() {
            cells.push(RawCell {
                nodes: n,
                avg_degree: config.avg_degree,
                retries: r,
                runs: runs
                    .iter()
                    .map(|run| run.iter().map(|s| s.truncated(r)).collect())
                    .collect(),
            });
        }
    }
    Ok(cells)
}

pub fn run_single_connection_sweep(config: &ExperimentConfig) -> Result<MetricsTable> {
    Ok(summarize("fig3", &collect_single_connection(config)?, 1))
}

/// `config.connections` sequential requests per replicate, simulated
/// separately for every retry value and node count.
pub fn collect_multi_connection(config: &ExperimentConfig, avg_degree: f64) -> Result<Vec<RawCell>> {
    config.validate()?;
    let mut cells = Vec::new();
    for &n in &config.nodes {
        for r in config.sorted_retries() {
            let point = config.point(n, avg_degree, config.connections, r);
            cells.push(RawCell {
                nodes: n,
                avg_degree,
                retries: r,
                runs: run_replicates(&point, config.seeds())?,
            });
        }
    }
    Ok(cells)
}

/// One block of rows per connection count `1..=connections`; a count of `c`
/// covers the first `c` requests of each replicate.
pub fn multi_connection_table(cells: &[RawCell], connections: usize) -> MetricsTable {
    let mut rows = Vec::new();
    for c in 1..=connections {
        rows.extend(summarize("fig4", cells, c).rows);
    }
    MetricsTable { rows }
}

/// One row per connection count: failure metrics averaged over the retry
/// axis and their variance across it. `retries` holds the largest retry value.
pub fn variance_table(cells: &[RawCell], connections: usize) -> MetricsTable {
    let mut rows = Vec::new();
    for c in 1..=connections {
        let per_retry = summarize("fig5", cells, c);
        let mut groups: BTreeMap<(usize, u64), Vec<&MetricsRow>> = BTreeMap::new();
        for row in &per_retry.rows {
            groups
                .entry((row.nodes, row.avg_degree.to_bits()))
                .or_default()
                .push(row);
        }
        for group in groups.values() {
            let rates: Vec<f64> = group.iter().map(|r| r.failure_rate).collect();
            let finals: Vec<f64> = group.iter().map(|r| r.final_failure_fraction).collect();
            let first = group[0];
            rows.push(MetricsRow {
                experiment: "fig5".into(),
                nodes: first.nodes,
                avg_degree: first.avg_degree,
                connections: c,
                retries: group.iter().map(|r| r.retries).max().unwrap_or(0),
                replicates: first.replicates,
                failure_rate: mean(&rates),
                final_failure_fraction: mean(&finals),
                variance: population_variance(&rates),
            });
        }
    }
    MetricsTable { rows }
}

pub fn run_multi_connection_sweep(config: &ExperimentConfig) -> Result<MetricsTable> {
    let cells = collect_multi_connection(config, config.avg_degree)?;
    Ok(multi_connection_table(&cells, config.connections))
}

pub fn run_variance_sweep(config: &ExperimentConfig) -> Result<MetricsTable> {
    let cells = collect_multi_connection(config, config.avg_degree)?;
    Ok(variance_table(&cells, config.connections))
}

/// Cells for the normal network (`avg_degree`) and the sparse one (half of it).
pub fn collect_sparsity(config: &ExperimentConfig) -> Result<(Vec<RawCell>, Vec<RawCell>)> {
    let normal = collect_multi_connection(config, config.avg_degree)?;
    let sparse = collect_multi_connection(config, config.avg_degree / 2.0)?;
    Ok((normal, sparse))
}

/// Failure rates after all `connections` requests, normal and sparse arms
/// side by side (distinguished by `avg_degree`).
pub fn run_sparsity_comparison(config: &ExperimentConfig) -> Result<MetricsTable> {
    let (normal, sparse) = collect_sparsity(config)?;
    let mut cells = sparse;
    cells.extend(normal);
    Ok(summarize("fig6", &cells, config.connections))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            nodes: vec![12],
            retries: vec![1, 2, 3],
            connections: 6,
            replicates: 8,
            base_seed: 42,
            ..Experiment::Fig4.default_config()
        }
    }

    fn cell(retries: u32, runs: Vec<Vec<ConnectionStats>>) -> RawCell {
        RawCell {
            nodes: 5,
            avg_degree: 2.0,
            retries,
            runs,
        }
    }

    fn ok(attempts: u32) -> ConnectionStats {
        ConnectionStats {
            attempts,
            failures: attempts - 1,
            success: true,
        }
    }

    fn failed(attempts: u32) -> ConnectionStats {
        ConnectionStats {
            attempts,
            failures: attempts,
            success: false,
        }
    }

    #[test]
    fn variance_closed_forms() {
        assert_eq!(mean(&[0.0, 1.0]), 0.5);
        assert_eq!(population_variance(&[0.0, 1.0]), 0.25);
        assert_eq!(population_variance(&[0.3, 0.3, 0.3]), 0.0);
    }

    #[test]
    fn all_success_summarizes_to_zero() {
        let cells = vec![cell(1, vec![vec![ok(1)], vec![ok(1)]]), cell(2, vec![vec![ok(1)], vec![ok(1)]])];
        let t = summarize("x", &cells, 1);
        assert_eq!(t.rows.len(), 2);
        for r in &t.rows {
            assert_eq!((r.failure_rate, r.final_failure_fraction, r.variance), (0.0, 0.0, 0.0));
            assert_eq!(r.success_rate(), 1.0);
        }
    }

    #[test]
    fn summarize_rates() {
        // retries 1: one failure out of two attempts; retries 2: all attempts fail
        let cells = vec![cell(2, vec![vec![failed(2)]]), cell(1, vec![vec![ok(1)], vec![failed(1)]])];
        let t = summarize("x", &cells, 1);
        assert_eq!(t.rows[0].retries, 1);
        assert_eq!(t.rows[0].failure_rate, 0.5);
        assert_eq!(t.rows[0].final_failure_fraction, 0.5);
        assert_eq!(t.rows[1].failure_rate, 1.0);
        assert_eq!(t.rows[0].variance, 0.0625);
    }

    #[test]
    fn truncation() {
        assert_eq!(ok(3).truncated(5), ok(3));
        assert_eq!(ok(3).truncated(3), ok(3));
        assert_eq!(ok(3).truncated(2), failed(2));
        assert_eq!(failed(4).truncated(1), failed(1));
    }

    #[test]
    fn zero_connections_give_empty_result() {
        let cfg = small();
        let point = cfg.point(12, 3.0, 0, 2);
        assert!(run_replicate(&point, 1).unwrap().is_empty());
    }

    #[test]
    fn replicate_is_deterministic() {
        let cfg = small();
        let point = cfg.point(12, 3.0, 6, 3);
        assert_eq!(run_replicate(&point, 9).unwrap(), run_replicate(&point, 9).unwrap());
    }

    #[test]
    fn endpoints_are_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let (s, t) = draw_endpoints(4, &mut rng);
            assert_ne!(s, t);
            assert!(s.index() < 4 && t.index() < 4);
        }
    }

    #[test]
    fn csv_header_and_json_keys() {
        let cells = vec![cell(1, vec![vec![ok(1)]])];
        let t = summarize("fig4", &cells, 1);
        let csv = t.to_csv_string();
        assert!(csv.starts_with(&format!("{}\n", MetricsTable::HEADER)));
        let mut buf = Vec::new();
        t.write_json(&mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let keys: Vec<&str> = v[0].as_object().unwrap().keys().map(String::as_str).collect();
        let mut expected: Vec<&str> = MetricsTable::HEADER.split(',').collect();
        expected.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, expected);
        assert!(MetricsTable::default().to_csv_string().starts_with("experiment,"));
    }

    #[test]
    fn experiment_names_parse() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("fig7".parse::<Experiment>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = small();
        cfg.retries = vec![0, 1];
        assert!(cfg.validate().is_err());
        cfg = small();
        cfg.replicates = 0;
        assert!(cfg.validate().is_err());
        cfg = small();
        cfg.nodes.clear();
        assert!(cfg.validate().is_err());
    }
}
