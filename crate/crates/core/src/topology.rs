//! Physical topology: nodes, links and their history counts.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense node index in `[0, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Undirected physical link, stored with `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicalLink {
    pub u: NodeId,
    pub v: NodeId,
    /// History count: entangled qubits used on this link so far.
    pub hc: u32,
}

impl PhysicalLink {
    pub fn new(a: NodeId, b: NodeId, hc: u32) -> Self {
        let (u, v) = if a <= b { (a, b) } else { (b, a) };
        Self { u, v, hc }
    }
}

/// Undirected physical network with a history count on every link.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QNetGraph {
    n: usize,
    /// Sorted neighbour lists.
    adj: Vec<Vec<NodeId>>,
    /// Keyed by `(min, max)`.
    hcs: BTreeMap<(NodeId, NodeId), u32>,
}

fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl QNetGraph {
    /// Graph with `n` nodes and no links.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            adj: vec![Vec::new(); n],
            hcs: BTreeMap::new(),
        }
    }

    pub fn from_links(n: usize, links: impl IntoIterator<Item = PhysicalLink>) -> Result<Self> {
        let mut g = Self::new(n);
        for l in links {
            g.add_link(l.u, l.v, l.hc)?;
        }
        Ok(g)
    }

    pub fn add_link(&mut self, a: NodeId, b: NodeId, hc: u32) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Err(Error::invalid("edges", format!("self-loop on node {a}")));
        }
        if self.hcs.insert(key(a, b), hc).is_some() {
            return Err(Error::invalid("edges", format!("duplicate link {a}-{b}")));
        }
        for (x, y) in [(a, b), (b, a)] {
            let list = &mut self.adj[x.index()];
            let pos = list.binary_search(&y).unwrap_err();
            list.insert(pos, y);
        }
        Ok(())
    }

    pub fn check(&self, u: NodeId) -> Result<()> {
        if u.index() < self.n {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { node: u, n: self.n })
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn link_count(&self) -> usize {
        self.hcs.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n).map(NodeId::from)
    }

    /// Neighbours of `u` in ascending order.
    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.adj[u.index()]
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.adj[u.index()].len()
    }

    pub fn hc(&self, a: NodeId, b: NodeId) -> Option<u32> {
        self.hcs.get(&key(a, b)).copied()
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.hcs.contains_key(&key(a, b))
    }

    /// Links sorted lexicographically by `(u, v)`.
    pub fn links(&self) -> impl Iterator<Item = PhysicalLink> + '_ {
        self.hcs
            .iter()
            .map(|(&(u, v), &hc)| PhysicalLink { u, v, hc })
    }

    /// Adds `by` to the history count of an existing link.
    pub fn increment_hc(&mut self, a: NodeId, b: NodeId, by: u32) -> Result<()> {
        match self.hcs.get_mut(&key(a, b)) {
            Some(hc) => {
                *hc = hc.saturating_add(by);
                Ok(())
            }
            None => Err(Error::invalid("link", format!("no physical link {a}-{b}"))),
        }
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([NodeId(0)]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }
}

/// Parameters for [`generate_graph`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub n: usize,
    pub avg_degree: f64,
    pub hc_max: u32,
    /// Resampling cap before the sparsity is declared infeasible.
    pub max_attempts: u32,
}

impl GraphParams {
    pub const DEFAULT_HC_MAX: u32 = 15;
    pub const DEFAULT_MAX_ATTEMPTS: u32 = 100_000;

    pub fn new(n: usize, avg_degree: f64) -> Self {
        Self {
            n,
            avg_degree,
            hc_max: Self::DEFAULT_HC_MAX,
            max_attempts: Self::DEFAULT_MAX_ATTEMPTS,
        }
    }

    pub fn with_hc_max(mut self, hc_max: u32) -> Self {
        self.hc_max = hc_max;
        self
    }

    pub fn edge_probability(&self) -> f64 {
        self.avg_degree / (self.n as f64 - 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("nodes", format!("need at least 2 nodes, got {}", self.n)));
        }
        if self.avg_degree.is_nan() || self.avg_degree <= 0.0 || self.avg_degree > (self.n - 1) as f64 {
            return Err(Error::invalid(
                "avg_degree",
                format!("must lie in (0, {}], got {}", self.n - 1, self.avg_degree),
            ));
        }
        if self.max_attempts == 0 {
            return Err(Error::invalid("max_attempts", "must be at least 1"));
        }
        Ok(())
    }
}

/// Samples a connected G(n, p) graph with `p = avg_degree / (n - 1)`.
///
/// Disconnected samples are discarded and redrawn from the same stream. Once
/// a connected link set is found, each link's HC is drawn uniformly from
/// `0..=hc_max` in link order.
pub fn generate_graph<R: Rng + ?Sized>(params: &GraphParams, rng: &mut R) -> Result<QNetGraph> {
    params.validate()?;
    let n = params.n;
    let p = params.edge_probability().min(1.0);
    for _ in 0..params.max_attempts {
        let mut g = QNetGraph::new(n);
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.gen_bool(p) {
                    g.add_link(u.into(), v.into(), 0)?;
                }
            }
        }
        if !g.is_connected() {
            continue;
        }
        for hc in g.hcs.values_mut() {
            *hc = rng.gen_range(0..=params.hc_max);
        }
        return Ok(g);
    }
    Err(Error::InfeasibleSparsity {
        n,
        avg_degree: params.avg_degree,
        attempts: params.max_attempts,
    })
}

#[derive(Serialize)]
struct GraphFile {
    n: usize,
    edges: Vec<PhysicalLink>,
}

#[derive(Deserialize)]
struct RawGraphFile {
    n: Option<i64>,
    edges: Option<Vec<RawEdge>>,
}

#[derive(Deserialize)]
struct RawEdge {
    u: Option<i64>,
    v: Option<i64>,
    hc: Option<i64>,
}

/// Canonical JSON: `{"n": .., "edges": [{"u", "v", "hc"}, ..]}` with `u < v`,
/// sorted, pretty-printed, newline-terminated.
pub fn graph_to_json(g: &QNetGraph) -> String {
    let file = GraphFile {
        n: g.n,
        edges: g.links().collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("graph serialization");
    s.push('\n');
    s
}

pub fn save_graph<W: Write>(g: &QNetGraph, mut sink: W) -> Result<()> {
    sink.write_all(graph_to_json(g).as_bytes())?;
    Ok(())
}

pub fn graph_from_json(s: &str) -> Result<QNetGraph> {
    let raw: RawGraphFile = serde_json::from_str(s)?;
    let n = raw.n.ok_or_else(|| Error::parse("n", "missing"))?;
    if n < 0 || n > u32::MAX as i64 {
        return Err(Error::parse("n", format!("out of range: {n}")));
    }
    let n = n as usize;
    let edges = raw.edges.ok_or_else(|| Error::parse("edges", "missing"))?;
    let mut g = QNetGraph::new(n);
    for (i, e) in edges.iter().enumerate() {
        let node = |val: Option<i64>, name: &str| -> Result<NodeId> {
            let field = format!("edges[{i}].{name}");
            let x = val.ok_or_else(|| Error::parse(field.clone(), "missing"))?;
            if x < 0 || x >= n as i64 {
                return Err(Error::parse(field, format!("node {x} outside [0, {n})")));
            }
            Ok(NodeId(x as u32))
        };
        let u = node(e.u, "u")?;
        let v = node(e.v, "v")?;
        let hc = e
            .hc
            .ok_or_else(|| Error::parse(format!("edges[{i}].hc"), "missing"))?;
        if hc < 0 || hc > u32::MAX as i64 {
            return Err(Error::parse(
                format!("edges[{i}].hc"),
                format!("history count must be a non-negative integer, got {hc}"),
            ));
        }
        if u == v {
            return Err(Error::parse(format!("edges[{i}]"), format!("self-loop on node {u}")));
        }
        if g.are_adjacent(u, v) {
            return Err(Error::parse(format!("edges[{i}]"), format!("duplicate link {u}-{v}")));
        }
        g.add_link(u, v, hc as u32)?;
    }
    Ok(g)
}

pub fn load_graph<R: Read>(mut source: R) -> Result<QNetGraph> {
    let mut s = String::new();
    source.read_to_string(&mut s)?;
    graph_from_json(&s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn star(k: usize) -> QNetGraph {
        QNetGraph::from_links(k + 1, (1..=k).map(|i| PhysicalLink::new(NodeId(0), i.into(), 1)))
            .unwrap()
    }

    #[test]
    fn two_nodes_force_single_link() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = generate_graph(&GraphParams::new(2, 1.0), &mut rng).unwrap();
            assert_eq!(g.link_count(), 1);
            assert_eq!(g.degree(NodeId(0)), 1);
            assert_eq!(g.degree(NodeId(1)), 1);
        }
    }

    #[test]
    fn star_degree() {
        let g = star(5);
        assert_eq!(g.degree(NodeId(0)), 5);
        assert_eq!(g.degree(NodeId(3)), 1);
    }

    #[test]
    fn same_seed_same_graph() {
        let p = GraphParams::new(10, 2.4);
        let a = generate_graph(&p, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = generate_graph(&p, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(graph_to_json(&a), graph_to_json(&b));
        assert!(a.is_connected());
    }

    #[test]
    fn hc_within_range() {
        let p = GraphParams::new(30, 5.0).with_hc_max(4);
        let g = generate_graph(&p, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert!(g.links().all(|l| l.hc <= 4));
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_graph(&GraphParams::new(1, 1.0), &mut rng).is_err());
        assert!(generate_graph(&GraphParams::new(5, 0.0), &mut rng).is_err());
        assert!(generate_graph(&GraphParams::new(5, 4.5), &mut rng).is_err());
    }

    #[test]
    fn infeasible_sparsity_is_reported() {
        let mut p = GraphParams::new(200, 0.5);
        p.max_attempts = 20;
        let err = generate_graph(&p, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::InfeasibleSparsity { attempts: 20, .. }), "{err}");
    }

    #[test]
    fn complete_graph_at_max_degree() {
        let g = generate_graph(&GraphParams::new(8, 7.0), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(g.link_count(), 28);
    }

    #[test]
    fn rejects_duplicate_edge() {
        let s = r#"{"n": 3, "edges": [{"u": 0, "v": 1, "hc": 2}, {"u": 1, "v": 0, "hc": 3}]}"#;
        match graph_from_json(s) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "edges[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_hc() {
        let s = r#"{"n": 3, "edges": [{"u": 0, "v": 1, "hc": -1}]}"#;
        match graph_from_json(s) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "edges[0].hc"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_and_out_of_range_fields() {
        assert!(matches!(
            graph_from_json(r#"{"edges": []}"#),
            Err(Error::Parse { ref field, .. }) if field == "n"
        ));
        assert!(matches!(
            graph_from_json(r#"{"n": 2, "edges": [{"u": 0, "v": 2, "hc": 1}]}"#),
            Err(Error::Parse { ref field, .. }) if field == "edges[0].v"
        ));
        assert!(matches!(
            graph_from_json(r#"{"n": 2, "edges": [{"u": 1, "v": 1, "hc": 1}]}"#),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn json_layout_is_sorted() {
        let g = QNetGraph::from_links(
            3,
            [PhysicalLink::new(NodeId(2), NodeId(1), 4), PhysicalLink::new(NodeId(0), NodeId(2), 1)],
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&graph_to_json(&g)).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"n": 3, "edges": [{"u": 0, "v": 2, "hc": 1}, {"u": 1, "v": 2, "hc": 4}]})
        );
    }
}
