//! History-count driven partner selection and swap closure.
//!
//! A node looks at the HCs of its links, takes their mean and picks the
//! neighbour whose HC is closest to it (smallest squared deviation). This
//! avoids always spending entanglement on the busiest link. Links with a zero
//! HC have never carried traffic; they neither count towards the mean nor
//! become partners.

use std::collections::BTreeMap;

use crate::choice::{choose, Chooser};
use crate::overlay::EntanglementOverlay;
use crate::topology::{NodeId, QNetGraph};

/// HC statistics of one node over its eligible (HC > 0) links.
#[derive(Clone, Debug, PartialEq)]
pub struct HcStats {
    pub node: NodeId,
    pub mean: f64,
    /// `(neighbour, (mean - hc)^2)` in ascending neighbour order.
    pub deviations: Vec<(NodeId, f64)>,
}

fn eligible(g: &QNetGraph, u: NodeId) -> impl Iterator<Item = (NodeId, u32)> + '_ {
    g.neighbors(u).iter().filter_map(move |&v| {
        let hc = g.hc(u, v).expect("adjacency and HC map agree");
        (hc > 0).then_some((v, hc))
    })
}

/// Mean HC over `u`'s eligible links, or `None` when every link has HC 0.
pub fn mean_hc(g: &QNetGraph, u: NodeId) -> Option<f64> {
    let (sum, count) = eligible(g, u).fold((0u64, 0u64), |(s, c), (_, hc)| (s + hc as u64, c + 1));
    (count > 0).then(|| sum as f64 / count as f64)
}

pub fn squared_deviation(mean: f64, hc: u32) -> f64 {
    let d = mean - hc as f64;
    d * d
}

pub fn hc_stats(g: &QNetGraph, u: NodeId) -> Option<HcStats> {
    let mean = mean_hc(g, u)?;
    let deviations = eligible(g, u)
        .map(|(v, hc)| (v, squared_deviation(mean, hc)))
        .collect();
    Some(HcStats {
        node: u,
        mean,
        deviations,
    })
}

/// Neighbours of `u` whose squared deviation is minimal.
pub fn best_partners(g: &QNetGraph, u: NodeId) -> Vec<NodeId> {
    let Some(stats) = hc_stats(g, u) else {
        return Vec::new();
    };
    let min = stats
        .deviations
        .iter()
        .map(|&(_, d)| d)
        .fold(f64::INFINITY, f64::min);
    stats
        .deviations
        .into_iter()
        .filter(|&(_, d)| d == min)
        .map(|(v, _)| v)
        .collect()
}

/// Proactive partner of `u`; ties are broken by `chooser`.
pub fn select_proactive_partner(
    g: &QNetGraph,
    u: NodeId,
    chooser: &mut impl Chooser,
) -> Option<NodeId> {
    let best = best_partners(g, u);
    (!best.is_empty()).then(|| choose(chooser, &best))
}

/// Every node, in ascending order, entangles with its selected partner.
pub fn build_proactive_overlay(g: &QNetGraph, chooser: &mut impl Chooser) -> EntanglementOverlay {
    let mut o = EntanglementOverlay::new();
    for u in g.nodes() {
        if let Some(v) = select_proactive_partner(g, u, chooser) {
            o.insert(u, v);
        }
    }
    o
}

/// Union-find over the nodes that appear in an overlay.
struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Connected components of the overlay, each sorted, ordered by smallest member.
pub fn components(o: &EntanglementOverlay) -> Vec<Vec<NodeId>> {
    let nodes: Vec<NodeId> = o.nodes().collect();
    let index: BTreeMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let mut dsu = DisjointSet::new(nodes.len());
    for p in o.pairs() {
        dsu.union(index[&p.u], index[&p.v]);
    }
    let mut groups: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    for (i, &u) in nodes.iter().enumerate() {
        groups.entry(dsu.find(i)).or_default().push(u);
    }
    let mut out: Vec<Vec<NodeId>> = groups.into_values().collect();
    out.sort_by_key(|c| c[0]);
    out
}

/// Repeated swapping until every overlay component is a clique.
pub fn swap_closure(o: &EntanglementOverlay) -> EntanglementOverlay {
    let mut closed = o.clone();
    for comp in components(o) {
        for (i, &a) in comp.iter().enumerate() {
            for &b in &comp[i + 1..] {
                closed.insert(a, b);
            }
        }
    }
    closed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::ScriptedChooser;
    use crate::overlay::NodePair;
    use crate::topology::PhysicalLink;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    /// Node 0 linked to 1..=k with the given HCs.
    fn fan(hcs: &[u32]) -> QNetGraph {
        QNetGraph::from_links(
            hcs.len() + 1,
            hcs.iter()
                .enumerate()
                .map(|(i, &hc)| PhysicalLink::new(n(0), (i + 1).into(), hc)),
        )
        .unwrap()
    }

    #[test]
    fn mean_of_single_neighbor() {
        assert_eq!(mean_hc(&fan(&[7]), n(0)), Some(7.0));
    }

    #[test]
    fn all_zero_hc_means_no_partner() {
        let g = fan(&[0, 0, 0]);
        assert_eq!(mean_hc(&g, n(0)), None);
        assert_eq!(select_proactive_partner(&g, n(0), &mut ScriptedChooser::default()), None);
        assert!(build_proactive_overlay(&g, &mut ScriptedChooser::default()).is_empty());
    }

    #[test]
    fn zero_hc_links_are_ignored() {
        let g = fan(&[0, 6, 2]);
        assert_eq!(mean_hc(&g, n(0)), Some(4.0));
        let stats = hc_stats(&g, n(0)).unwrap();
        assert_eq!(stats.deviations, vec![(n(2), 4.0), (n(3), 4.0)]);
    }

    #[test]
    fn deviation_of_mean_is_zero() {
        assert_eq!(squared_deviation(9.0, 9), 0.0);
        assert_eq!(squared_deviation(5.75, 11), 27.5625);
        assert_eq!(squared_deviation(5.75, 5), 0.5625);
    }

    #[test]
    fn two_node_graph_gives_single_pair() {
        let g = fan(&[3]);
        let o = build_proactive_overlay(&g, &mut ScriptedChooser::default());
        assert_eq!(o.pairs().collect::<Vec<_>>(), vec![NodePair::new(n(0), n(1))]);
    }

    #[test]
    fn closure_of_chain_adds_end_pair() {
        let o: EntanglementOverlay = [NodePair::new(n(0), n(1)), NodePair::new(n(1), n(2))]
            .into_iter()
            .collect();
        let c = swap_closure(&o);
        assert_eq!(c.difference(&o), vec![NodePair::new(n(0), n(2))]);
        assert!(swap_closure(&EntanglementOverlay::new()).is_empty());
    }

    #[test]
    fn components_are_sorted() {
        let o: EntanglementOverlay = [NodePair::new(n(5), n(9)), NodePair::new(n(2), n(7)), NodePair::new(n(9), n(3))]
            .into_iter()
            .collect();
        assert_eq!(
            components(&o),
            vec![vec![n(2), n(7)], vec![n(3), n(5), n(9)]]
        );
    }
}
