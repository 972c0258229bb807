//! The ten-node demonstration network shipped in `fixtures/fig2.json`.
//!
//! Nodes are labelled `N1..N10` in the write-ups; `N_i` is `NodeId(i - 1)`.
//! HCs around N8 are 11, 4, 3, 5 (to N5, N6, N7, N9), N5 has two links of
//! equal deviation, and N3/N10 only have zero-HC links.

use crate::topology::{graph_from_json, NodeId, QNetGraph};

pub const FIG2_JSON: &str = include_str!("../fixtures/fig2.json");

pub fn fig2_graph() -> QNetGraph {
    graph_from_json(FIG2_JSON).expect("bundled fixture parses")
}

/// `N_i` label to node id.
pub fn label(i: u32) -> NodeId {
    assert!(i >= 1, "labels start at N1");
    NodeId(i - 1)
}
