//! The entanglement overlay: which node pairs currently share an entangled pair.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::NodeId;

/// Unordered node pair, normalised so that `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodePair {
    pub u: NodeId,
    pub v: NodeId,
}

impl NodePair {
    /// Panics on a self-pair.
    pub fn new(a: NodeId, b: NodeId) -> Self {
        assert_ne!(a, b, "self-pair {a}");
        if a < b {
            Self { u: a, v: b }
        } else {
            Self { u: b, v: a }
        }
    }

    pub fn contains(&self, x: NodeId) -> bool {
        self.u == x || self.v == x
    }
}

impl fmt::Display for NodePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}, {}}}", self.u, self.v)
    }
}

/// Symmetric "shares usable entanglement" relation.
///
/// Pairs are persistent facts: swapping through a pair does not consume it.
#[derive(Clone, Debug, Default)]
pub struct EntanglementOverlay {
    pairs: BTreeSet<NodePair>,
    adj: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl PartialEq for EntanglementOverlay {
    fn eq(&self, other: &Self) -> bool {
        self.pairs == other.pairs
    }
}

impl Eq for EntanglementOverlay {}

impl FromIterator<NodePair> for EntanglementOverlay {
    fn from_iter<I: IntoIterator<Item = NodePair>>(iter: I) -> Self {
        let mut o = Self::new();
        for p in iter {
            o.insert(p.u, p.v);
        }
        o
    }
}

impl EntanglementOverlay {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `true` if the pair was not present before.
    pub fn insert(&mut self, a: NodeId, b: NodeId) -> bool {
        let fresh = self.pairs.insert(NodePair::new(a, b));
        if fresh {
            self.adj.entry(a).or_default().insert(b);
            self.adj.entry(b).or_default().insert(a);
        }
        fresh
    }

    pub fn contains(&self, a: NodeId, b: NodeId) -> bool {
        a != b && self.adj.get(&a).is_some_and(|s| s.contains(&b))
    }

    /// Number of distinct nodes `u` is entangled with.
    pub fn degree(&self, u: NodeId) -> usize {
        self.adj.get(&u).map_or(0, BTreeSet::len)
    }

    /// Entangled partners of `u`, ascending.
    pub fn neighbors(&self, u: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adj.get(&u).into_iter().flatten().copied()
    }

    /// Every node that appears in at least one pair, ascending.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adj.keys().copied()
    }

    pub fn pairs(&self) -> impl Iterator<Item = NodePair> + '_ {
        self.pairs.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_superset(&self, other: &Self) -> bool {
        self.pairs.is_superset(&other.pairs)
    }

    /// Pairs in `self` that are not in `earlier`, sorted.
    pub fn difference(&self, earlier: &Self) -> Vec<NodePair> {
        self.pairs.difference(&earlier.pairs).copied().collect()
    }

    /// `{"pairs": [{"u", "v"}, ..]}`, sorted, pretty-printed, newline-terminated.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct File<'a> {
            pairs: Vec<&'a NodePair>,
        }
        let mut s = serde_json::to_string_pretty(&File {
            pairs: self.pairs.iter().collect(),
        })
        .expect("overlay serialization");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            pairs: Vec<NodePair>,
        }
        let file: File = serde_json::from_str(s)?;
        let mut o = Self::new();
        for (i, p) in file.pairs.iter().enumerate() {
            if p.u == p.v {
                return Err(Error::parse(format!("pairs[{i}]"), "self-pair"));
            }
            if !o.insert(p.u, p.v) {
                return Err(Error::parse(format!("pairs[{i}]"), "duplicate pair"));
            }
        }
        Ok(o)
    }
}
