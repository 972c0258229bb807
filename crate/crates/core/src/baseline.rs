//! Reactive hop-by-hop setup, used as the cost baseline.
//!
//! Nothing is entangled ahead of time: once a request arrives, a QEnt is
//! generated on every link of a shortest physical route and the chain is
//! collapsed end to end by swapping.

use std::collections::VecDeque;
use std::io::Write;

use serde::Serialize;

use crate::choice::Chooser;
use crate::error::{Error, Result};
use crate::overlay::EntanglementOverlay;
use crate::protocol::{setup_connection, FallbackBudget};
use crate::topology::{NodeId, QNetGraph};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BaselineOutcome {
    pub qents_generated: u32,
    pub swaps: u32,
    /// Nodes recorded in the setup message, endpoints included.
    pub path_record_len: u32,
    pub path: Vec<NodeId>,
}

/// Minimum-hop route by BFS over ascending neighbour lists, so among equal
/// length routes the one through smaller ids is found first.
pub fn shortest_physical_path(g: &QNetGraph, source: NodeId, target: NodeId) -> Result<Vec<NodeId>> {
    g.check(source)?;
    g.check(target)?;
    let mut parent: Vec<Option<NodeId>> = vec![None; g.node_count()];
    let mut seen = vec![false; g.node_count()];
    seen[source.index()] = true;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        if u == target {
            let mut path = vec![target];
            let mut cur = target;
            while let Some(p) = parent[cur.index()] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Ok(path);
        }
        for &v in g.neighbors(u) {
            if !seen[v.index()] {
                seen[v.index()] = true;
                parent[v.index()] = Some(u);
                queue.push_back(v);
            }
        }
    }
    Err(Error::Unreachable {
        from: source,
        to: target,
    })
}

pub fn ietf_reactive_setup(g: &QNetGraph, source: NodeId, target: NodeId) -> Result<BaselineOutcome> {
    let path = shortest_physical_path(g, source, target)?;
    let hops = (path.len() - 1) as u32;
    Ok(BaselineOutcome {
        qents_generated: hops,
        swaps: hops.saturating_sub(1),
        path_record_len: path.len() as u32,
        path,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MethodCost {
    pub method: &'static str,
    pub source: NodeId,
    pub target: NodeId,
    pub qents: u32,
    pub swaps: u32,
    pub path_record_len: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostComparison {
    pub proactive: MethodCost,
    /// Whether the proactive setup succeeded within its retries.
    pub proactive_success: bool,
    pub baseline: MethodCost,
}

impl CostComparison {
    pub fn rows(&self) -> [&MethodCost; 2] {
        [&self.proactive, &self.baseline]
    }

    /// CSV with columns `method,source,target,qents,swaps,path_record_len`.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the proactive protocol on a copy of `o` and the reactive baseline on
/// the same endpoints. Proactive costs are summed over all attempts; its path
/// record is the last attempt's route plus the target.
pub fn compare_costs(
    g: &QNetGraph,
    o: &EntanglementOverlay,
    source: NodeId,
    target: NodeId,
    max_retries: u32,
    budget: FallbackBudget,
    chooser: &mut impl Chooser,
) -> Result<CostComparison> {
    let mut scratch = o.clone();
    let result = setup_connection(g, &mut scratch, source, target, max_retries, budget, chooser)?;
    let last = result.outcomes.last().expect("at least one attempt");
    let record = last.visited.len() as u32 + u32::from(source != target && result.success);
    let base = ietf_reactive_setup(g, source, target)?;
    Ok(CostComparison {
        proactive: MethodCost {
            method: "proactive",
            source,
            target,
            qents: result.qents_generated(),
            swaps: result.swaps(),
            path_record_len: record,
        },
        proactive_success: result.success,
        baseline: MethodCost {
            method: "ietf",
            source,
            target,
            qents: base.qents_generated,
            swaps: base.swaps,
            path_record_len: base.path_record_len,
        },
    })
}
