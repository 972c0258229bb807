//! Connection setup over the entanglement overlay.
//!
//! A setup request walks the overlay, one hop at a time, carrying the list of
//! nodes it has visited. At each node:
//!
//! 1. if the node already shares a pair with the target, or is physically
//!    adjacent to it (a direct QEnt is generated), the route is closed by a
//!    swap cascade back along the forwarding chain;
//! 2. a node reached for the first time forwards the request to the
//!    entangled partner with the most entanglements of its own;
//! 3. a node reached again has detected a loop and spends the first counter
//!    on a random unvisited entangled partner;
//! 4. when that is impossible (counter spent, or no unvisited partner left)
//!    the second counter buys a fresh QEnt to a random physical neighbour;
//! 5. with both counters spent the attempt fails.
//!
//! Every pair created along the way stays in the overlay, so failed attempts
//! still make later ones cheaper.

use serde::{Deserialize, Serialize};

use crate::choice::{choose, Chooser};
use crate::error::{Error, Result};
use crate::overlay::{EntanglementOverlay, NodePair};
use crate::topology::{NodeId, QNetGraph};

/// Loop-breaking budgets for one attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackBudget {
    /// Jumps to a random unvisited entangled partner.
    pub c1: u32,
    /// Fresh QEnts to a random physical neighbour.
    pub c2: u32,
}

impl FallbackBudget {
    pub fn new(c1: u32, c2: u32) -> Self {
        Self { c1, c2 }
    }

    /// Default budget: one of each per node.
    pub fn for_nodes(n: usize) -> Self {
        let n = n as u32;
        Self { c1: n, c2: n }
    }
}

/// One in-flight connection attempt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetupAttemptState {
    pub source: NodeId,
    pub target: NodeId,
    pub current: NodeId,
    /// Route record carried by the request, repeats included.
    pub visited: Vec<NodeId>,
    /// Loop-free forwarding chain; consecutive entries share a pair.
    pub chain: Vec<NodeId>,
    pub c1: u32,
    pub c2: u32,
}

impl SetupAttemptState {
    pub fn new(source: NodeId, target: NodeId, budget: FallbackBudget) -> Self {
        Self {
            source,
            target,
            current: source,
            visited: vec![source],
            chain: vec![source],
            c1: budget.c1,
            c2: budget.c2,
        }
    }

    pub fn is_visited(&self, v: NodeId) -> bool {
        self.visited.contains(&v)
    }

    /// The request has come back to a node it already passed through.
    pub fn is_revisit(&self) -> bool {
        self.visited.iter().filter(|&&v| v == self.current).count() > 1
    }

    fn move_to(&mut self, v: NodeId, o: &EntanglementOverlay) {
        debug_assert!(o.contains(self.current, v), "chain step {}-{v} is not entangled", self.current);
        self.visited.push(v);
        match self.chain.iter().position(|&x| x == v) {
            Some(pos) => self.chain.truncate(pos + 1),
            None => self.chain.push(v),
        }
        self.current = v;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Forward(NodeId),
    FallbackEntangled(NodeId),
    /// A direct QEnt to this physical neighbour has been generated.
    FallbackPhysical(NodeId),
    Fail,
}

/// Picks the next hop from `state.current`, spending counters and creating
/// the fallback QEnt in `o` where needed.
///
/// Callers check first that `current` is neither entangled with nor adjacent
/// to the target.
pub fn next_hop(
    state: &mut SetupAttemptState,
    g: &QNetGraph,
    o: &mut EntanglementOverlay,
    chooser: &mut impl Chooser,
) -> Decision {
    let u = state.current;
    let entangled: Vec<NodeId> = o.neighbors(u).collect();
    let unvisited: Vec<NodeId> = entangled
        .iter()
        .copied()
        .filter(|&v| !state.is_visited(v))
        .collect();
    let revisit = state.is_revisit();

    if !revisit && !unvisited.is_empty() {
        let best = entangled.iter().map(|&v| o.degree(v)).max().unwrap_or(0);
        let top: Vec<NodeId> = entangled
            .into_iter()
            .filter(|&v| o.degree(v) == best)
            .collect();
        return Decision::Forward(choose(chooser, &top));
    }

    if revisit && state.c1 > 0 && !unvisited.is_empty() {
        state.c1 -= 1;
        return Decision::FallbackEntangled(choose(chooser, &unvisited));
    }

    let physical = g.neighbors(u);
    if state.c2 > 0 && !physical.is_empty() {
        state.c2 -= 1;
        let fresh: Vec<NodeId> = physical
            .iter()
            .copied()
            .filter(|&v| !state.is_visited(v))
            .collect();
        let v = if fresh.is_empty() {
            choose(chooser, physical)
        } else {
            choose(chooser, &fresh)
        };
        o.insert(u, v);
        return Decision::FallbackPhysical(v);
    }

    Decision::Fail
}

/// One swap performed at `via`, joining `pair.u`/`pair.v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Swap {
    pub via: NodeId,
    pub pair: NodePair,
}

/// Entangles every chain node with the last one, walking back from the tail.
///
/// Node `chain[i]` swaps through `chain[i + 1]`, which is already paired with
/// the tail by then. Pairs that already exist are skipped and cost nothing.
pub fn swap_cascade(chain: &[NodeId], o: &mut EntanglementOverlay) -> Vec<Swap> {
    let mut swaps = Vec::new();
    if chain.len() < 3 {
        return swaps;
    }
    let last = *chain.last().unwrap();
    for i in (0..chain.len() - 2).rev() {
        let (a, via) = (chain[i], chain[i + 1]);
        debug_assert!(o.contains(a, via) && o.contains(via, last));
        if a != last && o.insert(a, last) {
            swaps.push(Swap {
                via,
                pair: NodePair::new(a, last),
            });
        }
    }
    swaps
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttemptStatus {
    Success,
    Failure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    #[serde(rename = "forward")]
    Forward,
    #[serde(rename = "fallback_ent")]
    FallbackEntangled,
    #[serde(rename = "fallback_phys")]
    FallbackPhysical,
    #[serde(rename = "qent")]
    Qent,
    #[serde(rename = "swap")]
    Swap,
    #[serde(rename = "fail")]
    Fail,
    #[serde(rename = "success")]
    Success,
}

/// One line of the decision trace.
///
/// For `swap`, `at` is the node that gains the pair and `to` the far end;
/// for `qent`, the two ends of the generated pair. Counters are the values
/// after the decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub at: NodeId,
    pub decision: TraceKind,
    pub to: Option<NodeId>,
    pub c1: u32,
    pub c2: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptOutcome {
    pub status: AttemptStatus,
    /// Forwarding moves made.
    pub hops: u32,
    /// Direct QEnt generations.
    pub qents_generated: u32,
    pub swaps: u32,
    /// Pairs this attempt added to the overlay, in creation order.
    pub new_pairs: Vec<NodePair>,
    /// Links on which a direct QEnt was generated.
    pub generated: Vec<NodePair>,
    pub visited: Vec<NodeId>,
    pub trace: Vec<TraceRecord>,
}

impl AttemptOutcome {
    pub fn is_success(&self) -> bool {
        self.status == AttemptStatus::Success
    }

    /// JSON lines, one record per line.
    pub fn trace_jsonl(&self) -> String {
        self.trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace serialization") + "\n")
            .collect()
    }
}

struct Recorder<'a> {
    o: &'a mut EntanglementOverlay,
    out: AttemptOutcome,
}

impl Recorder<'_> {
    fn log(&mut self, at: NodeId, decision: TraceKind, to: Option<NodeId>, state: &SetupAttemptState) {
        self.out.trace.push(TraceRecord {
            at,
            decision,
            to,
            c1: state.c1,
            c2: state.c2,
        });
    }

    fn qent(&mut self, a: NodeId, b: NodeId, state: &SetupAttemptState) {
        if self.o.insert(a, b) {
            self.out.new_pairs.push(NodePair::new(a, b));
        }
        self.out.qents_generated += 1;
        self.out.generated.push(NodePair::new(a, b));
        self.log(a, TraceKind::Qent, Some(b), state);
    }

    fn finish(mut self, state: &SetupAttemptState) -> AttemptOutcome {
        let mut chain = state.chain.clone();
        chain.push(state.target);
        for s in swap_cascade(&chain, self.o) {
            self.out.swaps += 1;
            self.out.new_pairs.push(s.pair);
            let gained = if s.pair.u == state.target { s.pair.v } else { s.pair.u };
            self.log(gained, TraceKind::Swap, Some(state.target), state);
        }
        self.log(state.current, TraceKind::Success, Some(state.target), state);
        self.out.status = AttemptStatus::Success;
        self.out.visited = state.visited.clone();
        self.out.hops = (state.visited.len() - 1) as u32;
        self.out
    }
}

/// Runs one attempt from `source` to `target`; all overlay additions persist.
pub fn attempt_connection(
    g: &QNetGraph,
    o: &mut EntanglementOverlay,
    source: NodeId,
    target: NodeId,
    budget: FallbackBudget,
    chooser: &mut impl Chooser,
) -> AttemptOutcome {
    let mut rec = Recorder {
        o,
        out: AttemptOutcome {
            status: AttemptStatus::Failure,
            hops: 0,
            qents_generated: 0,
            swaps: 0,
            new_pairs: Vec::new(),
            generated: Vec::new(),
            visited: vec![source],
            trace: Vec::new(),
        },
    };
    if source == target {
        rec.out.status = AttemptStatus::Success;
        return rec.out;
    }

    let mut state = SetupAttemptState::new(source, target, budget);
    // Each step grows the visited set or spends a counter within two steps.
    let max_steps = 2 * (g.node_count() + budget.c1 as usize + budget.c2 as usize) + 2;
    for _ in 0..max_steps {
        let u = state.current;
        if rec.o.contains(u, target) {
            return rec.finish(&state);
        }
        if g.are_adjacent(u, target) {
            rec.qent(u, target, &state);
            return rec.finish(&state);
        }
        let pairs_before = rec.o.len();
        match next_hop(&mut state, g, rec.o, chooser) {
            Decision::Forward(v) => {
                rec.log(u, TraceKind::Forward, Some(v), &state);
                state.move_to(v, rec.o);
            }
            Decision::FallbackEntangled(v) => {
                rec.log(u, TraceKind::FallbackEntangled, Some(v), &state);
                state.move_to(v, rec.o);
            }
            Decision::FallbackPhysical(v) => {
                rec.log(u, TraceKind::FallbackPhysical, Some(v), &state);
                // next_hop already inserted the pair
                if rec.o.len() > pairs_before {
                    rec.out.new_pairs.push(NodePair::new(u, v));
                }
                rec.out.qents_generated += 1;
                rec.out.generated.push(NodePair::new(u, v));
                rec.log(u, TraceKind::Qent, Some(v), &state);
                state.move_to(v, rec.o);
            }
            Decision::Fail => break,
        }
    }
    rec.log(state.current, TraceKind::Fail, None, &state);
    rec.out.visited = state.visited.clone();
    rec.out.hops = (state.visited.len() - 1) as u32;
    rec.out
}

/// Aggregate over the attempts of one connection request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionResult {
    pub success: bool,
    pub attempts_used: u32,
    pub failures: u32,
    pub outcomes: Vec<AttemptOutcome>,
}

impl ConnectionResult {
    pub fn qents_generated(&self) -> u32 {
        self.outcomes.iter().map(|a| a.qents_generated).sum()
    }

    pub fn swaps(&self) -> u32 {
        self.outcomes.iter().map(|a| a.swaps).sum()
    }
}

/// Retries the attempt up to `max_retries` times. Each attempt starts with a
/// fresh route record and fresh counters; the overlay is shared.
pub fn setup_connection(
    g: &QNetGraph,
    o: &mut EntanglementOverlay,
    source: NodeId,
    target: NodeId,
    max_retries: u32,
    budget: FallbackBudget,
    chooser: &mut impl Chooser,
) -> Result<ConnectionResult> {
    if max_retries == 0 {
        return Err(Error::invalid("retries", "must be at least 1"));
    }
    g.check(source)?;
    g.check(target)?;
    let mut outcomes = Vec::new();
    for _ in 0..max_retries {
        let outcome = attempt_connection(g, o, source, target, budget, chooser);
        let done = outcome.is_success();
        outcomes.push(outcome);
        if done {
            break;
        }
    }
    let success = outcomes.last().is_some_and(AttemptOutcome::is_success);
    let attempts_used = outcomes.len() as u32;
    Ok(ConnectionResult {
        success,
        attempts_used,
        failures: attempts_used - success as u32,
        outcomes,
    })
}

/// Data transfer over an established connection: each link that carried a
/// directly generated QEnt in the successful attempt gains one HC.
pub fn record_data_transfer(g: &mut QNetGraph, result: &ConnectionResult) -> Result<()> {
    let last = match result.outcomes.last() {
        Some(a) if result.success && a.is_success() => a,
        _ => return Err(Error::ConnectionNotEstablished),
    };
    for p in &last.generated {
        g.increment_hc(p.u, p.v, 1)?;
    }
    Ok(())
}
