//! Proactive entanglement distribution and connection setup for quantum networks.
//!
//! Every physical link carries a history count (HC) of entangled qubits it has
//! carried. Nodes use those counts to pick one neighbour each for a proactive
//! entangled pair ([`proactive`]), pairs are extended by entanglement swapping
//! until every overlay component is a clique, and connection requests are then
//! routed over the resulting overlay with a loop-breaking, retrying state
//! machine ([`protocol`]). [`baseline`] implements the reactive hop-by-hop
//! alternative for cost comparison and [`experiments`] sweeps seeded random
//! networks to produce failure-rate tables.

pub mod baseline;
pub mod choice;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod overlay;
pub mod proactive;
pub mod protocol;
pub mod topology;

pub use choice::{Chooser, ScriptedChooser};
pub use error::{Error, Result};
pub use overlay::{EntanglementOverlay, NodePair};
pub use topology::{NodeId, PhysicalLink, QNetGraph};
