//! Tie-breaking and uniform choices.
//!
//! Every random decision in the simulator goes through [`Chooser`], so a
//! seeded RNG drives normal runs while tests can script the exact picks of a
//! worked example.

use std::collections::VecDeque;

use rand::{Rng, RngCore};

use crate::topology::NodeId;

pub trait Chooser {
    /// Picks one element of `candidates` (sorted, non-empty).
    fn pick(&mut self, candidates: &[NodeId]) -> NodeId;

    /// Uniform index in `0..len`. Used for endpoint draws.
    fn index(&mut self, len: usize) -> usize;
}

/// Uniform choice, with the RNG consulted only when there is a real choice.
pub(crate) fn choose(chooser: &mut impl Chooser, candidates: &[NodeId]) -> NodeId {
    debug_assert!(!candidates.is_empty());
    if candidates.len() == 1 {
        candidates[0]
    } else {
        chooser.pick(candidates)
    }
}

impl<R: RngCore> Chooser for R {
    fn pick(&mut self, candidates: &[NodeId]) -> NodeId {
        candidates[self.gen_range(0..candidates.len())]
    }

    fn index(&mut self, len: usize) -> usize {
        self.gen_range(0..len)
    }
}

/// Replays a fixed list of preferred nodes.
///
/// On each pick the next scripted node is taken if it is among the candidates;
/// otherwise the smallest candidate is returned and the script is left as is.
#[derive(Clone, Debug, Default)]
pub struct ScriptedChooser {
    script: VecDeque<NodeId>,
}

impl ScriptedChooser {
    pub fn new(script: impl IntoIterator<Item = NodeId>) -> Self {
        Self {
            script: script.into_iter().collect(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.script.len()
    }
}

impl Chooser for ScriptedChooser {
    fn pick(&mut self, candidates: &[NodeId]) -> NodeId {
        match self.script.front() {
            Some(next) if candidates.contains(next) => self.script.pop_front().unwrap(),
            _ => candidates[0],
        }
    }

    fn index(&mut self, _len: usize) -> usize {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    #[test]
    fn single_candidate_does_not_touch_rng() {
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let b = a.clone();
        assert_eq!(choose(&mut a, &ids(&[4])), NodeId(4));
        assert_eq!(a, b);
    }

    #[test]
    fn scripted_skips_when_not_candidate() {
        let mut c = ScriptedChooser::new(ids(&[7, 2]));
        assert_eq!(c.pick(&ids(&[1, 2])), NodeId(1));
        assert_eq!(c.remaining(), 2);
        assert_eq!(c.pick(&ids(&[3, 7])), NodeId(7));
        assert_eq!(c.pick(&ids(&[1, 2])), NodeId(2));
        assert_eq!(c.remaining(), 0);
    }

    #[test]
    fn rng_pick_is_roughly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cands = ids(&[0, 1, 2]);
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            counts[rng.pick(&cands).index()] += 1;
        }
        for c in counts {
            assert!((800..1200).contains(&c), "{counts:?}");
        }
    }
}
