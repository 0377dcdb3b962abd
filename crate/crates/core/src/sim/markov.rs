//! Object-state Markov chain driving the agent.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::trajectory::Primitive;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarkovState {
    Held,
    OnCounter,
    OnGround,
}

impl fmt::Display for MarkovState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

const FROM_HELD: &[Primitive] = &[Primitive::PutDown, Primitive::Throw];
const FROM_SURFACE: &[Primitive] = &[Primitive::PickUp, Primitive::Push, Primitive::Hit];

/// Primitives the agent may execute from `state`.
pub fn legal_primitives(state: MarkovState) -> &'static [Primitive] {
    match state {
        MarkovState::Held => FROM_HELD,
        MarkovState::OnCounter | MarkovState::OnGround => FROM_SURFACE,
    }
}

pub fn is_legal(state: MarkovState, primitive: Primitive) -> bool {
    legal_primitives(state).contains(&primitive)
}

/// Uniform draw among the primitives legal from `state`.
pub fn next_primitive<R: Rng + ?Sized>(state: MarkovState, rng: &mut R) -> Primitive {
    let options = legal_primitives(state);
    options[rng.random_range(0..options.len())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    #[test]
    fn support_matches_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (state, expected) in [
            (MarkovState::Held, vec![Primitive::PutDown, Primitive::Throw]),
            (
                MarkovState::OnCounter,
                vec![Primitive::PickUp, Primitive::Push, Primitive::Hit],
            ),
            (
                MarkovState::OnGround,
                vec![Primitive::PickUp, Primitive::Push, Primitive::Hit],
            ),
        ] {
            let mut seen = std::collections::BTreeSet::new();
            for _ in 0..1000 {
                let p = next_primitive(state, &mut rng);
                assert!(expected.contains(&p), "{p} drawn from {state}");
                seen.insert(p);
            }
            assert_eq!(seen.len(), expected.len());
        }
    }

    #[test]
    fn draws_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for state in [MarkovState::Held, MarkovState::OnGround] {
            let n = 100_000;
            let mut counts: HashMap<Primitive, usize> = HashMap::new();
            for _ in 0..n {
                *counts.entry(next_primitive(state, &mut rng)).or_default() += 1;
            }
            let expected = 1.0 / legal_primitives(state).len() as f64;
            for (p, c) in counts {
                let freq = c as f64 / n as f64;
                assert!((freq - expected).abs() < 0.03, "{p}: {freq}");
            }
        }
    }
}
