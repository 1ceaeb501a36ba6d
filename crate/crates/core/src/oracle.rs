//! Factor oracle over symbol sequences and the stochastic improvisation walk.
//!
//! Construction is the incremental suffix-link algorithm: appending symbol
//! `s` as state `m + 1` adds the spine edge `m -> m + 1`, then walks the
//! suffix-link chain from `m`, adding an edge labelled `s` to `m + 1` from
//! every state that lacks one. The suffix link of the new state is the target
//! of `s` from the first state on the chain that already had it, or 0.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Symbol = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorOracle {
    sequence: Vec<Symbol>,
    transitions: Vec<BTreeMap<Symbol, usize>>,
    suffix: Vec<Option<usize>>,
}

impl FactorOracle {
    pub fn new() -> Self {
        FactorOracle {
            sequence: Vec::new(),
            transitions: vec![BTreeMap::new()],
            suffix: vec![None],
        }
    }

    pub fn build(sequence: &[Symbol]) -> Result<Self> {
        if sequence.is_empty() {
            return Err(Error::NotEnoughData { needed: 1, got: 0 });
        }
        let mut oracle = FactorOracle::new();
        for &s in sequence {
            oracle.push(s);
        }
        Ok(oracle)
    }

    /// Appends one symbol. Existing spine edges and suffix links are untouched.
    pub fn push(&mut self, symbol: Symbol) {
        let m = self.sequence.len();
        let new_state = m + 1;
        self.sequence.push(symbol);
        self.transitions.push(BTreeMap::new());
        self.transitions[m].insert(symbol, new_state);
        let mut k = self.suffix[m];
        while let Some(state) = k {
            if self.transitions[state].contains_key(&symbol) {
                break;
            }
            self.transitions[state].insert(symbol, new_state);
            k = self.suffix[state];
        }
        let link = match k {
            Some(state) => self.transitions[state][&symbol],
            None => 0,
        };
        self.suffix.push(Some(link));
    }

    /// Input length `m`; the oracle has `m + 1` states.
    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn state_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn sequence(&self) -> &[Symbol] {
        &self.sequence
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.iter().map(BTreeMap::len).sum()
    }

    pub fn transition(&self, state: usize, symbol: Symbol) -> Option<usize> {
        self.transitions.get(state)?.get(&symbol).copied()
    }

    pub fn transitions_from(&self, state: usize) -> impl Iterator<Item = (Symbol, usize)> + '_ {
        self.transitions[state].iter().map(|(&s, &t)| (s, t))
    }

    pub fn suffix_link(&self, state: usize) -> Option<usize> {
        self.suffix.get(state).copied().flatten()
    }

    pub fn alphabet(&self) -> BTreeSet<Symbol> {
        self.sequence.iter().copied().collect()
    }

    /// Forward edges that skip ahead (everything except the spine).
    pub fn external_transitions(&self) -> Vec<(usize, Symbol, usize)> {
        let mut out = Vec::new();
        for (from, map) in self.transitions.iter().enumerate() {
            for (&s, &to) in map {
                if to != from + 1 {
                    out.push((from, s, to));
                }
            }
        }
        out
    }

    /// True iff a path from state 0 spells `word`.
    pub fn accepts(&self, word: &[Symbol]) -> bool {
        let mut state = 0;
        for s in word {
            match self.transition(state, *s) {
                Some(next) => state = next,
                None => return false,
            }
        }
        true
    }

    pub fn to_tables(&self) -> OracleTables {
        OracleTables {
            m: self.len(),
            spine: self.sequence.clone(),
            external: self.external_transitions(),
            suffix: self.suffix.clone(),
        }
    }

    /// Rebuilds from the spine and checks the stored links agree.
    pub fn from_tables(tables: &OracleTables) -> Result<Self> {
        if tables.spine.len() != tables.m {
            return Err(Error::InvalidModel("oracle spine length differs from m".into()));
        }
        let oracle = FactorOracle::build(&tables.spine)?;
        if oracle.suffix != tables.suffix || oracle.external_transitions() != tables.external {
            return Err(Error::InvalidModel(
                "stored oracle links do not match its sequence".into(),
            ));
        }
        Ok(oracle)
    }
}

impl Default for FactorOracle {
    fn default() -> Self {
        FactorOracle::new()
    }
}

/// On-disk form of an oracle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleTables {
    pub m: usize,
    pub spine: Vec<Symbol>,
    /// `(from, symbol, to)` for every non-spine forward edge.
    pub external: Vec<(usize, Symbol, usize)>,
    pub suffix: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkState {
    pub state: usize,
    pub last_symbol: Option<Symbol>,
    pub steps: u64,
    /// Choose uniformly among all forward edges instead of always the spine.
    pub explore: bool,
    rng: ChaCha8Rng,
}

impl WalkState {
    pub fn new(seed: u64) -> Self {
        WalkState {
            state: 0,
            last_symbol: None,
            steps: 0,
            explore: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn at(state: usize, seed: u64) -> Self {
        WalkState {
            state,
            ..WalkState::new(seed)
        }
    }
}

fn forward(oracle: &FactorOracle, walk: &mut WalkState, from: usize) -> (usize, Symbol) {
    let m = oracle.len();
    if from >= m {
        // end of spine: hold on the final symbol
        return (m, oracle.sequence[m - 1]);
    }
    if walk.explore {
        let edges: Vec<(Symbol, usize)> = oracle.transitions_from(from).collect();
        let (s, to) = edges[walk.rng.random_range(0..edges.len())];
        return (to, s);
    }
    (from + 1, oracle.sequence[from])
}

/// One improvisation step.
///
/// With probability `p_forward` the walk moves forward and emits the edge's
/// symbol (holding at the last state). Otherwise it jumps silently along the
/// suffix link and then moves forward from there, so every call emits exactly
/// one symbol.
pub fn walk_step(oracle: &FactorOracle, walk: &mut WalkState, p_forward: f64) -> Symbol {
    assert!(!oracle.is_empty(), "walk over an empty oracle");
    let p = p_forward.clamp(0.0, 1.0);
    let go_forward = walk.rng.random_bool(p);
    let from = if go_forward {
        walk.state.min(oracle.len())
    } else {
        oracle.suffix_link(walk.state).unwrap_or(0)
    };
    let (next, symbol) = forward(oracle, walk, from);
    walk.state = next;
    walk.last_symbol = Some(symbol);
    walk.steps += 1;
    symbol
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn factors(w: &[Symbol]) -> Vec<Vec<Symbol>> {
        let mut out = Vec::new();
        for i in 0..w.len() {
            for j in i + 1..=w.len() {
                out.push(w[i..j].to_vec());
            }
        }
        out
    }

    #[test]
    fn aab_hand_trace() {
        let o = FactorOracle::build(&[0, 0, 1]).unwrap();
        assert_eq!(o.state_count(), 4);
        for i in 0..3 {
            assert_eq!(o.transition(i, o.sequence()[i]), Some(i + 1));
        }
        assert_eq!(o.transition(0, 1), Some(3));
        assert_eq!(o.transition(1, 1), Some(3));
        assert_eq!(o.external_transitions(), vec![(0, 1, 3), (1, 1, 3)]);
        assert_eq!(o.suffix_link(0), None);
        assert_eq!(o.suffix_link(1), Some(0));
        assert_eq!(o.suffix_link(2), Some(1));
        assert_eq!(o.suffix_link(3), Some(0));
        // every factor of "aab" is recognized, including "ab"
        for f in factors(&[0, 0, 1]) {
            assert!(o.accepts(&f), "{f:?}");
        }
    }

    #[test]
    fn single_symbol() {
        let o = FactorOracle::build(&[7]).unwrap();
        assert_eq!(o.state_count(), 2);
        assert_eq!(o.transition_count(), 1);
        assert_eq!(o.suffix_link(1), Some(0));
        assert!(FactorOracle::build(&[]).is_err());
    }

    #[test]
    fn accepts_basics() {
        let o = FactorOracle::build(&[1, 2, 3, 2]).unwrap();
        for s in [1, 2, 3] {
            assert!(o.accepts(&[s]));
        }
        assert!(!o.accepts(&[9]));
        assert!(!o.accepts(&[1, 9]));
        assert!(o.accepts(&[]));
    }

    #[test]
    fn forward_only_walk_replays_then_holds() {
        let o = FactorOracle::build(&[0, 1, 2]).unwrap();
        let mut w = WalkState::new(1);
        let out: Vec<_> = (0..6).map(|_| walk_step(&o, &mut w, 1.0)).collect();
        assert_eq!(out, vec![0, 1, 2, 2, 2, 2]);
        assert_eq!(w.state, 3);
    }

    #[test]
    fn backward_only_from_state_one() {
        let o = FactorOracle::build(&[0, 1, 2]).unwrap();
        let mut w = WalkState::at(1, 1);
        assert_eq!(walk_step(&o, &mut w, 0.0), 0);
        assert_eq!(w.state, 1);
    }

    #[test]
    fn seeded_half_walk_is_reproducible_and_bigrams_are_paths() {
        let o = FactorOracle::build(&[0, 0, 1]).unwrap();
        let run = |seed| {
            let mut w = WalkState::new(seed);
            (0..10)
                .map(|_| {
                    let prev = w.state;
                    let s = walk_step(&o, &mut w, 0.5);
                    (s, prev, w.state)
                })
                .collect::<Vec<_>>()
        };
        let trace = run(42);
        assert_eq!(trace, run(42));
        for pair in trace.windows(2) {
            let (a, _, _) = pair[0];
            let (b, prev, now) = pair[1];
            let held = prev == o.len() && now == o.len();
            // restarting from state 0 carries no context; everything else
            // continues a path that ends in the previous symbol
            if held || now == 1 {
                continue;
            }
            assert!(o.accepts(&[a, b]), "{a} {b} in {trace:?}");
        }
    }

    #[test]
    fn explore_uses_external_edges() {
        let o = FactorOracle::build(&[0, 1, 0, 1, 2]).unwrap();
        let mut w = WalkState::new(3);
        w.explore = true;
        for _ in 0..200 {
            let s = walk_step(&o, &mut w, 0.7);
            assert!(o.alphabet().contains(&s));
            assert!(w.state <= o.len());
        }
    }

    #[test]
    fn tables_roundtrip_and_tamper_detection() {
        let o = FactorOracle::build(&[3, 1, 3, 3, 1, 2]).unwrap();
        let t = o.to_tables();
        assert_eq!(FactorOracle::from_tables(&t).unwrap(), o);
        let mut bad = t.clone();
        bad.suffix[3] = Some(0);
        assert!(FactorOracle::from_tables(&bad).is_err());
    }

    proptest! {
        #[test]
        fn bounds_hold(seq in proptest::collection::vec(0u32..6, 1..2000)) {
            let o = FactorOracle::build(&seq).unwrap();
            let m = seq.len();
            prop_assert_eq!(o.state_count(), m + 1);
            prop_assert!(o.transition_count() >= m);
            prop_assert!(o.transition_count() <= (2 * m).saturating_sub(1).max(1));
            for i in 1..=m {
                prop_assert!(o.suffix_link(i).unwrap() < i);
            }
        }

        #[test]
        fn online_extension_keeps_links(seq in proptest::collection::vec(0u32..4, 1..40), extra in 0u32..4) {
            let before = FactorOracle::build(&seq).unwrap();
            let mut after = before.clone();
            after.push(extra);
            for i in 0..=seq.len() {
                prop_assert_eq!(before.suffix_link(i), after.suffix_link(i));
                for (s, t) in before.transitions_from(i) {
                    prop_assert_eq!(after.transition(i, s), Some(t));
                }
            }
        }

        #[test]
        fn walk_is_safe(seq in proptest::collection::vec(0u32..5, 1..60), seed in any::<u64>(), p in 0.0f64..=1.0) {
            let o = FactorOracle::build(&seq).unwrap();
            let alphabet = o.alphabet();
            let mut w = WalkState::new(seed);
            for _ in 0..100 {
                let s = walk_step(&o, &mut w, p);
                prop_assert!(alphabet.contains(&s));
                prop_assert!(w.state <= o.len());
            }
        }
    }
}
