//! The Markov chain of a game under a profile, the single-agent deviation
//! MDP over the same states, and explicit exploration of their reachable parts.
//!
//! A chain state `⟨v, s, n⟩` pairs a game state with a product-transducer
//! state that has not read `v` yet, at time `n ∈ [1, F]`. States at `n = F`
//! are terminal. Because time strictly increases the chain is acyclic, and
//! every exploration proceeds slice by slice.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigUint;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::model::{GameSystem, Rat};
use crate::strategy::{advance, rat_from_weight, support_tuples, ProductState, ProductTransducer};

/// Default budget for explicitly explored states.
pub const DEFAULT_CAP: usize = 10_000_000;

/// `⟨v, s, n⟩`. Orders lexicographically by game state, then product state, then time.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChainState {
    pub v: usize,
    pub s: ProductState,
    pub n: usize,
}

impl ChainState {
    pub fn initial(g: &GameSystem, pt: &ProductTransducer) -> Self {
        ChainState {
            v: g.init,
            s: pt.initial(),
            n: 1,
        }
    }

    pub fn is_terminal(&self, g: &GameSystem) -> bool {
        BigUint::from(self.n) >= g.horizon
    }

    /// Renders as `v,(s1,...,sk),n` with declared identifiers.
    pub fn display(&self, g: &GameSystem, pt: &ProductTransducer) -> String {
        format!("{},{},{}", g.states[self.v], pt.fmt_state(&self.s), self.n)
    }
}

/// Positive-probability successors with their exact probabilities, ascending by state.
pub type Row = Vec<(ChainState, Rat)>;

fn terminal_error(from: &ChainState) -> Error {
    Error::Invalid(format!("chain state at time {} is terminal", from.n))
}

/// Successor row of `from`, optionally with agent `i` fixed to action `a`.
fn row_with(
    g: &GameSystem,
    pt: &ProductTransducer,
    from: &ChainState,
    fixed: Option<(usize, usize)>,
) -> Row {
    let v = from.v;
    let mut mass: BTreeMap<usize, BigUint> = BTreeMap::new();
    for (theta, w) in support_tuples(g, pt, &from.s, v, fixed) {
        let dist = g
            .row(v, &theta)
            .expect("validated games define every action tuple");
        for (target, p) in dist {
            if !p.is_zero() {
                *mass.entry(*target).or_insert_with(BigUint::zero) += &w * p.numerator();
            }
        }
    }
    let bits = g.lbits as usize * (g.playing[v].len() + 1);
    let s_next = advance(pt, &from.s, v);
    mass.into_iter()
        .map(|(target, m)| {
            (
                ChainState {
                    v: target,
                    s: s_next.clone(),
                    n: from.n + 1,
                },
                rat_from_weight(&m, bits),
            )
        })
        .collect()
}

/// All positive-probability transitions of the chain out of `from`.
pub fn chain_row(g: &GameSystem, pt: &ProductTransducer, from: &ChainState) -> Result<Row> {
    if from.is_terminal(g) {
        return Err(terminal_error(from));
    }
    Ok(row_with(g, pt, from, None))
}

/// Single transition probability `p_v · p_s · p_n`, computed without exploration.
pub fn chain_prob(
    g: &GameSystem,
    pt: &ProductTransducer,
    from: &ChainState,
    to: &ChainState,
) -> Result<Rat> {
    if from.is_terminal(g) {
        return Err(terminal_error(from));
    }
    if to.n != from.n + 1 || to.s != advance(pt, &from.s, from.v) {
        return Ok(Rat::zero());
    }
    Ok(row_with(g, pt, from, None)
        .into_iter()
        .find(|(c, _)| c.v == to.v)
        .map(|(_, p)| p)
        .unwrap_or_else(Rat::zero))
}

/// One choice available to the deviating agent at a chain state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MdpChoice {
    /// `None` when the agent is inactive and the row is the profile's own.
    pub action: Option<usize>,
    pub row: Row,
}

/// Deterministic choices of `agent` at `state`, others following the profile.
pub fn mdp_actions(
    g: &GameSystem,
    pt: &ProductTransducer,
    state: &ChainState,
    agent: usize,
) -> Result<Vec<MdpChoice>> {
    if state.is_terminal(g) {
        return Err(terminal_error(state));
    }
    if !g.playing[state.v].contains(&agent) {
        return Ok(vec![MdpChoice {
            action: None,
            row: row_with(g, pt, state, None),
        }]);
    }
    Ok((0..g.agents[agent].actions.len())
        .map(|a| MdpChoice {
            action: Some(a),
            row: row_with(g, pt, state, Some((agent, a))),
        })
        .collect())
}

/// An explicitly explored, time-sliced set of chain states with one
/// predecessor link per state (first discovered, BFS in lexicographic order).
#[derive(Clone, Debug)]
pub struct Fragment {
    horizon: usize,
    states: Vec<ChainState>,
    index: HashMap<ChainState, usize>,
    slices: Vec<Vec<usize>>,
    pred: Vec<Option<usize>>,
}

/// States reachable with positive probability.
pub type ReachSet = Fragment;

impl Fragment {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state(&self, id: usize) -> &ChainState {
        &self.states[id]
    }

    pub fn states(&self) -> &[ChainState] {
        &self.states
    }

    pub fn id(&self, c: &ChainState) -> Option<usize> {
        self.index.get(c).copied()
    }

    pub fn contains(&self, c: &ChainState) -> bool {
        self.index.contains_key(c)
    }

    /// Ids at time `n`, in lexicographic state order.
    pub fn slice(&self, n: usize) -> &[usize] {
        self.slices
            .get(n.wrapping_sub(1))
            .map(|s| s.as_slice())
            .unwrap_or(&[])
    }

    pub fn pred(&self, id: usize) -> Option<usize> {
        self.pred[id]
    }

    /// Game states along the predecessor chain from the root to `id`, inclusive.
    pub fn witness(&self, id: usize) -> Vec<usize> {
        let mut path = vec![self.states[id].v];
        let mut cur = id;
        while let Some(p) = self.pred[cur] {
            path.push(self.states[p].v);
            cur = p;
        }
        path.reverse();
        path
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    /// Successors with positive probability under the profile.
    Chain,
    /// Successors under some deterministic choice of the given agent.
    Deviation(usize),
    /// Successors under some action tuple, ignoring the profile's outputs.
    AnyAction,
}

fn successors(
    g: &GameSystem,
    pt: &ProductTransducer,
    c: &ChainState,
    mode: Mode,
) -> BTreeSet<usize> {
    let v = c.v;
    let targets_of = |tuples: Vec<(Vec<usize>, BigUint)>, out: &mut BTreeSet<usize>| {
        for (theta, _) in tuples {
            for (t, p) in g
                .row(v, &theta)
                .expect("validated games define every action tuple")
            {
                if !p.is_zero() {
                    out.insert(*t);
                }
            }
        }
    };
    let mut out = BTreeSet::new();
    match mode {
        Mode::Chain => targets_of(support_tuples(g, pt, &c.s, v, None), &mut out),
        Mode::Deviation(i) if g.playing[v].contains(&i) => {
            for a in 0..g.agents[i].actions.len() {
                targets_of(support_tuples(g, pt, &c.s, v, Some((i, a))), &mut out);
            }
        }
        Mode::Deviation(_) => targets_of(support_tuples(g, pt, &c.s, v, None), &mut out),
        Mode::AnyAction => out.extend(g.any_successors(v)),
    }
    out
}

fn explore(
    g: &GameSystem,
    pt: &ProductTransducer,
    mode: Mode,
    avoid_goal_of: Option<usize>,
    cap: usize,
) -> Result<Fragment> {
    let horizon = g.horizon_within(cap)?;
    let excluded = |v: usize| avoid_goal_of.is_some_and(|i| g.is_goal(i, v));
    let mut frag = Fragment {
        horizon,
        states: Vec::new(),
        index: HashMap::new(),
        slices: vec![Vec::new(); horizon],
        pred: Vec::new(),
    };
    let root = ChainState::initial(g, pt);
    if excluded(root.v) {
        return Ok(frag);
    }
    frag.index.insert(root.clone(), 0);
    frag.states.push(root);
    frag.pred.push(None);
    frag.slices[0].push(0);

    for n in 1..horizon {
        let current = frag.slices[n - 1].clone();
        let mut next = Vec::new();
        for id in current {
            let c = frag.states[id].clone();
            let s_next = advance(pt, &c.s, c.v);
            for w in successors(g, pt, &c, mode) {
                if excluded(w) {
                    continue;
                }
                let succ = ChainState {
                    v: w,
                    s: s_next.clone(),
                    n: n + 1,
                };
                if frag.index.contains_key(&succ) {
                    continue;
                }
                if frag.states.len() >= cap {
                    return Err(Error::CapExceeded { cap });
                }
                let new_id = frag.states.len();
                frag.index.insert(succ.clone(), new_id);
                frag.states.push(succ);
                frag.pred.push(Some(id));
                next.push(new_id);
            }
        }
        next.sort_by(|&a, &b| frag.states[a].cmp(&frag.states[b]));
        frag.slices[n] = next;
    }
    Ok(frag)
}

/// Chain states reachable with positive probability when everyone follows the profile.
pub fn explore_chain(g: &GameSystem, pt: &ProductTransducer, cap: usize) -> Result<ReachSet> {
    explore(g, pt, Mode::Chain, None, cap)
}

/// States of the deviation MDP reachable under some behaviour of `agent`.
/// Contains the profile's own reachable set.
pub fn explore_deviation(
    g: &GameSystem,
    pt: &ProductTransducer,
    agent: usize,
    cap: usize,
) -> Result<ReachSet> {
    explore(g, pt, Mode::Deviation(agent), None, cap)
}

/// Every chain state some history leads to, with no goal pruning.
pub fn explore_histories(g: &GameSystem, pt: &ProductTransducer, cap: usize) -> Result<ReachSet> {
    explore(g, pt, Mode::AnyAction, None, cap)
}

/// Chain states reached by some history that never touches `agent`'s goal.
#[derive(Clone, Debug)]
pub struct RelevantSet {
    pub agent: usize,
    pub fragment: Fragment,
}

impl RelevantSet {
    pub fn contains(&self, c: &ChainState) -> bool {
        self.fragment.contains(c)
    }

    pub fn len(&self) -> usize {
        self.fragment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragment.is_empty()
    }

    /// A history reaching `c`, if `c` is in the set.
    pub fn history_to(&self, c: &ChainState) -> Option<Vec<usize>> {
        self.fragment.id(c).map(|id| self.fragment.witness(id))
    }
}

/// Relevant history-reachable states for `agent`: arbitrary positive-probability
/// action tuples (profile outputs ignored), pruning every state in the agent's goal.
pub fn relevant_reachable(
    g: &GameSystem,
    pt: &ProductTransducer,
    agent: usize,
    cap: usize,
) -> Result<RelevantSet> {
    Ok(RelevantSet {
        agent,
        fragment: explore(g, pt, Mode::AnyAction, Some(agent), cap)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{gen_random_instance, Limits};
    use crate::model::tests::coin_game;
    use crate::strategy::tests::always;
    use num_bigint::BigInt;
    use num_traits::One;

    fn r(n: i64, d: i64) -> Rat {
        Rat::new(BigInt::from(n), BigInt::from(d))
    }

    fn cs(v: usize, n: usize) -> ChainState {
        ChainState {
            v,
            s: ProductState(vec![0]),
            n,
        }
    }

    #[test]
    fn coin_chain_probabilities() {
        let g = coin_game();
        let pt = ProductTransducer::new(&g, vec![always(0)]).unwrap();
        assert_eq!(chain_prob(&g, &pt, &cs(0, 1), &cs(1, 2)).unwrap(), r(3, 4));
        assert_eq!(chain_prob(&g, &pt, &cs(0, 1), &cs(2, 2)).unwrap(), r(1, 4));
        assert_eq!(chain_prob(&g, &pt, &cs(0, 1), &cs(1, 3)).unwrap(), r(0, 1));
        let wrong_s = ChainState {
            v: 1,
            s: ProductState(vec![1]),
            n: 2,
        };
        assert_eq!(chain_prob(&g, &pt, &cs(0, 1), &wrong_s).unwrap(), r(0, 1));
        assert!(chain_prob(&g, &pt, &cs(1, 2), &cs(1, 3)).is_err());
    }

    #[test]
    fn coin_reach_set() {
        let g = coin_game();
        let pt = ProductTransducer::new(&g, vec![always(0)]).unwrap();
        let reach = explore_chain(&g, &pt, DEFAULT_CAP).unwrap();
        assert_eq!(reach.len(), 3);
        assert_eq!(reach.slice(2).len(), 2);

        let mut g1 = g.clone();
        g1.horizon = BigUint::from(1u32);
        let reach1 = explore_chain(&g1, &pt, DEFAULT_CAP).unwrap();
        assert_eq!(reach1.states(), &[cs(0, 1)]);
    }

    #[test]
    fn deterministic_instance_is_a_single_trajectory() {
        let mut g = coin_game();
        g.horizon = BigUint::from(7u32);
        let l = g.lbits;
        g.trans[0].insert(vec![0], vec![(1, crate::model::DyadicProb::one(l))]);
        let pt = ProductTransducer::new(&g, vec![always(0)]).unwrap();
        let reach = explore_chain(&g, &pt, DEFAULT_CAP).unwrap();
        assert!(reach.len() <= 7);
    }

    #[test]
    fn cap_refusal() {
        let mut g = coin_game();
        g.horizon = BigUint::from(50u32);
        let pt = ProductTransducer::new(&g, vec![always(0)]).unwrap();
        assert!(matches!(
            explore_chain(&g, &pt, 10),
            Err(Error::CapExceeded { cap: 10 })
        ));
        g.horizon = BigUint::from(1u32) << 200usize;
        assert!(matches!(
            explore_chain(&g, &pt, DEFAULT_CAP),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn coin_mdp_rows() {
        let g = coin_game();
        let pt = ProductTransducer::new(&g, vec![always(1)]).unwrap();
        let choices = mdp_actions(&g, &pt, &cs(0, 1), 0).unwrap();
        assert_eq!(choices.len(), 2);
        assert_eq!(choices[0].action, Some(0));
        assert_eq!(
            choices[0].row,
            vec![(cs(1, 2), r(3, 4)), (cs(2, 2), r(1, 4))]
        );
        assert_eq!(
            choices[1].row,
            vec![(cs(1, 2), r(1, 4)), (cs(2, 2), r(3, 4))]
        );

        let mut g3 = g.clone();
        g3.horizon = BigUint::from(3u32);
        let inactive = mdp_actions(&g3, &pt, &cs(1, 2), 0).unwrap();
        assert_eq!(inactive.len(), 1);
        assert_eq!(inactive[0].row, chain_row(&g3, &pt, &cs(1, 2)).unwrap());
    }

    #[test]
    fn relevant_set_goal_pruning() {
        let g = coin_game();
        let pt = ProductTransducer::new(&g, vec![always(0)]).unwrap();
        let rel = relevant_reachable(&g, &pt, 0, DEFAULT_CAP).unwrap();
        assert!(rel.contains(&cs(0, 1)));
        assert!(rel.contains(&cs(2, 2)));
        assert!(!rel.contains(&cs(1, 2)));
        assert_eq!(rel.history_to(&cs(2, 2)), Some(vec![0, 2]));

        let mut g2 = g.clone();
        g2.agents[0].goal[0] = true;
        assert!(relevant_reachable(&g2, &pt, 0, DEFAULT_CAP)
            .unwrap()
            .is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn rows_are_normalized_and_closed(seed in any::<u64>()) {
                let (g, pt) = gen_random_instance(seed, &Limits::default());
                let reach = explore_chain(&g, &pt, DEFAULT_CAP).unwrap();
                for c in reach.states() {
                    if c.is_terminal(&g) { continue; }
                    let row = chain_row(&g, &pt, c).unwrap();
                    let total: Rat = row.iter().map(|(_, p)| p.clone()).sum();
                    prop_assert_eq!(total, Rat::one());
                    for (succ, p) in &row {
                        prop_assert!(reach.contains(succ));
                        prop_assert_eq!(&chain_prob(&g, &pt, c, succ).unwrap(), p);
                    }
                }
            }

            #[test]
            fn profile_row_is_mixture_of_deviation_rows(seed in any::<u64>()) {
                let (g, pt) = gen_random_instance(seed, &Limits::default());
                let hist = explore_histories(&g, &pt, DEFAULT_CAP).unwrap();
                for c in hist.states() {
                    if c.is_terminal(&g) { continue; }
                    let own = chain_row(&g, &pt, c).unwrap();
                    for i in 0..g.num_agents() {
                        let choices = mdp_actions(&g, &pt, c, i).unwrap();
                        let mut mix: BTreeMap<ChainState, Rat> = BTreeMap::new();
                        for ch in &choices {
                            let w = match ch.action {
                                None => Rat::one(),
                                Some(a) => pt.components[i].dist(c.s.0[i], c.v).iter()
                                    .find(|(x, _)| *x == a).map(|(_, p)| p.to_rat()).unwrap_or_else(Rat::zero),
                            };
                            let total: Rat = ch.row.iter().map(|(_, p)| p.clone()).sum();
                            prop_assert_eq!(total, Rat::one());
                            for (succ, p) in &ch.row {
                                *mix.entry(succ.clone()).or_insert_with(Rat::zero) += &w * p;
                            }
                        }
                        let mix: Row = mix.into_iter().filter(|(_, p)| !p.is_zero()).collect();
                        prop_assert_eq!(&mix, &own);
                    }
                }
            }

            #[test]
            fn relevant_sets_avoid_goals(seed in any::<u64>()) {
                let (g, pt) = gen_random_instance(seed, &Limits::default());
                let chain = explore_chain(&g, &pt, DEFAULT_CAP).unwrap();
                for i in 0..g.num_agents() {
                    let rel = relevant_reachable(&g, &pt, i, DEFAULT_CAP).unwrap();
                    for c in rel.fragment.states() {
                        let h = rel.history_to(c).unwrap();
                        prop_assert!(h.iter().all(|&v| !g.is_goal(i, v)));
                        prop_assert_eq!(h.len(), c.n);
                    }
                    // A π-reachable state whose own game state avoids the goal is either in R
                    // or was reached only through a goal state.
                    for id in 0..chain.len() {
                        let c = chain.state(id);
                        let path = chain.witness(id);
                        if path.iter().all(|&v| !g.is_goal(i, v)) {
                            prop_assert!(rel.contains(c));
                        }
                    }
                }
            }
        }
    }
}
