//! Exact hitting probabilities and best-response values by one backward sweep
//! over the time slices of an explored fragment.
//!
//! The chain is acyclic in time, so values at slice `n` depend only on slice
//! `n + 1`; no linear system is ever formed.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::model::{denominator_exponent, DyadicProb, GameSystem, Rat};
use crate::product::{chain_row, explore_chain, mdp_actions, ChainState, Fragment, ReachSet, Row};
use crate::strategy::{advance, Output, ProductState, ProductTransducer, StrategyTransducer};

/// Hitting probability of the agent's goal from every state of a fragment.
#[derive(Clone, Debug)]
pub struct ValueTable {
    pub agent: usize,
    values: Vec<Rat>,
}

impl ValueTable {
    pub fn at(&self, id: usize) -> &Rat {
        &self.values[id]
    }

    pub fn get<'a>(&'a self, frag: &Fragment, c: &ChainState) -> Option<&'a Rat> {
        frag.id(c).map(|id| &self.values[id])
    }

    pub fn values(&self) -> &[Rat] {
        &self.values
    }
}

/// Optimal deviation value per state, with the smallest maximizing action.
#[derive(Clone, Debug)]
pub struct PolicyTable {
    pub agent: usize,
    values: Vec<Rat>,
    actions: Vec<Option<usize>>,
}

impl PolicyTable {
    pub fn at(&self, id: usize) -> &Rat {
        &self.values[id]
    }

    /// `None` at goal, terminal, and inactive states.
    pub fn action(&self, id: usize) -> Option<usize> {
        self.actions[id]
    }

    pub fn values(&self) -> &[Rat] {
        &self.values
    }
}

fn backup(frag: &Fragment, values: &[Rat], row: &Row) -> Result<Rat> {
    let mut acc = Rat::zero();
    for (succ, p) in row {
        let id = frag
            .id(succ)
            .ok_or_else(|| Error::Invalid("fragment is not closed under successors".into()))?;
        acc += p * &values[id];
    }
    Ok(acc)
}

/// Hitting probabilities of `agent`'s goal under the profile, on every state of `reach`.
///
/// `reach` must be closed under the chain's positive transitions (any fragment
/// from [`crate::product`] is).
pub fn hitting_probabilities(
    g: &GameSystem,
    pt: &ProductTransducer,
    agent: usize,
    reach: &ReachSet,
) -> Result<ValueTable> {
    let f = reach.horizon();
    let mut values = vec![Rat::zero(); reach.len()];
    for n in (1..=f).rev() {
        for &id in reach.slice(n) {
            let c = reach.state(id);
            values[id] = if g.is_goal(agent, c.v) {
                Rat::one()
            } else if n == f {
                Rat::zero()
            } else {
                backup(reach, &values, &chain_row(g, pt, c)?)?
            };
        }
    }
    Ok(ValueTable { agent, values })
}

/// Expected payoff of `agent` under the profile.
pub fn payoff(g: &GameSystem, pt: &ProductTransducer, agent: usize, cap: usize) -> Result<Rat> {
    if g.is_goal(agent, g.init) {
        return Ok(Rat::one());
    }
    let reach = explore_chain(g, pt, cap)?;
    let table = hitting_probabilities(g, pt, agent, &reach)?;
    Ok(table.at(0).clone())
}

/// Optimal values of the deviation MDP for `agent` on `reach`, which must be
/// closed under every deterministic choice of the agent.
pub fn best_response_values(
    g: &GameSystem,
    pt: &ProductTransducer,
    agent: usize,
    reach: &ReachSet,
) -> Result<PolicyTable> {
    let f = reach.horizon();
    let mut values = vec![Rat::zero(); reach.len()];
    let mut actions = vec![None; reach.len()];
    for n in (1..=f).rev() {
        for &id in reach.slice(n) {
            let c = reach.state(id);
            if g.is_goal(agent, c.v) {
                values[id] = Rat::one();
                continue;
            }
            if n == f {
                continue;
            }
            let mut best: Option<(Rat, Option<usize>)> = None;
            for choice in mdp_actions(g, pt, c, agent)? {
                let val = backup(reach, &values, &choice.row)?;
                if best.as_ref().is_none_or(|(b, _)| val > *b) {
                    best = Some((val, choice.action));
                }
            }
            let (val, act) = best.expect("at least one choice");
            values[id] = val;
            actions[id] = act;
        }
    }
    Ok(PolicyTable {
        agent,
        values,
        actions,
    })
}

fn ceil_log2(x: &BigUint) -> u64 {
    if x <= &BigUint::one() {
        0
    } else {
        (x - 1u32).bits()
    }
}

/// Ceiling on the denominator exponent of any hitting probability:
/// `F · (⌈log₂(|V|·|S|)⌉ + ⌈log₂(|A|^b)⌉ + (b+1)·L)`, with `|A|` the largest action set.
pub fn bit_bound(g: &GameSystem, pt: &ProductTransducer) -> BigUint {
    let vs = BigUint::from(g.num_states()) * BigUint::from(pt.size());
    let ab = BigUint::from(g.max_actions()).pow(g.bound as u32);
    let per_step = ceil_log2(&vs) + ceil_log2(&ab) + (g.bound as u64 + 1) * g.lbits as u64;
    &g.horizon * BigUint::from(per_step)
}

/// True iff every value has a power-of-two denominator with exponent at most `bound`.
pub fn within_bit_bound<'a>(values: impl IntoIterator<Item = &'a Rat>, bound: &BigUint) -> bool {
    values
        .into_iter()
        .all(|r| denominator_exponent(r).is_some_and(|e| BigUint::from(e) <= *bound))
}

/// `state <v> <s-tuple> <n> = <num>/<den>` per line, sorted by state.
pub fn dump_values(
    g: &GameSystem,
    pt: &ProductTransducer,
    frag: &Fragment,
    values: &[Rat],
) -> String {
    let mut ids: Vec<usize> = (0..frag.len()).collect();
    ids.sort_by(|&a, &b| frag.state(a).cmp(frag.state(b)));
    let mut out = String::new();
    for id in ids {
        let c = frag.state(id);
        let r = &values[id];
        out.push_str(&format!(
            "state {} {} {} = {}/{}\n",
            g.states[c.v],
            pt.fmt_state(&c.s),
            c.n,
            r.numer(),
            r.denom()
        ));
    }
    out
}

/// A transducer for `agent` that plays the policy's argmax at every state of
/// `frag`. It tracks the whole product state and time, so the deviation can
/// be replayed as an ordinary profile.
pub fn policy_transducer(
    g: &GameSystem,
    pt: &ProductTransducer,
    frag: &Fragment,
    policy: &PolicyTable,
) -> StrategyTransducer {
    let agent = policy.agent;
    let mut keys: Vec<(ProductState, usize)> =
        frag.states().iter().map(|c| (c.s.clone(), c.n)).collect();
    keys.sort();
    keys.dedup();
    let index: HashMap<(ProductState, usize), usize> = keys
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, k)| (k, i))
        .collect();
    let sink = keys.len();
    let one = DyadicProb::one(g.lbits);
    let nv = g.num_states();

    let mut step = Vec::with_capacity(sink + 1);
    let mut output = Vec::with_capacity(sink + 1);
    let default_out = |v: usize| {
        if g.playing[v].contains(&agent) {
            Output::Dist(vec![(0, one.clone())])
        } else {
            Output::Bot
        }
    };
    for (s, n) in &keys {
        let mut srow = Vec::with_capacity(nv);
        let mut orow = Vec::with_capacity(nv);
        for v in 0..nv {
            let next = (advance(pt, s, v), n + 1);
            srow.push(index.get(&next).copied().unwrap_or(sink));
            let c = ChainState {
                v,
                s: s.clone(),
                n: *n,
            };
            let out = match frag.id(&c).and_then(|id| policy.action(id)) {
                Some(a) => Output::Dist(vec![(a, one.clone())]),
                None => default_out(v),
            };
            orow.push(out);
        }
        step.push(srow);
        output.push(orow);
    }
    step.push(vec![sink; nv]);
    output.push((0..nv).map(default_out).collect());

    let mut tstates: Vec<String> = (0..sink).map(|i| format!("p{i}")).collect();
    tstates.push("sink".into());
    StrategyTransducer {
        agent,
        lbits: g.lbits,
        tstates,
        init: index[&(pt.initial(), 1)],
        step,
        output,
    }
}
