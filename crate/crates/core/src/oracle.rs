//! Brute-force references for small instances.
//!
//! Nothing here calls into the chain, value or verification code: plays,
//! policies and histories are enumerated directly from the game and the
//! transducer tables.

use std::collections::{BTreeMap, HashMap, HashSet};

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::model::{denominator_exponent, Dist, DyadicProb, GameSystem, Rat};
use crate::strategy::{Output, ProductTransducer, StrategyTransducer};

/// Policy enumeration is used only below this many deterministic policies.
pub const POLICY_LIMIT: u128 = 1 << 12;

/// Every positive-probability play of length F, with its exact probability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlayTree {
    pub plays: Vec<(Vec<usize>, Rat)>,
}

impl PlayTree {
    pub fn enumerate(g: &GameSystem, pt: &ProductTransducer, cap: usize) -> Result<Self> {
        let horizon = g.horizon_within(cap)?;
        let plays = enumerate_plays(g, &pt.components, horizon, None, cap)?;
        Ok(PlayTree { plays })
    }

    pub fn total(&self) -> Rat {
        self.plays.iter().map(|(_, p)| p).sum()
    }

    /// Expected goal indicator for `agent`.
    pub fn payoff(&self, g: &GameSystem, agent: usize) -> Rat {
        self.plays
            .iter()
            .filter(|(play, _)| play.iter().any(|&v| g.agents[agent].goal[v]))
            .map(|(_, p)| p)
            .sum()
    }
}

fn ratio(d: &DyadicProb) -> Rat {
    Rat::new(
        d.numerator().clone().into(),
        (BigUint::one() << d.lbits() as usize).into(),
    )
}

/// Node of the deviation tree: game state, transducer states, time.
type Node = (usize, Vec<usize>, usize);

/// Positive-probability action choices of `agent` at `(s, v)`.
fn choices(t: &StrategyTransducer, s: usize, v: usize) -> Vec<(usize, Rat)> {
    match &t.output[s][v] {
        Output::Dist(d) => d
            .iter()
            .filter(|(_, p)| !p.is_zero())
            .map(|(a, p)| (*a, ratio(p)))
            .collect(),
        Output::Bot => Vec::new(),
    }
}

/// Joint tuples over `g.playing[v]`; `fixed` pins one agent's action.
fn joint(
    g: &GameSystem,
    comps: &[StrategyTransducer],
    s: &[usize],
    v: usize,
    fixed: Option<(usize, usize)>,
) -> Vec<(Vec<usize>, Rat)> {
    let mut acc: Vec<(Vec<usize>, Rat)> = vec![(Vec::new(), Rat::one())];
    for &j in &g.playing[v] {
        let opts = match fixed {
            Some((i, a)) if i == j => vec![(a, Rat::one())],
            _ => choices(&comps[j], s[j], v),
        };
        acc = acc
            .into_iter()
            .flat_map(|(th, p)| {
                opts.iter().map(move |(a, q)| {
                    let mut t = th.clone();
                    t.push(*a);
                    (t, &p * q)
                })
            })
            .collect();
    }
    acc
}

fn successors(g: &GameSystem, v: usize, theta: &[usize]) -> Vec<(usize, Rat)> {
    g.trans[v]
        .get(theta)
        .map(|d: &Dist| {
            d.iter()
                .filter(|(_, p)| !p.is_zero())
                .map(|(w, p)| (*w, ratio(p)))
                .collect()
        })
        .unwrap_or_default()
}

fn step_all(comps: &[StrategyTransducer], s: &[usize], v: usize) -> Vec<usize> {
    comps.iter().zip(s).map(|(t, &x)| t.step[x][v]).collect()
}

fn enumerate_plays(
    g: &GameSystem,
    comps: &[StrategyTransducer],
    horizon: usize,
    policy: Option<(usize, &HashMap<Node, usize>)>,
    cap: usize,
) -> Result<Vec<(Vec<usize>, Rat)>> {
    let mut merged: BTreeMap<Vec<usize>, Rat> = BTreeMap::new();
    let s0: Vec<usize> = comps.iter().map(|t| t.init).collect();
    let mut stack = vec![(vec![g.init], s0, Rat::one())];
    while let Some((play, s, p)) = stack.pop() {
        if play.len() == horizon {
            *merged.entry(play).or_insert_with(Rat::zero) += p;
            if merged.len() > cap {
                return Err(Error::CapExceeded { cap });
            }
            continue;
        }
        let v = *play.last().expect("plays are non-empty");
        let fixed = policy.and_then(|(i, sigma)| {
            g.playing[v].contains(&i).then(|| {
                (
                    i,
                    sigma.get(&(v, s.clone(), play.len())).copied().unwrap_or(0),
                )
            })
        });
        let next = step_all(comps, &s, v);
        for (theta, q) in joint(g, comps, &s, v, fixed) {
            for (w, r) in successors(g, v, &theta) {
                let mut longer = play.clone();
                longer.push(w);
                stack.push((longer, next.clone(), &p * &q * r));
            }
        }
        if stack.len() > cap {
            return Err(Error::CapExceeded { cap });
        }
    }
    Ok(merged.into_iter().collect())
}

/// Exact payoff of `agent` by summing over all plays.
pub fn oracle_payoff(
    g: &GameSystem,
    pt: &ProductTransducer,
    agent: usize,
    cap: usize,
) -> Result<Rat> {
    Ok(PlayTree::enumerate(g, pt, cap)?.payoff(g, agent))
}

/// Decision nodes of `agent` reachable when it may play anything.
fn decision_nodes(
    g: &GameSystem,
    comps: &[StrategyTransducer],
    agent: usize,
    horizon: usize,
    cap: usize,
) -> Result<Vec<Node>> {
    let start: Node = (g.init, comps.iter().map(|t| t.init).collect(), 1);
    let mut seen: HashSet<Node> = HashSet::new();
    let mut order = Vec::new();
    let mut stack = vec![start];
    while let Some(node) = stack.pop() {
        if !seen.insert(node.clone()) {
            continue;
        }
        if seen.len() > cap {
            return Err(Error::CapExceeded { cap });
        }
        let (v, s, n) = node.clone();
        if n == horizon {
            continue;
        }
        let active = g.playing[v].contains(&agent);
        if active && !g.agents[agent].goal[v] {
            order.push(node);
        }
        let next = step_all(comps, &s, v);
        let mine: Vec<Option<(usize, usize)>> = if active {
            (0..g.agents[agent].actions.len())
                .map(|a| Some((agent, a)))
                .collect()
        } else {
            vec![None]
        };
        for fixed in mine {
            for (theta, _) in joint(g, comps, &s, v, fixed) {
                for (w, _) in successors(g, v, &theta) {
                    stack.push((w, next.clone(), n + 1));
                }
            }
        }
    }
    order.sort();
    Ok(order)
}

/// Best deterministic Markovian deviation, by enumerating every policy.
///
/// `None` when there are more than [`POLICY_LIMIT`] policies.
pub fn best_response_by_policies(
    g: &GameSystem,
    pt: &ProductTransducer,
    agent: usize,
    cap: usize,
) -> Result<Option<Rat>> {
    let horizon = g.horizon_within(cap)?;
    let comps = &pt.components;
    let nodes = decision_nodes(g, comps, agent, horizon, cap)?;
    let na = g.agents[agent].actions.len() as u128;
    let count = nodes.iter().try_fold(1u128, |acc, _| {
        acc.checked_mul(na).filter(|&c| c <= POLICY_LIMIT)
    });
    let Some(count) = count else {
        return Ok(None);
    };
    let mut best: Option<Rat> = None;
    for code in 0..count {
        let mut rest = code;
        let sigma: HashMap<Node, usize> = nodes
            .iter()
            .map(|node| {
                let a = (rest % na) as usize;
                rest /= na;
                (node.clone(), a)
            })
            .collect();
        let plays = enumerate_plays(g, comps, horizon, Some((agent, &sigma)), cap)?;
        let value: Rat = plays
            .iter()
            .filter(|(play, _)| play.iter().any(|&v| g.agents[agent].goal[v]))
            .map(|(_, p)| p)
            .sum();
        if best.as_ref().is_none_or(|b| value > *b) {
            best = Some(value);
        }
    }
    Ok(best)
}

/// Best deviation value by expectimax over the full history tree (no memoisation).
pub fn best_response_by_tree(
    g: &GameSystem,
    pt: &ProductTransducer,
    agent: usize,
    cap: usize,
) -> Result<Rat> {
    let horizon = g.horizon_within(cap)?;
    let comps = &pt.components;
    let s0: Vec<usize> = comps.iter().map(|t| t.init).collect();
    let mut budget = cap;
    expectimax(g, comps, agent, g.init, &s0, 1, horizon, &mut budget)
        .ok_or(Error::CapExceeded { cap })
}

#[allow(clippy::too_many_arguments)]
fn expectimax(
    g: &GameSystem,
    comps: &[StrategyTransducer],
    agent: usize,
    v: usize,
    s: &[usize],
    n: usize,
    horizon: usize,
    budget: &mut usize,
) -> Option<Rat> {
    *budget = budget.checked_sub(1)?;
    if g.agents[agent].goal[v] {
        return Some(Rat::one());
    }
    if n == horizon {
        return Some(Rat::zero());
    }
    let next = step_all(comps, s, v);
    let mine: Vec<Option<(usize, usize)>> = if g.playing[v].contains(&agent) {
        (0..g.agents[agent].actions.len())
            .map(|a| Some((agent, a)))
            .collect()
    } else {
        vec![None]
    };
    let mut best: Option<Rat> = None;
    for fixed in mine {
        let mut value = Rat::zero();
        for (theta, q) in joint(g, comps, s, v, fixed) {
            for (w, r) in successors(g, v, &theta) {
                value += &q * r * expectimax(g, comps, agent, w, &next, n + 1, horizon, budget)?;
            }
        }
        if best.as_ref().is_none_or(|b| value > *b) {
            best = Some(value);
        }
    }
    best
}

/// Best-response value of `agent`: policy enumeration when small enough, the history tree otherwise.
pub fn oracle_best_response(
    g: &GameSystem,
    pt: &ProductTransducer,
    agent: usize,
    cap: usize,
) -> Result<Rat> {
    match best_response_by_policies(g, pt, agent, cap)? {
        Some(v) => Ok(v),
        None => best_response_by_tree(g, pt, agent, cap),
    }
}

/// First agent (ascending) with a profitable deviation, as `(agent, payoff, best)`.
pub fn oracle_nash(
    g: &GameSystem,
    pt: &ProductTransducer,
    cap: usize,
) -> Result<Option<(usize, Rat, Rat)>> {
    let tree = PlayTree::enumerate(g, pt, cap)?;
    for i in 0..g.num_agents() {
        let p = tree.payoff(g, i);
        let q = oracle_best_response(g, pt, i, cap)?;
        if q > p {
            return Ok(Some((i, p, q)));
        }
    }
    Ok(None)
}

/// The subgame after history `h` with the profile restarted after reading all of `h` but its last state.
///
/// Agents whose goal was already visited along `h` get goal `V`; the horizon is `F − |h| + 1`.
pub fn subgame(
    g: &GameSystem,
    pt: &ProductTransducer,
    h: &[usize],
) -> Result<(GameSystem, ProductTransducer)> {
    let f = g.horizon_within(usize::MAX)?;
    if h.is_empty() || h.len() > f {
        return Err(Error::Invalid(format!(
            "history length {} outside 1..={f}",
            h.len()
        )));
    }
    let mut sub = g.clone();
    sub.init = *h.last().expect("non-empty");
    sub.horizon = BigUint::from(f - h.len() + 1);
    for a in &mut sub.agents {
        if h.iter().any(|&v| a.goal[v]) {
            a.goal = vec![true; g.num_states()];
        }
    }
    let components = pt
        .components
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.init = h[..h.len() - 1].iter().fold(t.init, |s, &v| t.step[s][v]);
            t
        })
        .collect();
    Ok((sub, ProductTransducer { components }))
}

/// First failing history (shortest first, then lexicographic) as `(history, agent)`.
///
/// Histories are all state sequences the game allows under some action tuple.
pub fn oracle_spe(
    g: &GameSystem,
    pt: &ProductTransducer,
    cap: usize,
) -> Result<Option<(Vec<usize>, usize)>> {
    let f = g.horizon_within(cap)?;
    let mut layer = vec![vec![g.init]];
    let mut count = 0usize;
    for _ in 1..=f {
        for h in &layer {
            let (sg, sp) = subgame(g, pt, h)?;
            if let Some((i, _, _)) = oracle_nash(&sg, &sp, cap)? {
                return Ok(Some((h.clone(), i)));
            }
        }
        let mut next = Vec::new();
        for h in &layer {
            for w in g.any_successors(*h.last().expect("non-empty")) {
                let mut longer = h.clone();
                longer.push(w);
                next.push(longer);
            }
        }
        count += next.len();
        if count > cap {
            return Err(Error::CapExceeded { cap });
        }
        layer = next;
    }
    Ok(None)
}

/// Stage game at one state: utilities per active agent for each action tuple.
struct Stage {
    radices: Vec<usize>,
    /// `None` for agents that are indifferent (goal already satisfied here).
    utility: Vec<Option<BTreeMap<Vec<usize>, Rat>>>,
}

impl Stage {
    fn is_pure_ne(&self, theta: &[usize]) -> bool {
        self.utility.iter().enumerate().all(|(pos, u)| {
            let Some(u) = u else { return true };
            let here = &u[theta];
            (0..self.radices[pos]).all(|a| {
                let mut dev = theta.to_vec();
                dev[pos] = a;
                u[&dev] <= *here
            })
        })
    }
}

fn dyadic_within(r: &Rat, lbits: u32) -> Option<DyadicProb> {
    let e = denominator_exponent(r)?;
    if e > lbits as u64 || *r <= Rat::zero() || *r >= Rat::one() {
        return None;
    }
    let scaled = r * Rat::from_integer((BigUint::one() << lbits as usize).into());
    let num = scaled.to_integer().to_biguint()?;
    DyadicProb::new(num, lbits).ok()
}

/// Markovian SPE by backward induction over `(state, time)`.
///
/// Each stage takes the first pure equilibrium in tuple order, else the
/// interior equilibrium of a 2×2 stage if it lies on the `2^L` grid; otherwise
/// synthesis is refused. The profile tracks time in states `t1..tF`.
pub fn synthesize_spe(g: &GameSystem, cap: usize) -> Result<ProductTransducer> {
    let f = g.horizon_within(cap)?;
    let nv = g.num_states();
    let k = g.num_agents();
    // w[n][v][j]: probability agent j reaches its goal from v at time n+1 under the profile.
    let mut w: Vec<Vec<Vec<Rat>>> = vec![Vec::new(); f];
    let mut plan: Vec<Vec<Vec<Dist>>> = vec![Vec::new(); f];
    let goal_value = |v: usize, j: usize| {
        if g.agents[j].goal[v] {
            Rat::one()
        } else {
            Rat::zero()
        }
    };
    w[f - 1] = (0..nv)
        .map(|v| (0..k).map(|j| goal_value(v, j)).collect())
        .collect();
    for n in (0..f - 1).rev() {
        let after = w[n + 1].clone();
        let cont = |v: usize, theta: &[usize], j: usize| -> Rat {
            successors(g, v, theta)
                .into_iter()
                .map(|(x, p)| p * &after[x][j])
                .sum()
        };
        let mut here = Vec::with_capacity(nv);
        let mut row_plan = Vec::with_capacity(nv);
        for v in 0..nv {
            let who = &g.playing[v];
            let radices: Vec<usize> = who.iter().map(|&j| g.agents[j].actions.len()).collect();
            let tuples = g.action_tuples(v);
            let stage = Stage {
                radices: radices.clone(),
                utility: who
                    .iter()
                    .map(|&j| {
                        (!g.agents[j].goal[v])
                            .then(|| tuples.iter().map(|t| (t.clone(), cont(v, t, j))).collect())
                    })
                    .collect(),
            };
            let mixed: Vec<Vec<(usize, Rat)>> =
                if let Some(t) = tuples.iter().find(|t| stage.is_pure_ne(t)) {
                    t.iter().map(|&a| vec![(a, Rat::one())]).collect()
                } else {
                    mixed_2x2(&stage, g.lbits).ok_or_else(|| {
                        Error::SynthesisRefused(format!(
                            "no pure or {}-bit mixed stage equilibrium at state {} time {}",
                            g.lbits,
                            g.states[v],
                            n + 1
                        ))
                    })?
                };
            let values: Vec<Rat> = (0..k)
                .map(|j| {
                    if g.agents[j].goal[v] {
                        return Rat::one();
                    }
                    tuples
                        .iter()
                        .map(|t| {
                            let p: Rat = t
                                .iter()
                                .zip(&mixed)
                                .map(|(a, d)| {
                                    d.iter()
                                        .find(|(b, _)| b == a)
                                        .map_or(Rat::zero(), |x| x.1.clone())
                                })
                                .product();
                            p * cont(v, t, j)
                        })
                        .sum()
                })
                .collect();
            let stage_plan: Vec<Dist> = mixed
                .iter()
                .map(|d| {
                    d.iter()
                        .map(|(a, p)| (*a, dyadic_within_closed(p, g.lbits)))
                        .collect()
                })
                .collect();
            row_plan.push(stage_plan);
            here.push(values);
        }
        plan[n] = row_plan;
        w[n] = here;
    }
    let one = DyadicProb::one(g.lbits);
    let components = (0..k)
        .map(|j| StrategyTransducer {
            agent: j,
            lbits: g.lbits,
            tstates: (1..=f).map(|n| format!("t{n}")).collect(),
            init: 0,
            step: (0..f).map(|n| vec![(n + 1).min(f - 1); nv]).collect(),
            output: (0..f)
                .map(|n| {
                    (0..nv)
                        .map(|v| match g.playing[v].iter().position(|&x| x == j) {
                            None => Output::Bot,
                            // The last slice never acts; any fixed action keeps the table total.
                            Some(_) if n == f - 1 => Output::Dist(vec![(0, one.clone())]),
                            Some(pos) => Output::Dist(plan[n][v][pos].clone()),
                        })
                        .collect()
                })
                .collect(),
        })
        .collect();
    ProductTransducer::new(g, components)
}

fn dyadic_within_closed(p: &Rat, lbits: u32) -> DyadicProb {
    if p.is_one() {
        DyadicProb::one(lbits)
    } else {
        dyadic_within(p, lbits).expect("stage probabilities are on the grid")
    }
}

/// Interior equilibrium of a 2×2 stage with two non-indifferent agents.
fn mixed_2x2(stage: &Stage, lbits: u32) -> Option<Vec<Vec<(usize, Rat)>>> {
    if stage.radices != [2, 2] {
        return None;
    }
    let (u0, u1) = (stage.utility[0].as_ref()?, stage.utility[1].as_ref()?);
    let at = |u: &BTreeMap<Vec<usize>, Rat>, a: usize, b: usize| u[&vec![a, b]].clone();
    // q: weight of agent 1's first action making agent 0 indifferent, and symmetrically p.
    let dq = at(u0, 0, 0) - at(u0, 0, 1) - at(u0, 1, 0) + at(u0, 1, 1);
    let dp = at(u1, 0, 0) - at(u1, 1, 0) - at(u1, 0, 1) + at(u1, 1, 1);
    if dq.is_zero() || dp.is_zero() {
        return None;
    }
    let q = (at(u0, 1, 1) - at(u0, 0, 1)) / dq;
    let p = (at(u1, 1, 1) - at(u1, 1, 0)) / dp;
    dyadic_within(&p, lbits)?;
    dyadic_within(&q, lbits)?;
    let split = |x: Rat| vec![(0, x.clone()), (1, Rat::one() - x)];
    Some(vec![split(p), split(q)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::coin_game;
    use crate::strategy::tests::always;

    fn r(a: i64, b: i64) -> Rat {
        Rat::new(a.into(), b.into())
    }

    #[test]
    fn coin_payoffs() {
        let g = coin_game();
        let a = ProductTransducer::new(&g, vec![always(0)]).unwrap();
        let b = ProductTransducer::new(&g, vec![always(1)]).unwrap();
        let tree = PlayTree::enumerate(&g, &a, 100).unwrap();
        assert_eq!(tree.plays.len(), 2);
        assert_eq!(tree.total(), Rat::one());
        assert_eq!(oracle_payoff(&g, &a, 0, 100).unwrap(), r(3, 4));
        assert_eq!(oracle_payoff(&g, &b, 0, 100).unwrap(), r(1, 4));
        assert_eq!(oracle_best_response(&g, &b, 0, 100).unwrap(), r(3, 4));
        assert_eq!(best_response_by_tree(&g, &b, 0, 100).unwrap(), r(3, 4));
    }

    #[test]
    fn whole_goal_pays_one() {
        let mut g = coin_game();
        g.agents[0].goal = vec![true; 3];
        let b = ProductTransducer::new(&g, vec![always(1)]).unwrap();
        assert_eq!(oracle_payoff(&g, &b, 0, 100).unwrap(), Rat::one());
    }

    #[test]
    fn coin_synthesis_plays_a() {
        let g = coin_game();
        let pt = synthesize_spe(&g, 100).unwrap();
        assert_eq!(
            pt.components[0].output[0][0],
            Output::Dist(vec![(0, DyadicProb::one(2))])
        );
        assert_eq!(oracle_payoff(&g, &pt, 0, 100).unwrap(), r(3, 4));
        assert_eq!(oracle_nash(&g, &pt, 100).unwrap(), None);
        assert_eq!(oracle_spe(&g, &pt, 1000).unwrap(), None);
    }

    #[test]
    fn matching_pennies_mixes() {
        // Agent 1 wants to match, agent 2 to mismatch; the stage has no pure equilibrium.
        let l = 1;
        let one = DyadicProb::one(l);
        let mut t0 = BTreeMap::new();
        for a in 0..2 {
            for b in 0..2 {
                t0.insert(vec![a, b], vec![(if a == b { 1 } else { 2 }, one.clone())]);
            }
        }
        let mut t1 = BTreeMap::new();
        t1.insert(vec![], vec![(1, one.clone())]);
        let mut t2 = BTreeMap::new();
        t2.insert(vec![], vec![(2, one.clone())]);
        let agent = |goal: Vec<bool>| crate::model::AgentSpec {
            actions: vec!["h".into(), "t".into()],
            goal,
        };
        let g = GameSystem {
            states: vec!["s".into(), "m".into(), "x".into()],
            init: 0,
            agents: vec![
                agent(vec![false, true, false]),
                agent(vec![false, false, true]),
            ],
            playing: vec![vec![0, 1], vec![], vec![]],
            trans: vec![t0, t1, t2],
            lbits: l,
            bound: 2,
            horizon: BigUint::from(2u32),
        };
        let pt = synthesize_spe(&g, 100).unwrap();
        assert_eq!(oracle_payoff(&g, &pt, 0, 100).unwrap(), r(1, 2));
        assert_eq!(oracle_nash(&g, &pt, 100).unwrap(), None);
    }

    #[test]
    fn tree_and_policies_agree_on_random_instances() {
        use crate::gen::{gen_random_instance, Limits};
        for seed in 0..60 {
            let (g, pt) = gen_random_instance(seed, &Limits::default());
            for i in 0..g.num_agents() {
                let tree = best_response_by_tree(&g, &pt, i, 1_000_000).unwrap();
                if let Some(pol) = best_response_by_policies(&g, &pt, i, 1_000_000).unwrap() {
                    assert_eq!(pol, tree, "seed {seed} agent {i}");
                }
                assert!(tree >= oracle_payoff(&g, &pt, i, 1_000_000).unwrap());
            }
        }
    }

    #[test]
    fn subgame_of_root_is_the_game() {
        let g = coin_game();
        let pt = ProductTransducer::new(&g, vec![always(0)]).unwrap();
        let (sg, sp) = subgame(&g, &pt, &[0]).unwrap();
        assert_eq!(sg, g);
        assert_eq!(sp, pt);
    }
}
