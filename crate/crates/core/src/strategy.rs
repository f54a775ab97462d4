//! Strategy transducers and their product.
//!
//! A transducer reads game states and moves deterministically between its own
//! states; at every game state where its agent is active it outputs a dyadic
//! distribution over that agent's actions, and the sentinel [`Output::Bot`]
//! everywhere else.
//!
//! Timing convention: the transducer state paired with a game state `v` has
//! not read `v` yet. The output at `(s, v)` is taken before `s` steps on `v`.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::model::{denominator, dist_sum, Dist, GameSystem, History, Rat, Violation};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Output {
    Bot,
    Dist(Dist),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrategyTransducer {
    /// 0-based agent index.
    pub agent: usize,
    pub lbits: u32,
    pub tstates: Vec<String>,
    pub init: usize,
    /// `step[s][v]` is the successor of transducer state `s` on reading game state `v`.
    pub step: Vec<Vec<usize>>,
    /// `output[s][v]`.
    pub output: Vec<Vec<Output>>,
}

impl StrategyTransducer {
    pub fn num_states(&self) -> usize {
        self.tstates.len()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.tstates.iter().position(|s| s == name)
    }

    /// The output distribution at `(s, v)`.
    ///
    /// Panics on the `⊥` sentinel: callers only ask where the agent is active.
    pub fn dist(&self, s: usize, v: usize) -> &Dist {
        match &self.output[s][v] {
            Output::Dist(d) => d,
            Output::Bot => panic!(
                "agent {} consulted at an inactive state (tstate {}, game state #{v})",
                self.agent + 1,
                self.tstates[s]
            ),
        }
    }

    /// State reached from `from` after reading every symbol of `word`.
    pub fn run(&self, from: usize, word: &[usize]) -> usize {
        word.iter().fold(from, |s, &v| self.step[s][v])
    }
}

/// Checks a transducer against the game it plays in.
pub fn validate_transducer(g: &GameSystem, t: &StrategyTransducer) -> Vec<Violation> {
    let mut out = Vec::new();
    let loc = |what: String| format!("transducer {}: {}", t.agent + 1, what);
    let viol = |location: String, message: &str| Violation {
        location,
        message: message.to_string(),
    };
    if t.agent >= g.num_agents() {
        out.push(viol(loc("header".into()), "unknown agent"));
        return out;
    }
    if t.lbits != g.lbits {
        out.push(viol(loc("header".into()), "lbits mismatch"));
    }
    let ns = t.num_states();
    if ns == 0 {
        out.push(viol(loc("tstates".into()), "no states declared"));
        return out;
    }
    if t.init >= ns {
        out.push(viol(loc("init".into()), "initial state out of range"));
    }
    if t.step.len() != ns || t.output.len() != ns {
        out.push(viol(loc("tables".into()), "tables have wrong length"));
        return out;
    }
    let nactions = g.agents[t.agent].actions.len();
    let one = denominator(g.lbits);
    for s in 0..ns {
        if t.step[s].len() != g.num_states() || t.output[s].len() != g.num_states() {
            out.push(viol(
                loc(format!("state {}", t.tstates[s])),
                "tables have wrong length",
            ));
            continue;
        }
        for v in 0..g.num_states() {
            let here = loc(format!("{} {}", t.tstates[s], g.states[v]));
            if t.step[s][v] >= ns {
                out.push(viol(here.clone(), "step target out of range"));
            }
            let active = g.playing[v].contains(&t.agent);
            match (&t.output[s][v], active) {
                (Output::Bot, true) => out.push(viol(here, "missing output at an active state")),
                (Output::Dist(_), false) => {
                    out.push(viol(here, "output defined where the agent is inactive"))
                }
                (Output::Bot, false) => {}
                (Output::Dist(d), true) => {
                    if d.iter().any(|(a, _)| *a >= nactions) {
                        out.push(viol(here.clone(), "unknown action"));
                    }
                    if d.iter().any(|(_, p)| p.lbits() != t.lbits) {
                        out.push(viol(here.clone(), "lbits mismatch"));
                    }
                    if dist_sum(d) != one {
                        out.push(viol(here, "output sum ≠ 1"));
                    }
                }
            }
        }
    }
    out
}

/// Product state: one transducer state per agent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProductState(pub Vec<usize>);

/// The profile as one machine whose state space is the product of the components.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductTransducer {
    pub components: Vec<StrategyTransducer>,
}

impl ProductTransducer {
    /// Pairs one transducer per agent, in agent order, and validates each against the game.
    pub fn new(g: &GameSystem, components: Vec<StrategyTransducer>) -> Result<Self> {
        if components.len() != g.num_agents() {
            return Err(Error::Invalid(format!(
                "game has {} agents but {} transducers were given",
                g.num_agents(),
                components.len()
            )));
        }
        for (i, t) in components.iter().enumerate() {
            if t.agent != i {
                return Err(Error::Invalid(format!(
                    "transducer #{} is for agent {}, expected agent {}",
                    i + 1,
                    t.agent + 1,
                    i + 1
                )));
            }
            let v = validate_transducer(g, t);
            if !v.is_empty() {
                let msgs: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                return Err(Error::Invalid(msgs.join("; ")));
            }
        }
        Ok(ProductTransducer { components })
    }

    pub fn initial(&self) -> ProductState {
        ProductState(self.components.iter().map(|t| t.init).collect())
    }

    /// Product-space size, saturating.
    pub fn size(&self) -> u128 {
        self.components
            .iter()
            .fold(1u128, |acc, t| acc.saturating_mul(t.num_states() as u128))
    }

    pub fn fmt_state(&self, s: &ProductState) -> String {
        let parts: Vec<&str> =
            s.0.iter()
                .zip(&self.components)
                .map(|(&x, t)| t.tstates[x].as_str())
                .collect();
        format!("({})", parts.join(","))
    }
}

impl fmt::Display for ProductState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Component-wise step on reading `v`.
pub fn advance(pt: &ProductTransducer, s: &ProductState, v: usize) -> ProductState {
    ProductState(
        s.0.iter()
            .zip(&pt.components)
            .map(|(&x, t)| t.step[x][v])
            .collect(),
    )
}

/// Probability that the active agents at `v` jointly play `theta`.
pub fn joint_action_prob(
    g: &GameSystem,
    pt: &ProductTransducer,
    s: &ProductState,
    v: usize,
    theta: &[usize],
) -> Result<Rat> {
    let active = &g.playing[v];
    if theta.len() != active.len() {
        return Err(Error::Invalid(format!(
            "action tuple has {} entries but {} agents are active",
            theta.len(),
            active.len()
        )));
    }
    let mut acc = Rat::one();
    for (&i, &a) in active.iter().zip(theta) {
        if a >= g.agents[i].actions.len() {
            return Err(Error::Invalid(format!(
                "agent {} has no action #{a}",
                i + 1
            )));
        }
        let d = pt.components[i].dist(s.0[i], v);
        let p = d
            .iter()
            .find(|(x, _)| *x == a)
            .map(|(_, p)| p.to_rat())
            .unwrap_or_else(Rat::zero);
        acc *= p;
    }
    Ok(acc)
}

/// Action tuples with positive joint probability at `(s, v)`, each with its
/// integer weight over the common denominator `2^(lbits * |P(v)|)`.
///
/// With `fixed = Some((i, a))`, agent `i`'s output is replaced by the point mass on `a`;
/// its weight factor is then the full `2^lbits`.
pub fn support_tuples(
    g: &GameSystem,
    pt: &ProductTransducer,
    s: &ProductState,
    v: usize,
    fixed: Option<(usize, usize)>,
) -> Vec<(Vec<usize>, BigUint)> {
    let mut out: Vec<(Vec<usize>, BigUint)> = vec![(Vec::new(), BigUint::one())];
    for &i in &g.playing[v] {
        let choices: Vec<(usize, BigUint)> = match fixed {
            Some((j, a)) if j == i => vec![(a, denominator(g.lbits))],
            _ => pt.components[i]
                .dist(s.0[i], v)
                .iter()
                .filter(|(_, p)| !p.is_zero())
                .map(|(a, p)| (*a, p.numerator().clone()))
                .collect(),
        };
        let mut next = Vec::with_capacity(out.len() * choices.len());
        for (prefix, w) in &out {
            for (a, p) in &choices {
                let mut t = prefix.clone();
                t.push(*a);
                next.push((t, w * p));
            }
        }
        out = next;
    }
    out
}

/// The same machine restarted after the history `h`.
///
/// Reads every symbol of `h` except the last, which the subgame's first
/// chain state has not consumed yet.
pub fn substrategy(t: &StrategyTransducer, h: &History) -> StrategyTransducer {
    let states = h.states();
    let mut sub = t.clone();
    sub.init = t.run(t.init, &states[..states.len() - 1]);
    sub
}

pub(crate) fn rat_from_weight(w: &BigUint, bits: usize) -> Rat {
    Rat::new(
        BigInt::from(w.clone()),
        BigInt::from(BigUint::one() << bits),
    )
}
