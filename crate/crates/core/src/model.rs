//! Games, exact probabilities and structural validation.
//!
//! A [`GameSystem`] is a finite-horizon stochastic game in which at most
//! `bound` agents act at any state. Every probability that enters the system
//! is a [`DyadicProb`]: an integer numerator over the shared denominator
//! `2^lbits`. All derived quantities are exact rationals ([`Rat`]).

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational value. Hitting probabilities always have power-of-two denominators.
pub type Rat = BigRational;

/// A probability `numerator / 2^lbits`. The numerator `2^lbits` encodes 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicProb {
    numerator: BigUint,
    lbits: u32,
}

impl DyadicProb {
    pub fn new(numerator: BigUint, lbits: u32) -> Result<Self> {
        if lbits == 0 {
            return Err(Error::Invalid("lbits must be positive".into()));
        }
        if numerator > denominator(lbits) {
            return Err(Error::Invalid(format!(
                "probability out of range: {numerator} > 2^{lbits}"
            )));
        }
        Ok(DyadicProb { numerator, lbits })
    }

    pub fn from_u64(numerator: u64, lbits: u32) -> Result<Self> {
        Self::new(BigUint::from(numerator), lbits)
    }

    pub fn one(lbits: u32) -> Self {
        DyadicProb {
            numerator: denominator(lbits),
            lbits,
        }
    }

    pub fn zero(lbits: u32) -> Self {
        DyadicProb {
            numerator: BigUint::zero(),
            lbits,
        }
    }

    pub fn numerator(&self) -> &BigUint {
        &self.numerator
    }

    pub fn lbits(&self) -> u32 {
        self.lbits
    }

    pub fn is_zero(&self) -> bool {
        self.numerator.is_zero()
    }

    pub fn to_rat(&self) -> Rat {
        dyadic_to_rat(self)
    }
}

/// `2^lbits` as an integer.
pub fn denominator(lbits: u32) -> BigUint {
    BigUint::one() << lbits as usize
}

/// Exact, reduced value of a dyadic probability.
pub fn dyadic_to_rat(p: &DyadicProb) -> Rat {
    Rat::new(
        BigInt::from(p.numerator.clone()),
        BigInt::from(denominator(p.lbits)),
    )
}

/// If the (reduced) denominator of `r` is `2^e`, returns `e`.
pub fn denominator_exponent(r: &Rat) -> Option<u64> {
    let den = r.denom();
    if den.sign() != num_bigint::Sign::Plus {
        return None;
    }
    let mag = den.magnitude();
    let e = mag.trailing_zeros().unwrap_or(0);
    if (mag >> e as usize).is_one() {
        Some(e)
    } else {
        None
    }
}

/// Prints a rational as `num/den`, always with an explicit denominator.
pub fn fmt_rat(r: &Rat) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// A distribution over dense indices (game states or actions).
pub type Dist = Vec<(usize, DyadicProb)>;

pub fn dist_sum(d: &Dist) -> BigUint {
    d.iter().map(|(_, p)| p.numerator()).sum()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentSpec {
    pub actions: Vec<String>,
    /// Goal indicator, one entry per game state.
    pub goal: Vec<bool>,
}

/// A b-bounded concurrent game with reachability goals and finite horizon.
///
/// Agents and states are dense 0-based indices internally; files and
/// reports number agents from 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameSystem {
    pub states: Vec<String>,
    pub init: usize,
    pub agents: Vec<AgentSpec>,
    /// Active agents per state, ascending.
    pub playing: Vec<Vec<usize>>,
    /// Per state: action tuple over `playing[v]` (agent order) to successor distribution.
    pub trans: Vec<BTreeMap<Vec<usize>, Dist>>,
    pub lbits: u32,
    pub bound: usize,
    pub horizon: BigUint,
}

impl GameSystem {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn is_goal(&self, agent: usize, v: usize) -> bool {
        self.agents[agent].goal[v]
    }

    pub fn row(&self, v: usize, theta: &[usize]) -> Option<&Dist> {
        self.trans[v].get(theta)
    }

    /// Every action tuple over `playing[v]`, in lexicographic order.
    pub fn action_tuples(&self, v: usize) -> Vec<Vec<usize>> {
        let radices: Vec<usize> = self.playing[v]
            .iter()
            .map(|&i| self.agents[i].actions.len())
            .collect();
        tuples(&radices)
    }

    /// True iff some action tuple moves `v` to `w` with positive probability.
    pub fn can_move(&self, v: usize, w: usize) -> bool {
        self.trans[v]
            .values()
            .any(|d| d.iter().any(|(t, p)| *t == w && !p.is_zero()))
    }

    /// States reachable from `v` in one step under some action tuple, ascending.
    pub fn any_successors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.trans[v]
            .values()
            .flat_map(|d| d.iter().filter(|(_, p)| !p.is_zero()).map(|(t, _)| *t))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// The horizon as a machine integer, refusing anything above `cap`.
    ///
    /// Every time index has at least one reachable state, so a horizon
    /// larger than the state budget can never be explored explicitly.
    pub fn horizon_within(&self, cap: usize) -> Result<usize> {
        match self.horizon.to_usize() {
            Some(f) if f <= cap => Ok(f),
            _ => Err(Error::CapExceeded { cap }),
        }
    }

    pub fn max_actions(&self) -> usize {
        self.agents
            .iter()
            .map(|a| a.actions.len())
            .max()
            .unwrap_or(1)
    }
}

/// Mixed-radix enumeration of all tuples with the given radices; first position most significant.
pub fn tuples(radices: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &r in radices {
        let mut next = Vec::with_capacity(out.len() * r);
        for prefix in &out {
            for a in 0..r {
                let mut t = prefix.clone();
                t.push(a);
                next.push(t);
            }
        }
        out = next;
    }
    out
}

/// One structural problem found by [`validate_game`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl Violation {
    fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Checks every structural invariant of a game. An empty list means valid.
pub fn validate_game(g: &GameSystem) -> Vec<Violation> {
    let mut out = Vec::new();
    let nv = g.num_states();
    let k = g.num_agents();

    if nv == 0 {
        out.push(Violation::new("states", "no states declared"));
        return out;
    }
    if g.init >= nv {
        out.push(Violation::new("init", "initial state out of range"));
    }
    if g.lbits == 0 {
        out.push(Violation::new("header", "lbits must be positive"));
    }
    if g.horizon.is_zero() {
        out.push(Violation::new("header", "horizon must be at least 1"));
    }
    if g.bound == 0 {
        out.push(Violation::new("header", "bound must be at least 1"));
    }
    if k > 0 && g.bound > k {
        out.push(Violation::new(
            "header",
            format!("bound {} exceeds agent count {}", g.bound, k),
        ));
    }
    for (i, a) in g.agents.iter().enumerate() {
        let loc = format!("agent {}", i + 1);
        if a.actions.is_empty() {
            out.push(Violation::new(&loc, "empty action set"));
        }
        if a.goal.len() != nv {
            out.push(Violation::new(&loc, "goal vector has wrong length"));
        }
    }
    if g.playing.len() != nv || g.trans.len() != nv {
        out.push(Violation::new("game", "per-state tables have wrong length"));
        return out;
    }

    let one = denominator(g.lbits);
    for v in 0..nv {
        let name = &g.states[v];
        let p = &g.playing[v];
        if p.len() > g.bound {
            out.push(Violation::new(
                format!("play {name}"),
                format!(
                    "bound exceeded: {} active agents, bound {}",
                    p.len(),
                    g.bound
                ),
            ));
        }
        if p.windows(2).any(|w| w[0] >= w[1]) {
            out.push(Violation::new(
                format!("play {name}"),
                "agent list not strictly ascending",
            ));
        }
        if p.iter().any(|&i| i >= k) {
            out.push(Violation::new(format!("play {name}"), "unknown agent"));
            continue;
        }
        let expected = g.action_tuples(v);
        for theta in &expected {
            if !g.trans[v].contains_key(theta) {
                out.push(Violation::new(
                    format!("trans {name} {}", fmt_tuple(g, v, theta)),
                    "missing transition row",
                ));
            }
        }
        for (theta, dist) in &g.trans[v] {
            let loc = format!("trans {name} {}", fmt_tuple(g, v, theta));
            let arity_ok = theta.len() == p.len()
                && theta
                    .iter()
                    .zip(p)
                    .all(|(&a, &i)| a < g.agents[i].actions.len());
            if !arity_ok {
                out.push(Violation::new(
                    &loc,
                    "row for an action tuple outside the playing agents' actions",
                ));
                continue;
            }
            if dist.iter().any(|(t, _)| *t >= nv) {
                out.push(Violation::new(&loc, "unknown target state"));
            }
            if dist.iter().any(|(_, q)| q.lbits() != g.lbits) {
                out.push(Violation::new(&loc, "lbits mismatch"));
            }
            let mut targets: Vec<usize> = dist.iter().map(|(t, _)| *t).collect();
            targets.sort_unstable();
            if targets.windows(2).any(|w| w[0] == w[1]) {
                out.push(Violation::new(&loc, "duplicate target state"));
            }
            if dist_sum(dist) != one {
                out.push(Violation::new(&loc, "row sum ≠ 1"));
            }
        }
    }
    out
}

/// Renders an action tuple at state `v` as `[a b]`, tolerating bad indices.
pub fn fmt_tuple(g: &GameSystem, v: usize, theta: &[usize]) -> String {
    let names: Vec<String> = theta
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            g.playing[v]
                .get(j)
                .and_then(|&i| g.agents.get(i))
                .and_then(|ag| ag.actions.get(a))
                .cloned()
                .unwrap_or_else(|| format!("#{a}"))
        })
        .collect();
    format!("[{}]", names.join(" "))
}

/// A complete play: exactly `F` states starting at the initial state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Play(Vec<usize>);

impl Play {
    pub fn new(g: &GameSystem, states: Vec<usize>) -> Result<Self> {
        if BigUint::from(states.len()) != g.horizon {
            return Err(Error::Invalid(format!(
                "play has length {}, horizon is {}",
                states.len(),
                g.horizon
            )));
        }
        check_path(g, &states)?;
        Ok(Play(states))
    }

    pub fn states(&self) -> &[usize] {
        &self.0
    }
}

/// A history: a prefix of some play, of length between 1 and `F`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct History(Vec<usize>);

impl History {
    pub fn new(g: &GameSystem, states: Vec<usize>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Invalid(
                "history must contain at least one state".into(),
            ));
        }
        if BigUint::from(states.len()) > g.horizon {
            return Err(Error::Invalid("history longer than the horizon".into()));
        }
        check_path(g, &states)?;
        Ok(History(states))
    }

    pub fn states(&self) -> &[usize] {
        &self.0
    }

    pub fn last(&self) -> usize {
        *self.0.last().expect("histories are non-empty")
    }
}

fn check_path(g: &GameSystem, states: &[usize]) -> Result<()> {
    if states.first() != Some(&g.init) {
        return Err(Error::Invalid(
            "path does not start at the initial state".into(),
        ));
    }
    if let Some(&bad) = states.iter().find(|&&v| v >= g.num_states()) {
        return Err(Error::Invalid(format!("unknown state index {bad}")));
    }
    for w in states.windows(2) {
        if !g.can_move(w[0], w[1]) {
            return Err(Error::Invalid(format!(
                "no action moves {} to {}",
                g.states[w[0]], g.states[w[1]]
            )));
        }
    }
    Ok(())
}

/// 1 iff the play visits the agent's goal set.
pub fn payoff_of_play(g: &GameSystem, play: &Play, agent: usize) -> Result<u8> {
    if BigUint::from(play.0.len()) != g.horizon {
        return Err(Error::Invalid(format!(
            "play has length {}, horizon is {}",
            play.0.len(),
            g.horizon
        )));
    }
    if agent >= g.num_agents() {
        return Err(Error::Invalid(format!("no agent {}", agent + 1)));
    }
    Ok(u8::from(play.0.iter().any(|&v| g.is_goal(agent, v))))
}
