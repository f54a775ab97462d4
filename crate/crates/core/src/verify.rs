//! Nash and subgame perfect equilibrium verification with witnesses.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{fmt_rat, GameSystem, Rat};
use crate::product::{
    explore_deviation, explore_histories, mdp_actions, relevant_reachable, ChainState, DEFAULT_CAP,
};
use crate::strategy::ProductTransducer;
use crate::values::{best_response_values, hitting_probabilities};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifyOptions {
    pub cap: usize,
    /// Keep checking after the first refuted agent and report one witness per agent.
    pub all_witnesses: bool,
    /// Restrict checking to one agent (0-based).
    pub agent: Option<usize>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            cap: DEFAULT_CAP,
            all_witnesses: false,
            agent: None,
        }
    }
}

/// A profitable deviation from the initial state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NashWitness {
    pub agent: usize,
    /// Payoff under the profile.
    pub payoff: Rat,
    /// Best deviation payoff; strictly greater than `payoff`.
    pub best: Rat,
}

/// A one-step improvement at a history-reachable state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpeWitness {
    pub agent: usize,
    pub state: ChainState,
    /// Game states of a history leading to `state`, ending in `state.v`.
    pub history: Vec<usize>,
    pub action: usize,
    /// Value of `state` under the profile.
    pub old: Rat,
    /// Value after switching the agent's output at `state` to `action`.
    pub new: Rat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerdictKind {
    NeYes,
    NeNo,
    SpeYes,
    SpeNo,
    Refused,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Nash,
    NotNash(NashWitness),
    Spe,
    NotSpe(SpeWitness),
    Refused { cap: usize },
}

impl Verdict {
    pub fn kind(&self) -> VerdictKind {
        match self {
            Verdict::Nash => VerdictKind::NeYes,
            Verdict::NotNash(_) => VerdictKind::NeNo,
            Verdict::Spe => VerdictKind::SpeYes,
            Verdict::NotSpe(_) => VerdictKind::SpeNo,
            Verdict::Refused { .. } => VerdictKind::Refused,
        }
    }

    /// True for confirmed equilibria.
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Nash | Verdict::Spe)
    }
}

fn refusal_or<T>(r: Result<T>) -> Result<std::result::Result<T, Verdict>> {
    match r {
        Ok(x) => Ok(Ok(x)),
        Err(Error::CapExceeded { cap }) => Ok(Err(Verdict::Refused { cap })),
        Err(e) => Err(e),
    }
}

fn nash_witness(
    g: &GameSystem,
    pt: &ProductTransducer,
    agent: usize,
    cap: usize,
) -> Result<Option<NashWitness>> {
    if g.is_goal(agent, g.init) {
        return Ok(None);
    }
    let reach = explore_deviation(g, pt, agent, cap)?;
    let p = hitting_probabilities(g, pt, agent, &reach)?.at(0).clone();
    let q = best_response_values(g, pt, agent, &reach)?.at(0).clone();
    Ok((q > p).then_some(NashWitness {
        agent,
        payoff: p,
        best: q,
    }))
}

/// Nash verdicts: `[Nash]`, `[Refused]`, or one `NotNash` per refuted agent
/// (only the first unless `all_witnesses`).
pub fn verify_nash_all(
    g: &GameSystem,
    pt: &ProductTransducer,
    opts: &VerifyOptions,
) -> Result<Vec<Verdict>> {
    let mut found = Vec::new();
    for agent in 0..g.num_agents() {
        if opts.agent.is_some_and(|a| a != agent) {
            continue;
        }
        match refusal_or(nash_witness(g, pt, agent, opts.cap))? {
            Err(refused) => return Ok(vec![refused]),
            Ok(Some(w)) => {
                found.push(Verdict::NotNash(w));
                if !opts.all_witnesses {
                    break;
                }
            }
            Ok(None) => {}
        }
    }
    if found.is_empty() {
        found.push(Verdict::Nash);
    }
    Ok(found)
}

/// Decides whether the profile is a Nash equilibrium; the witness names the smallest refuted agent.
pub fn verify_nash(
    g: &GameSystem,
    pt: &ProductTransducer,
    opts: &VerifyOptions,
) -> Result<Verdict> {
    let first = VerifyOptions {
        all_witnesses: false,
        ..*opts
    };
    Ok(verify_nash_all(g, pt, &first)?.remove(0))
}

/// Scans `agent`'s relevant states from the latest time slice backwards and
/// returns the first one-step improvement.
fn spe_witness(
    g: &GameSystem,
    pt: &ProductTransducer,
    agent: usize,
    values_domain: &crate::product::ReachSet,
    cap: usize,
) -> Result<Option<SpeWitness>> {
    let rel = relevant_reachable(g, pt, agent, cap)?;
    if rel.is_empty() {
        return Ok(None);
    }
    let h = hitting_probabilities(g, pt, agent, values_domain)?;
    let frag = &rel.fragment;
    for n in (1..frag.horizon()).rev() {
        for &id in frag.slice(n) {
            let c = frag.state(id);
            let old = h
                .get(values_domain, c)
                .expect("relevant states are history-reachable")
                .clone();
            let mut best: Option<(Rat, usize)> = None;
            for choice in mdp_actions(g, pt, c, agent)? {
                let Some(a) = choice.action else { break };
                let mut val = Rat::default();
                for (succ, p) in &choice.row {
                    val += p * h
                        .get(values_domain, succ)
                        .expect("history closure contains every successor");
                }
                if best.as_ref().is_none_or(|(b, _)| val > *b) {
                    best = Some((val, a));
                }
            }
            if let Some((new, action)) = best {
                if new > old {
                    return Ok(Some(SpeWitness {
                        agent,
                        state: c.clone(),
                        history: frag.witness(id),
                        action,
                        old,
                        new,
                    }));
                }
            }
        }
    }
    Ok(None)
}

/// Subgame perfect verdicts, shaped like [`verify_nash_all`].
pub fn verify_spe_all(
    g: &GameSystem,
    pt: &ProductTransducer,
    opts: &VerifyOptions,
) -> Result<Vec<Verdict>> {
    let domain = match refusal_or(explore_histories(g, pt, opts.cap))? {
        Ok(d) => d,
        Err(refused) => return Ok(vec![refused]),
    };
    let mut found = Vec::new();
    for agent in 0..g.num_agents() {
        if g.is_goal(agent, g.init) || opts.agent.is_some_and(|a| a != agent) {
            continue;
        }
        match refusal_or(spe_witness(g, pt, agent, &domain, opts.cap))? {
            Err(refused) => return Ok(vec![refused]),
            Ok(Some(w)) => {
                found.push(Verdict::NotSpe(w));
                if !opts.all_witnesses {
                    break;
                }
            }
            Ok(None) => {}
        }
    }
    if found.is_empty() {
        found.push(Verdict::Spe);
    }
    Ok(found)
}

/// Decides whether the profile is a subgame perfect equilibrium.
pub fn verify_spe(g: &GameSystem, pt: &ProductTransducer, opts: &VerifyOptions) -> Result<Verdict> {
    let first = VerifyOptions {
        all_witnesses: false,
        ..*opts
    };
    Ok(verify_spe_all(g, pt, &first)?.remove(0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReportFormat {
    /// One `VERDICT ...` line per verdict.
    #[default]
    Text,
    /// `key=value` lines, one block per verdict separated by a blank line.
    Structured,
}

fn fields(
    g: &GameSystem,
    pt: &ProductTransducer,
    v: &Verdict,
) -> (&'static str, Vec<(&'static str, String)>) {
    match v {
        Verdict::Nash => ("NE", vec![]),
        Verdict::Spe => ("SPE", vec![]),
        Verdict::Refused { cap } => ("REFUSED", vec![("cap", cap.to_string())]),
        Verdict::NotNash(w) => (
            "NOT_NE",
            vec![
                ("agent", (w.agent + 1).to_string()),
                ("payoff", fmt_rat(&w.payoff)),
                ("best", fmt_rat(&w.best)),
            ],
        ),
        Verdict::NotSpe(w) => {
            let hist: Vec<&str> = w.history.iter().map(|&v| g.states[v].as_str()).collect();
            (
                "NOT_SPE",
                vec![
                    ("agent", (w.agent + 1).to_string()),
                    ("state", w.state.display(g, pt)),
                    ("action", g.agents[w.agent].actions[w.action].clone()),
                    ("old", fmt_rat(&w.old)),
                    ("new", fmt_rat(&w.new)),
                    ("history", hist.join(" ")),
                ],
            )
        }
    }
}

/// Machine-readable report for a list of verdicts.
pub fn export_report(
    g: &GameSystem,
    pt: &ProductTransducer,
    verdicts: &[Verdict],
    format: ReportFormat,
) -> String {
    let mut out = String::new();
    for (j, v) in verdicts.iter().enumerate() {
        let (kind, kv) = fields(g, pt, v);
        match format {
            ReportFormat::Text => {
                out.push_str("VERDICT ");
                out.push_str(kind);
                for (k, val) in kv {
                    let _ = write!(out, " {k}={val}");
                }
                out.push('\n');
            }
            ReportFormat::Structured => {
                if j > 0 {
                    out.push('\n');
                }
                let _ = writeln!(out, "verdict={kind}");
                for (k, val) in kv {
                    let _ = writeln!(out, "{k}={val}");
                }
            }
        }
    }
    out
}

/// Text report for a single verdict.
pub fn export_witness(g: &GameSystem, pt: &ProductTransducer, verdict: &Verdict) -> String {
    export_report(g, pt, std::slice::from_ref(verdict), ReportFormat::Text)
}
