//! Line-oriented text formats for games and transducers.
//!
//! Blank lines and lines whose first non-space character is `#` are skipped.
//! Identifiers in files are names; agents are 1-based.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::Num;

use crate::error::{ParseError, Result};
use crate::model::{denominator, AgentSpec, Dist, DyadicProb, GameSystem};
use crate::strategy::{Output, StrategyTransducer};

#[derive(Clone, Copy, Debug)]
pub(crate) struct Tok<'a> {
    pub text: &'a str,
    pub line: usize,
    pub col: usize,
}

impl<'a> Tok<'a> {
    pub fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, self.col, msg)
    }
}

/// One significant line, split on whitespace.
pub(crate) struct Line<'a> {
    pub toks: Vec<Tok<'a>>,
    pub line: usize,
    len: usize,
}

impl<'a> Line<'a> {
    /// Error positioned just past the last token.
    pub fn eol(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, self.len + 1, msg)
    }

    pub fn get(&self, i: usize, expected: &str) -> std::result::Result<Tok<'a>, ParseError> {
        self.toks
            .get(i)
            .copied()
            .ok_or_else(|| self.eol(format!("expected {expected}")))
    }

    pub fn expect(&self, i: usize, word: &str) -> std::result::Result<(), ParseError> {
        let t = self.get(i, &format!("`{word}`"))?;
        if t.text == word {
            Ok(())
        } else {
            Err(t.err(format!("expected `{word}`, found `{}`", t.text)))
        }
    }
}

pub(crate) fn lines(text: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let trimmed = raw.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut toks = Vec::new();
        let mut start = None;
        for (ci, (bi, ch)) in raw.char_indices().enumerate() {
            if ch.is_whitespace() {
                if let Some((s, sc)) = start.take() {
                    toks.push(Tok {
                        text: &raw[s..bi],
                        line: ln + 1,
                        col: sc + 1,
                    });
                }
            } else if start.is_none() {
                start = Some((bi, ci));
            }
        }
        if let Some((s, sc)) = start {
            toks.push(Tok {
                text: &raw[s..],
                line: ln + 1,
                col: sc + 1,
            });
        }
        out.push(Line {
            toks,
            line: ln + 1,
            len: raw.chars().count(),
        });
    }
    out
}

/// `key=value` token with a fixed key.
fn keyed<'a>(t: Tok<'a>, key: &str) -> std::result::Result<&'a str, ParseError> {
    t.text
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| t.err(format!("expected `{key}=<value>`, found `{}`", t.text)))
}

fn number<T: std::str::FromStr>(
    t: Tok<'_>,
    s: &str,
    what: &str,
) -> std::result::Result<T, ParseError> {
    s.parse()
        .map_err(|_| t.err(format!("expected {what}, found `{s}`")))
}

fn parse_horizon(t: Tok<'_>, s: &str) -> std::result::Result<BigUint, ParseError> {
    let parsed = match s.strip_prefix("0b") {
        Some(bits) => BigUint::from_str_radix(bits, 2),
        None => BigUint::from_str_radix(s, 10),
    };
    parsed.map_err(|_| {
        t.err(format!(
            "expected horizon in decimal or 0b binary, found `{s}`"
        ))
    })
}

fn valid_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_alphanumeric() || matches!(c, '_' | '.' | '-' | '*' | '/' | '\''))
        && s != "->"
        && s != "|"
}

fn ident<'a>(t: Tok<'a>) -> std::result::Result<&'a str, ParseError> {
    if valid_ident(t.text) {
        Ok(t.text)
    } else {
        Err(t.err(format!("invalid identifier `{}`", t.text)))
    }
}

/// `<target>:<numerator>` entries, all on the `2^lbits` grid.
fn parse_dist<'a>(
    toks: &[Tok<'a>],
    lbits: u32,
    resolve: impl Fn(Tok<'a>, &'a str) -> std::result::Result<usize, ParseError>,
) -> std::result::Result<Dist, ParseError> {
    let den = denominator(lbits);
    let mut out: Dist = Vec::new();
    for &t in toks {
        let (name, num) = t
            .text
            .rsplit_once(':')
            .ok_or_else(|| t.err(format!("expected `<id>:<numerator>`, found `{}`", t.text)))?;
        let target = resolve(t, name)?;
        let n = BigUint::from_str_radix(num, 10)
            .map_err(|_| t.err(format!("expected numerator, found `{num}`")))?;
        if n > den {
            return Err(t.err("probability out of range"));
        }
        if out.iter().any(|(x, _)| *x == target) {
            return Err(t.err(format!("duplicate entry `{name}`")));
        }
        out.push((
            target,
            DyadicProb::new(n, lbits).expect("numerator within range"),
        ));
    }
    Ok(out)
}

struct GameHeader {
    lbits: u32,
    horizon: BigUint,
    bound: usize,
}

fn game_header(l: &Line<'_>) -> std::result::Result<GameHeader, ParseError> {
    l.expect(0, "game")?;
    let (mut lbits, mut horizon, mut bound) = (None, None, None);
    for &t in &l.toks[1..] {
        let (k, v) = t
            .text
            .split_once('=')
            .ok_or_else(|| t.err(format!("expected `key=value`, found `{}`", t.text)))?;
        match k {
            "lbits" => lbits = Some(number::<u32>(t, v, "lbits")?),
            "horizon" => horizon = Some(parse_horizon(t, v)?),
            "bound" => bound = Some(number::<usize>(t, v, "bound")?),
            _ => return Err(t.err(format!("unknown header key `{k}`"))),
        }
    }
    let lbits = lbits.ok_or_else(|| l.eol("expected `lbits=<L>`"))?;
    if lbits == 0 {
        return Err(l.toks[0].err("lbits must be at least 1"));
    }
    Ok(GameHeader {
        lbits,
        horizon: horizon.ok_or_else(|| l.eol("expected `horizon=<F>`"))?,
        bound: bound.ok_or_else(|| l.eol("expected `bound=<b>`"))?,
    })
}

/// Parses a game file. Structural checks beyond name resolution are left to `validate_game`.
pub fn parse_game(text: &str) -> Result<GameSystem> {
    Ok(parse_game_inner(text)?)
}

fn parse_game_inner(text: &str) -> std::result::Result<GameSystem, ParseError> {
    let ls = lines(text);
    let first = ls
        .first()
        .ok_or_else(|| ParseError::new(1, 1, "expected `game` header"))?;
    let header = game_header(first)?;
    let mut states: Option<Vec<String>> = None;
    let mut init = None;
    let mut agents: BTreeMap<usize, AgentSpec> = BTreeMap::new();
    let mut playing: Vec<Option<Vec<usize>>> = Vec::new();
    let mut trans: Vec<BTreeMap<Vec<usize>, Dist>> = Vec::new();

    let state_of = |states: &Option<Vec<String>>, t: Tok<'_>, name: &str| {
        states
            .as_ref()
            .and_then(|s| s.iter().position(|x| x == name))
            .ok_or_else(|| t.err(format!("unknown state `{name}`")))
    };

    for l in &ls[1..] {
        let kw = l.toks[0];
        match kw.text {
            "states" => {
                if states.is_some() {
                    return Err(kw.err("duplicate `states` line"));
                }
                let mut names: Vec<String> = Vec::new();
                for &t in &l.toks[1..] {
                    let n = ident(t)?;
                    if names.iter().any(|x| x == n) {
                        return Err(t.err(format!("duplicate state `{n}`")));
                    }
                    names.push(n.to_string());
                }
                if names.is_empty() {
                    return Err(l.eol("expected at least one state"));
                }
                playing = vec![None; names.len()];
                trans = vec![BTreeMap::new(); names.len()];
                states = Some(names);
            }
            "init" => {
                let t = l.get(1, "initial state")?;
                if init.is_some() {
                    return Err(kw.err("duplicate `init` line"));
                }
                init = Some(state_of(&states, t, t.text)?);
                if let Some(extra) = l.toks.get(2) {
                    return Err(extra.err("unexpected token"));
                }
            }
            "agent" => {
                let nv = states
                    .as_ref()
                    .ok_or_else(|| kw.err("`states` must precede `agent`"))?
                    .len();
                let it = l.get(1, "agent index")?;
                let i: usize = number(it, it.text, "agent index")?;
                if i == 0 {
                    return Err(it.err("agents are numbered from 1"));
                }
                if agents.contains_key(&i) {
                    return Err(it.err(format!("duplicate agent {i}")));
                }
                l.expect(2, "actions")?;
                let mut k = 3;
                let mut actions: Vec<String> = Vec::new();
                while k < l.toks.len() && l.toks[k].text != "goal" {
                    let a = ident(l.toks[k])?;
                    if actions.iter().any(|x| x == a) {
                        return Err(l.toks[k].err(format!("duplicate action `{a}`")));
                    }
                    actions.push(a.to_string());
                    k += 1;
                }
                if actions.is_empty() {
                    return Err(l
                        .get(k, "action")
                        .map_or_else(|e| e, |t| t.err("expected at least one action")));
                }
                l.expect(k, "goal")?;
                let mut goal = vec![false; nv];
                for &t in &l.toks[k + 1..] {
                    goal[state_of(&states, t, t.text)?] = true;
                }
                agents.insert(i, AgentSpec { actions, goal });
            }
            "play" => {
                let st = l.get(1, "state")?;
                let (name, mut rest) = match st.text.strip_suffix(':') {
                    Some(n) => (n, 2),
                    None => {
                        l.expect(2, ":")?;
                        (st.text, 3)
                    }
                };
                let v = state_of(&states, st, name)?;
                if playing[v].is_some() {
                    return Err(st.err(format!("duplicate `play` line for `{name}`")));
                }
                let mut who = Vec::new();
                if l.toks.get(rest).map(|t| t.text) == Some("-") {
                    rest += 1;
                    if let Some(extra) = l.toks.get(rest) {
                        return Err(extra.err("unexpected token after `-`"));
                    }
                } else {
                    if rest >= l.toks.len() {
                        return Err(l.eol("expected agent list or `-`"));
                    }
                    for &t in &l.toks[rest..] {
                        let i: usize = number(t, t.text, "agent index")?;
                        if !agents.contains_key(&i) {
                            return Err(t.err(format!("unknown agent {}", t.text)));
                        }
                        if who.contains(&(i - 1)) {
                            return Err(t.err(format!("duplicate agent {i}")));
                        }
                        who.push(i - 1);
                    }
                }
                who.sort_unstable();
                playing[v] = Some(who);
            }
            "trans" => {
                let st = l.get(1, "state")?;
                let v = state_of(&states, st, st.text)?;
                let open = l.get(2, "`[`")?;
                let mut k = 2;
                let mut names: Vec<Tok<'_>> = Vec::new();
                // `[a b]`, `[a`, `b]`, `[]` and `[ ]` are all accepted.
                let mut inner = open
                    .text
                    .strip_prefix('[')
                    .ok_or_else(|| open.err(format!("expected `[`, found `{}`", open.text)))?;
                let mut closed = false;
                loop {
                    let (body, done) = match inner.strip_suffix(']') {
                        Some(b) => (b, true),
                        None => (inner, false),
                    };
                    if !body.is_empty() {
                        let tok = l.toks[k];
                        let offset = tok.text.len() - inner.len();
                        names.push(Tok {
                            text: body,
                            line: tok.line,
                            col: tok.col + offset,
                        });
                    }
                    if done {
                        closed = true;
                        break;
                    }
                    k += 1;
                    match l.toks.get(k) {
                        Some(t) => inner = t.text,
                        None => break,
                    }
                }
                if !closed {
                    return Err(l.eol("expected `]`"));
                }
                let who = playing[v].clone().unwrap_or_default();
                if names.len() != who.len() {
                    return Err(open.err(format!(
                        "action tuple has {} entries but {} agents play at `{}`",
                        names.len(),
                        who.len(),
                        st.text
                    )));
                }
                let mut theta = Vec::new();
                for (t, &i) in names.iter().zip(&who) {
                    let a = agents[&(i + 1)]
                        .actions
                        .iter()
                        .position(|x| x == t.text)
                        .ok_or_else(|| {
                            t.err(format!("unknown action `{}` for agent {}", t.text, i + 1))
                        })?;
                    theta.push(a);
                }
                l.expect(k + 1, "->")?;
                let dist = parse_dist(&l.toks[k + 2..], header.lbits, |t, name| {
                    state_of(&states, t, name)
                })?;
                if dist.is_empty() {
                    return Err(l.eol("expected at least one `<state>:<numerator>`"));
                }
                if trans[v].insert(theta, dist).is_some() {
                    return Err(st.err("duplicate transition row"));
                }
            }
            other => return Err(kw.err(format!("unknown keyword `{other}`"))),
        }
    }

    let states = states.ok_or_else(|| ParseError::new(first.line, 1, "missing `states` line"))?;
    let init = init.ok_or_else(|| ParseError::new(first.line, 1, "missing `init` line"))?;
    let k = agents.len();
    if let Some((&last, _)) = agents.iter().next_back() {
        if last != k {
            return Err(ParseError::new(
                first.line,
                1,
                format!("agents must be numbered 1..{k}"),
            ));
        }
    }
    Ok(GameSystem {
        states,
        init,
        agents: agents.into_values().collect(),
        playing: playing.into_iter().map(Option::unwrap_or_default).collect(),
        trans,
        lbits: header.lbits,
        bound: header.bound,
        horizon: header.horizon,
    })
}

fn fmt_dist(d: &Dist, names: &[String]) -> String {
    d.iter()
        .map(|(x, p)| format!("{}:{}", names[*x], p.numerator()))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Canonical text form; `parse_game(serialize_game(g)) == g`.
pub fn serialize_game(g: &GameSystem) -> String {
    let mut out = format!(
        "game lbits={} horizon={} bound={}\n",
        g.lbits, g.horizon, g.bound
    );
    out.push_str(&format!("states {}\n", g.states.join(" ")));
    out.push_str(&format!("init {}\n", g.states[g.init]));
    for (i, a) in g.agents.iter().enumerate() {
        let goal: Vec<&str> = (0..g.num_states())
            .filter(|&v| a.goal[v])
            .map(|v| g.states[v].as_str())
            .collect();
        let mut line = format!("agent {} actions {} goal", i + 1, a.actions.join(" "));
        for s in goal {
            line.push(' ');
            line.push_str(s);
        }
        out.push_str(&line);
        out.push('\n');
    }
    for v in 0..g.num_states() {
        let who = if g.playing[v].is_empty() {
            "-".to_string()
        } else {
            g.playing[v]
                .iter()
                .map(|i| (i + 1).to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        out.push_str(&format!("play {}: {}\n", g.states[v], who));
    }
    for v in 0..g.num_states() {
        for (theta, d) in &g.trans[v] {
            let names: Vec<&str> = theta
                .iter()
                .zip(&g.playing[v])
                .map(|(&a, &i)| {
                    g.agents
                        .get(i)
                        .and_then(|s| s.actions.get(a))
                        .map_or("?", |s| s)
                })
                .collect();
            out.push_str(&format!(
                "trans {} [{}] -> {}\n",
                g.states[v],
                names.join(" "),
                fmt_dist(d, &g.states)
            ));
        }
    }
    out
}

/// Parses a transducer file against its game; names resolve through `g`.
pub fn parse_transducer(text: &str, g: &GameSystem) -> Result<StrategyTransducer> {
    Ok(parse_transducer_inner(text, g)?)
}

fn parse_transducer_inner(
    text: &str,
    g: &GameSystem,
) -> std::result::Result<StrategyTransducer, ParseError> {
    let ls = lines(text);
    let first = ls
        .first()
        .ok_or_else(|| ParseError::new(1, 1, "expected `transducer` header"))?;
    first.expect(0, "transducer")?;
    let at = first.get(1, "`agent=<i>`")?;
    let i: usize = number(at, keyed(at, "agent")?, "agent index")?;
    if i == 0 || i > g.num_agents() {
        return Err(at.err(format!("unknown agent {i}")));
    }
    let lt = first.get(2, "`lbits=<L>`")?;
    let lbits: u32 = number(lt, keyed(lt, "lbits")?, "lbits")?;
    if lbits != g.lbits {
        return Err(lt.err("lbits mismatch"));
    }
    if let Some(extra) = first.toks.get(3) {
        return Err(extra.err("unexpected token"));
    }
    let agent = i - 1;
    let nv = g.num_states();
    let mut tstates: Option<Vec<String>> = None;
    let mut init = None;
    let mut step: Vec<Vec<Option<usize>>> = Vec::new();
    let mut output: Vec<Vec<Option<Output>>> = Vec::new();

    let tstate_of = |ts: &Option<Vec<String>>, t: Tok<'_>| {
        ts.as_ref()
            .and_then(|s| s.iter().position(|x| x == t.text))
            .ok_or_else(|| t.err(format!("unknown transducer state `{}`", t.text)))
    };
    let state_of = |t: Tok<'_>| {
        g.state_index(t.text)
            .ok_or_else(|| t.err(format!("unknown state `{}`", t.text)))
    };

    for l in &ls[1..] {
        let kw = l.toks[0];
        match kw.text {
            "tstates" => {
                if tstates.is_some() {
                    return Err(kw.err("duplicate `tstates` line"));
                }
                let mut names: Vec<String> = Vec::new();
                for &t in &l.toks[1..] {
                    let n = ident(t)?;
                    if names.iter().any(|x| x == n) {
                        return Err(t.err(format!("duplicate transducer state `{n}`")));
                    }
                    names.push(n.to_string());
                }
                if names.is_empty() {
                    return Err(l.eol("expected at least one transducer state"));
                }
                step = vec![vec![None; nv]; names.len()];
                output = vec![vec![None; nv]; names.len()];
                tstates = Some(names);
            }
            "init" => {
                if init.is_some() {
                    return Err(kw.err("duplicate `init` line"));
                }
                init = Some(tstate_of(&tstates, l.get(1, "initial state")?)?);
            }
            "step" => {
                let s = tstate_of(&tstates, l.get(1, "transducer state")?)?;
                let vt = l.get(2, "game state")?;
                let v = state_of(vt)?;
                l.expect(3, "->")?;
                let s2 = tstate_of(&tstates, l.get(4, "transducer state")?)?;
                if let Some(extra) = l.toks.get(5) {
                    return Err(extra.err("unexpected token"));
                }
                if step[s][v].replace(s2).is_some() {
                    return Err(kw.err("duplicate `step` line"));
                }
            }
            "out" => {
                let s = tstate_of(&tstates, l.get(1, "transducer state")?)?;
                let vt = l.get(2, "game state")?;
                let v = state_of(vt)?;
                l.expect(3, "->")?;
                let rest = &l.toks[4..];
                let o = if rest.len() == 1 && rest[0].text == "bot" {
                    Output::Bot
                } else {
                    if rest.is_empty() {
                        return Err(l.eol("expected `<action>:<numerator>` or `bot`"));
                    }
                    let acts = &g.agents[agent].actions;
                    Output::Dist(parse_dist(rest, lbits, |t, name| {
                        acts.iter()
                            .position(|x| x == name)
                            .ok_or_else(|| t.err(format!("unknown action `{name}` for agent {i}")))
                    })?)
                };
                if output[s][v].replace(o).is_some() {
                    return Err(kw.err("duplicate `out` line"));
                }
            }
            other => return Err(kw.err(format!("unknown keyword `{other}`"))),
        }
    }

    let tstates =
        tstates.ok_or_else(|| ParseError::new(first.line, 1, "missing `tstates` line"))?;
    let init = init.ok_or_else(|| ParseError::new(first.line, 1, "missing `init` line"))?;
    let end = ls.last().map_or(1, |l| l.line);
    let mut full_step = Vec::with_capacity(tstates.len());
    for (s, row) in step.into_iter().enumerate() {
        let mut r = Vec::with_capacity(nv);
        for (v, x) in row.into_iter().enumerate() {
            r.push(x.ok_or_else(|| {
                ParseError::new(
                    end,
                    1,
                    format!("missing step for `{}` `{}`", tstates[s], g.states[v]),
                )
            })?);
        }
        full_step.push(r);
    }
    Ok(StrategyTransducer {
        agent,
        lbits,
        tstates,
        init,
        step: full_step,
        output: output
            .into_iter()
            .map(|row| row.into_iter().map(|o| o.unwrap_or(Output::Bot)).collect())
            .collect(),
    })
}

/// Canonical text form; `bot` outputs are omitted.
pub fn serialize_transducer(g: &GameSystem, t: &StrategyTransducer) -> String {
    let mut out = format!("transducer agent={} lbits={}\n", t.agent + 1, t.lbits);
    out.push_str(&format!("tstates {}\n", t.tstates.join(" ")));
    out.push_str(&format!("init {}\n", t.tstates[t.init]));
    for s in 0..t.num_states() {
        for v in 0..g.num_states() {
            out.push_str(&format!(
                "step {} {} -> {}\n",
                t.tstates[s], g.states[v], t.tstates[t.step[s][v]]
            ));
        }
    }
    for s in 0..t.num_states() {
        for v in 0..g.num_states() {
            if let Output::Dist(d) = &t.output[s][v] {
                out.push_str(&format!(
                    "out {} {} -> {}\n",
                    t.tstates[s],
                    g.states[v],
                    fmt_dist(d, &g.agents[t.agent].actions)
                ));
            }
        }
    }
    out
}
