//! Space-bounded alternating Turing machines and their compilation into a
//! turn-based game whose fixed profile is a Nash equilibrium iff the machine
//! rejects the empty tape within `n` cells.

use std::collections::{BTreeMap, HashMap, VecDeque};

use num_bigint::BigUint;
use num_traits::Pow;

use crate::error::{Error, ParseError, Result};
use crate::format::lines;
use crate::model::{AgentSpec, Dist, DyadicProb, GameSystem};
use crate::strategy::{Output, ProductTransducer, StrategyTransducer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Accept,
    Reject,
    Or,
    And,
    Det,
}

impl Label {
    fn keyword(self) -> &'static str {
        match self {
            Label::Accept => "acc",
            Label::Reject => "rej",
            Label::Or => "or",
            Label::And => "and",
            Label::Det => "det",
        }
    }

    fn arity(self) -> Option<usize> {
        match self {
            Label::Or | Label::And => Some(2),
            Label::Det => Some(1),
            Label::Accept | Label::Reject => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dir {
    Left,
    Right,
}

impl Dir {
    fn letter(self) -> char {
        match self {
            Dir::Left => 'L',
            Dir::Right => 'R',
        }
    }

    /// New 0-based head position, if it stays within `0..n`.
    fn apply(self, pos: usize, n: usize) -> Option<usize> {
        match self {
            Dir::Left => pos.checked_sub(1),
            Dir::Right => Some(pos + 1).filter(|&p| p < n),
        }
    }
}

/// One successor of a rule: next state, written symbol, head move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Move {
    pub state: usize,
    pub write: usize,
    pub dir: Dir,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atm {
    pub mstates: Vec<String>,
    pub labels: Vec<Label>,
    pub init: usize,
    pub alphabet: Vec<String>,
    pub blank: usize,
    /// `(state, read)` to successors; the first is the α successor.
    pub rules: BTreeMap<(usize, usize), Vec<Move>>,
}

fn atm_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses an ATM file.
pub fn parse_atm(text: &str) -> Result<Atm> {
    Ok(parse_atm_inner(text)?)
}

fn parse_atm_inner(text: &str) -> std::result::Result<Atm, ParseError> {
    let ls = lines(text);
    let first = ls
        .first()
        .ok_or_else(|| ParseError::new(1, 1, "expected `atm` header"))?;
    first.expect(0, "atm")?;
    if let Some(t) = first.toks.get(1) {
        return Err(t.err("unexpected token"));
    }
    let mut mstates: Option<(Vec<String>, Vec<Label>)> = None;
    let mut init = None;
    let mut alphabet: Option<(Vec<String>, usize)> = None;
    let mut rules: BTreeMap<(usize, usize), Vec<Move>> = BTreeMap::new();

    for l in &ls[1..] {
        let kw = l.toks[0];
        match kw.text {
            "mstates" => {
                if mstates.is_some() {
                    return Err(kw.err("duplicate `mstates` line"));
                }
                let (mut names, mut labels) = (Vec::new(), Vec::new());
                for &t in &l.toks[1..] {
                    let (name, lab) = t.text.split_once(':').ok_or_else(|| {
                        t.err(format!("expected `<id>:<label>`, found `{}`", t.text))
                    })?;
                    if !atm_ident(name) {
                        return Err(t.err(format!("invalid machine state `{name}`")));
                    }
                    if names.iter().any(|x: &String| x == name) {
                        return Err(t.err(format!("duplicate machine state `{name}`")));
                    }
                    let label = match lab {
                        "acc" => Label::Accept,
                        "rej" => Label::Reject,
                        "or" => Label::Or,
                        "and" => Label::And,
                        "det" => Label::Det,
                        _ => return Err(t.err(format!("unknown label `{lab}`"))),
                    };
                    names.push(name.to_string());
                    labels.push(label);
                }
                if names.is_empty() {
                    return Err(l.eol("expected at least one machine state"));
                }
                mstates = Some((names, labels));
            }
            "init" => {
                let t = l.get(1, "initial machine state")?;
                let names = &mstates
                    .as_ref()
                    .ok_or_else(|| kw.err("`mstates` must precede `init`"))?
                    .0;
                init = Some(
                    names
                        .iter()
                        .position(|x| x == t.text)
                        .ok_or_else(|| t.err(format!("unknown machine state `{}`", t.text)))?,
                );
            }
            "alphabet" => {
                if alphabet.is_some() {
                    return Err(kw.err("duplicate `alphabet` line"));
                }
                let mut syms: Vec<String> = Vec::new();
                let mut blank = None;
                for &t in &l.toks[1..] {
                    if let Some(b) = t.text.strip_prefix("blank=") {
                        blank = Some((t, b));
                        continue;
                    }
                    if !atm_ident(t.text) {
                        return Err(t.err(format!("invalid symbol `{}`", t.text)));
                    }
                    if syms.iter().any(|x| x == t.text) {
                        return Err(t.err(format!("duplicate symbol `{}`", t.text)));
                    }
                    syms.push(t.text.to_string());
                }
                let (bt, b) = blank.ok_or_else(|| l.eol("expected `blank=<sym>`"))?;
                let bi = syms
                    .iter()
                    .position(|x| x == b)
                    .ok_or_else(|| bt.err(format!("blank symbol `{b}` is not in the alphabet")))?;
                alphabet = Some((syms, bi));
            }
            "rule" => {
                let (names, labels) = mstates
                    .as_ref()
                    .ok_or_else(|| kw.err("`mstates` must precede `rule`"))?;
                let syms = &alphabet
                    .as_ref()
                    .ok_or_else(|| kw.err("`alphabet` must precede `rule`"))?
                    .0;
                let state = |i: usize| -> std::result::Result<usize, ParseError> {
                    let t = l.get(i, "machine state")?;
                    names
                        .iter()
                        .position(|x| x == t.text)
                        .ok_or_else(|| t.err(format!("unknown machine state `{}`", t.text)))
                };
                let sym = |i: usize| -> std::result::Result<usize, ParseError> {
                    let t = l.get(i, "symbol")?;
                    syms.iter()
                        .position(|x| x == t.text)
                        .ok_or_else(|| t.err(format!("unknown symbol `{}`", t.text)))
                };
                let r = state(1)?;
                let g = sym(2)?;
                l.expect(3, "->")?;
                let mut moves = Vec::new();
                let mut k = 4;
                loop {
                    let s = state(k)?;
                    let w = sym(k + 1)?;
                    let dt = l.get(k + 2, "`L` or `R`")?;
                    let dir = match dt.text {
                        "L" => Dir::Left,
                        "R" => Dir::Right,
                        other => {
                            return Err(dt.err(format!("expected `L` or `R`, found `{other}`")))
                        }
                    };
                    moves.push(Move {
                        state: s,
                        write: w,
                        dir,
                    });
                    k += 3;
                    match l.toks.get(k) {
                        None => break,
                        Some(t) if t.text == "|" && moves.len() < 2 => k += 1,
                        Some(t) => return Err(t.err("unexpected token")),
                    }
                }
                match labels[r].arity() {
                    Some(a) if a != moves.len() => {
                        return Err(kw.err(format!(
                            "`{}` is labelled {} and needs {} successor(s), found {}",
                            names[r],
                            labels[r].keyword(),
                            a,
                            moves.len()
                        )))
                    }
                    None => {
                        return Err(kw.err(format!(
                            "`{}` is labelled {} and takes no rules",
                            names[r],
                            labels[r].keyword()
                        )))
                    }
                    _ => {}
                }
                if rules.insert((r, g), moves).is_some() {
                    return Err(kw.err("duplicate rule"));
                }
            }
            other => return Err(kw.err(format!("unknown keyword `{other}`"))),
        }
    }
    let (mstates, labels) =
        mstates.ok_or_else(|| ParseError::new(first.line, 1, "missing `mstates` line"))?;
    let (alphabet, blank) =
        alphabet.ok_or_else(|| ParseError::new(first.line, 1, "missing `alphabet` line"))?;
    Ok(Atm {
        mstates,
        labels,
        init: init.ok_or_else(|| ParseError::new(first.line, 1, "missing `init` line"))?,
        alphabet,
        blank,
        rules,
    })
}

pub fn serialize_atm(m: &Atm) -> String {
    let mut out = String::from("atm\n");
    let ms: Vec<String> = m
        .mstates
        .iter()
        .zip(&m.labels)
        .map(|(s, l)| format!("{s}:{}", l.keyword()))
        .collect();
    out.push_str(&format!("mstates {}\n", ms.join(" ")));
    out.push_str(&format!("init {}\n", m.mstates[m.init]));
    out.push_str(&format!(
        "alphabet {} blank={}\n",
        m.alphabet.join(" "),
        m.alphabet[m.blank]
    ));
    for (&(r, g), moves) in &m.rules {
        let ms: Vec<String> = moves
            .iter()
            .map(|mv| {
                format!(
                    "{} {} {}",
                    m.mstates[mv.state],
                    m.alphabet[mv.write],
                    mv.dir.letter()
                )
            })
            .collect();
        out.push_str(&format!(
            "rule {} {} -> {}\n",
            m.mstates[r],
            m.alphabet[g],
            ms.join(" | ")
        ));
    }
    out
}

/// Instantaneous description: tape, 0-based head, machine state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Id {
    tape: Vec<usize>,
    head: usize,
    state: usize,
}

/// Successor IDs of `id`; `None` marks a move that leaves the tape.
fn id_successors(m: &Atm, id: &Id, n: usize) -> Vec<Option<Id>> {
    let Some(moves) = m.rules.get(&(id.state, id.tape[id.head])) else {
        return Vec::new();
    };
    moves
        .iter()
        .map(|mv| {
            mv.dir.apply(id.head, n).map(|head| {
                let mut tape = id.tape.clone();
                tape[id.head] = mv.write;
                Id {
                    tape,
                    head,
                    state: mv.state,
                }
            })
        })
        .collect()
}

/// Whether `m` accepts the empty tape using at most `n` cells.
///
/// Least fixpoint over the reachable IDs, so only finite accepting trees count.
/// Missing rules and moves off the tape reject.
pub fn atm_accepts(m: &Atm, n: usize, cap: usize) -> Result<bool> {
    if n == 0 {
        return Err(Error::Invalid("cell bound must be at least 1".into()));
    }
    let root = Id {
        tape: vec![m.blank; n],
        head: 0,
        state: m.init,
    };
    let mut index: HashMap<Id, usize> = HashMap::new();
    let mut ids = Vec::new();
    let mut succ: Vec<Vec<Option<usize>>> = Vec::new();
    let mut queue = VecDeque::new();
    index.insert(root.clone(), 0);
    ids.push(root.clone());
    queue.push_back(root);
    while let Some(id) = queue.pop_front() {
        let mut row = Vec::new();
        if matches!(m.labels[id.state], Label::Or | Label::And | Label::Det) {
            for s in id_successors(m, &id, n) {
                row.push(s.map(|s| {
                    *index.entry(s.clone()).or_insert_with(|| {
                        ids.push(s.clone());
                        queue.push_back(s);
                        ids.len() - 1
                    })
                }));
            }
        }
        succ.push(row);
        if ids.len() > cap {
            return Err(Error::CapExceeded { cap });
        }
    }
    let mut acc = vec![false; ids.len()];
    loop {
        let mut changed = false;
        for (k, id) in ids.iter().enumerate() {
            if acc[k] {
                continue;
            }
            let ok = |s: &Option<usize>| s.is_some_and(|j| acc[j]);
            let now = match m.labels[id.state] {
                Label::Accept => true,
                Label::Reject => false,
                Label::Or => succ[k].iter().any(ok),
                Label::And | Label::Det => !succ[k].is_empty() && succ[k].iter().all(ok),
            };
            if now {
                acc[k] = true;
                changed = true;
            }
        }
        if !changed {
            return Ok(acc[0]);
        }
    }
}

/// What a compiled game state stands for. Cells are 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Role {
    /// Head over `cell`; `existential` when the machine state is ∨.
    Head {
        cell: usize,
        existential: bool,
    },
    /// A transition just made at `cell`.
    Announce {
        cell: usize,
        write: usize,
        dir: Dir,
        state: usize,
    },
    /// The last agent picked a successor for the ∨ state at `cell`.
    Choice {
        cell: usize,
        alpha: bool,
    },
    Start,
    Base,
    Goal,
    Sink,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompiledInstance {
    pub game: GameSystem,
    pub profile: ProductTransducer,
    /// Role of each game state, by index.
    pub provenance: Vec<Role>,
}

/// `(3·|Γ|·|R|)^n + 1`.
pub fn reduction_horizon(m: &Atm, n: usize) -> BigUint {
    let base = BigUint::from(3 * m.alphabet.len() * m.mstates.len());
    base.pow(n as u32) + 1u32
}

const LBITS: u32 = 3;

fn det(v: usize) -> Dist {
    vec![(v, DyadicProb::one(LBITS))]
}

/// Builds the game and profile for `m` with `n` cells.
pub fn compile(m: &Atm, n: usize) -> Result<CompiledInstance> {
    if n == 0 {
        return Err(Error::Invalid("cell bound must be at least 1".into()));
    }
    let (ng, nr) = (m.alphabet.len(), m.mstates.len());
    let mut roles = Vec::new();
    for cell in 1..=n {
        roles.push(Role::Head {
            cell,
            existential: false,
        });
        roles.push(Role::Head {
            cell,
            existential: true,
        });
    }
    for cell in 1..=n {
        for write in 0..ng {
            for dir in [Dir::Right, Dir::Left] {
                for state in 0..nr {
                    roles.push(Role::Announce {
                        cell,
                        write,
                        dir,
                        state,
                    });
                }
            }
        }
    }
    for cell in 1..=n {
        roles.push(Role::Choice { cell, alpha: true });
        roles.push(Role::Choice { cell, alpha: false });
    }
    roles.extend([Role::Start, Role::Base, Role::Goal, Role::Sink]);

    let name = |r: &Role| match *r {
        Role::Head { cell, existential } => {
            format!("h{cell}.{}", if existential { "or" } else { "none" })
        }
        Role::Announce {
            cell,
            write,
            dir,
            state,
        } => {
            format!(
                "t{cell}.{}.{}.{}",
                m.alphabet[write],
                dir.letter(),
                m.mstates[state]
            )
        }
        Role::Choice { cell, alpha } => format!("x{cell}.{}", if alpha { "alpha" } else { "beta" }),
        Role::Start => "start".into(),
        Role::Base => "base".into(),
        Role::Goal => "goal".into(),
        Role::Sink => "sink".into(),
    };
    let states: Vec<String> = roles.iter().map(name).collect();
    let at: HashMap<&str, usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let idx = |r: Role| at[name(&r).as_str()];
    let (start, base, goal, sink) = (
        idx(Role::Start),
        idx(Role::Base),
        idx(Role::Goal),
        idx(Role::Sink),
    );
    let head = |cell: usize, state: usize| Role::Head {
        cell,
        existential: m.labels[state] == Label::Or,
    };

    // Simulator actions: every announcement label, then `*` and `X`.
    let announce_first = idx(Role::Announce {
        cell: 1,
        write: 0,
        dir: Dir::Right,
        state: 0,
    });
    let n_announce = n * ng * 2 * nr;
    let mut sim_actions: Vec<String> = states[announce_first..announce_first + n_announce].to_vec();
    sim_actions.push("*".into());
    sim_actions.push("X".into());
    let (act_accept, act_reject) = (n_announce, n_announce + 1);
    let last = n;

    let nv = states.len();
    let mut playing = vec![Vec::new(); nv];
    let mut trans: Vec<BTreeMap<Vec<usize>, Dist>> = vec![BTreeMap::new(); nv];
    let sim_row = || -> BTreeMap<Vec<usize>, Dist> {
        let mut row = BTreeMap::new();
        for a in 0..n_announce {
            row.insert(vec![a], det(announce_first + a));
        }
        row.insert(vec![act_accept], det(goal));
        row.insert(vec![act_reject], det(sink));
        row
    };
    for (v, role) in roles.iter().enumerate() {
        match *role {
            Role::Head {
                cell,
                existential: false,
            }
            | Role::Choice { cell, .. } => {
                playing[v] = vec![cell - 1];
                trans[v] = sim_row();
            }
            Role::Head {
                cell,
                existential: true,
            } => {
                playing[v] = vec![last];
                trans[v].insert(vec![0], det(idx(Role::Choice { cell, alpha: true })));
                trans[v].insert(vec![1], det(idx(Role::Choice { cell, alpha: false })));
            }
            Role::Announce {
                cell, dir, state, ..
            } => {
                let to = match dir.apply(cell - 1, n) {
                    Some(p) => idx(head(p + 1, state)),
                    None => sink,
                };
                trans[v].insert(vec![], det(to));
            }
            Role::Start => {
                playing[v] = vec![last];
                trans[v].insert(vec![0], det(base));
                trans[v].insert(vec![1], det(idx(head(1, m.init))));
            }
            Role::Base => {
                trans[v].insert(
                    vec![],
                    vec![
                        (base, DyadicProb::from_u64(2, LBITS)?),
                        (goal, DyadicProb::from_u64(6, LBITS)?),
                    ],
                );
            }
            Role::Goal | Role::Sink => {
                trans[v].insert(vec![], det(v));
            }
        }
    }
    let mut agents: Vec<AgentSpec> = (0..n)
        .map(|_| AgentSpec {
            actions: sim_actions.clone(),
            goal: vec![true; nv],
        })
        .collect();
    let mut last_goal = vec![false; nv];
    last_goal[goal] = true;
    agents.push(AgentSpec {
        actions: vec!["alpha".into(), "beta".into()],
        goal: last_goal,
    });

    let game = GameSystem {
        states,
        init: start,
        agents,
        playing,
        trans,
        lbits: LBITS,
        bound: 1,
        horizon: reduction_horizon(m, n),
    };

    let mut components: Vec<StrategyTransducer> = (1..=n)
        .map(|cell| simulator(m, n, cell, &game, &roles, announce_first, act_reject))
        .collect();
    components.push(StrategyTransducer {
        agent: last,
        lbits: LBITS,
        tstates: vec!["p".into()],
        init: 0,
        step: vec![vec![0; nv]],
        output: vec![(0..nv)
            .map(|v| {
                if game.playing[v] == [last] {
                    Output::Dist(vec![(0, DyadicProb::one(LBITS))])
                } else {
                    Output::Bot
                }
            })
            .collect()],
    });
    let profile = ProductTransducer::new(&game, components)?;
    Ok(CompiledInstance {
        game,
        profile,
        provenance: roles,
    })
}

/// Transducer for the simulator of `cell`: states `<g>/<r or ->/<a|b|->`.
fn simulator(
    m: &Atm,
    n: usize,
    cell: usize,
    g: &GameSystem,
    roles: &[Role],
    announce_first: usize,
    act_reject: usize,
) -> StrategyTransducer {
    let (ng, nr) = (m.alphabet.len(), m.mstates.len());
    // Component encodings: head state `nr` means absent, choice 0/1/2 = α/β/none.
    let enc = |sym: usize, r: usize, c: usize| (sym * (nr + 1) + r) * 3 + c;
    let ns = ng * (nr + 1) * 3;
    let mut tstates = vec![String::new(); ns];
    for sym in 0..ng {
        for r in 0..=nr {
            for c in 0..3 {
                tstates[enc(sym, r, c)] = format!(
                    "{}/{}/{}",
                    m.alphabet[sym],
                    if r == nr { "-" } else { &m.mstates[r] },
                    ["a", "b", "-"][c]
                );
            }
        }
    }
    let announce_action = |at: usize, mv: &Move| {
        let v = roles
            .iter()
            .position(|x| {
                *x == Role::Announce {
                    cell: at,
                    write: mv.write,
                    dir: mv.dir,
                    state: mv.state,
                }
            })
            .expect("announcement state exists");
        v - announce_first
    };
    let one = DyadicProb::one(LBITS);
    let point = |a: usize| Output::Dist(vec![(a, one.clone())]);
    // What the simulator plays with head state `r` over symbol `sym`; `choice` picks a ∨ successor.
    let play = |sym: usize, r: usize, choice: Option<usize>| -> Output {
        if r == nr {
            return point(act_reject);
        }
        let moves = m.rules.get(&(r, sym));
        match (m.labels[r], moves) {
            (Label::Accept, _) => point(act_reject - 1),
            (Label::Reject, _) | (_, None) => point(act_reject),
            (Label::Det, Some(mv)) => point(announce_action(cell, &mv[0])),
            (Label::Or, Some(mv)) => match choice {
                Some(c) => point(announce_action(cell, &mv[c])),
                None => point(act_reject),
            },
            (Label::And, Some(mv)) => {
                let (a, b) = (announce_action(cell, &mv[0]), announce_action(cell, &mv[1]));
                if a == b {
                    point(a)
                } else {
                    let half = DyadicProb::from_u64(4, LBITS).expect("4/8");
                    let mut d = vec![(a, half.clone()), (b, half)];
                    d.sort_by_key(|x| x.0);
                    Output::Dist(d)
                }
            }
        }
    };

    let nv = g.num_states();
    let mut step = vec![vec![0; nv]; ns];
    let mut output = vec![vec![Output::Bot; nv]; ns];
    for sym in 0..ng {
        for r in 0..=nr {
            for c in 0..3 {
                let s = enc(sym, r, c);
                for (v, role) in roles.iter().enumerate() {
                    step[s][v] = match *role {
                        Role::Announce {
                            cell: j,
                            write,
                            dir,
                            state,
                        } => {
                            let sym2 = if j == cell { write } else { sym };
                            let r2 = if dir.apply(j - 1, n) == Some(cell - 1) {
                                state
                            } else {
                                nr
                            };
                            enc(sym2, r2, 2)
                        }
                        Role::Choice { cell: j, alpha } if j == cell => {
                            enc(sym, r, if alpha { 0 } else { 1 })
                        }
                        _ => s,
                    };
                    if g.playing[v] == [cell - 1] {
                        // At a choice state the transducer has not read it yet, so the choice comes from `v`.
                        let choice = match *role {
                            Role::Choice { alpha, .. } => Some(if alpha { 0 } else { 1 }),
                            _ => None,
                        };
                        output[s][v] = play(sym, r, choice);
                    }
                }
            }
        }
    }
    StrategyTransducer {
        agent: cell - 1,
        lbits: LBITS,
        tstates,
        init: enc(m.blank, if cell == 1 { m.init } else { nr }, 2),
        step,
        output,
    }
}
