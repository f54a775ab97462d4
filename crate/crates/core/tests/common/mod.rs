//! Hand-written fixtures shared by the integration suites.
#![allow(dead_code)]

use eqcheck::atm::{compile, parse_atm};
use eqcheck::format::{parse_game, parse_transducer};
use eqcheck::model::GameSystem;
use eqcheck::strategy::ProductTransducer;
use num_bigint::BigUint;

pub struct Fixture {
    pub name: String,
    pub game: GameSystem,
    pub profile: ProductTransducer,
}

pub const COIN: &str = "\
game lbits=2 horizon=2 bound=1
states u g d
init u
agent 1 actions a b goal g
play u: 1
trans u [a] -> g:3 d:1
trans u [b] -> g:1 d:3
trans g [] -> g:4
trans d [] -> d:4
";

pub fn coin_always(action: &str) -> String {
    format!(
        "transducer agent=1 lbits=2\ntstates s0\ninit s0\nstep s0 u -> s0\nstep s0 g -> s0\nstep s0 d -> s0\nout s0 u -> {action}:4\n"
    )
}

/// Optimal on the path from `x`, but plays `d` (to `sink`) in the off-path state `z`.
pub const OFF_PATH: &str = "\
game lbits=1 horizon=3 bound=1
states x y z goal sink
init x
agent 1 actions a b c d goal goal
play x: 1
play z: 1
trans x [a] -> y:2
trans x [b] -> z:2
trans x [c] -> sink:2
trans x [d] -> sink:2
trans y [] -> goal:2
trans z [a] -> sink:2
trans z [b] -> sink:2
trans z [c] -> goal:2
trans z [d] -> sink:2
trans goal [] -> goal:2
trans sink [] -> sink:2
";

pub const OFF_PATH_PROFILE: &str = "\
transducer agent=1 lbits=1
tstates q
init q
step q x -> q
step q y -> q
step q z -> q
step q goal -> q
step q sink -> q
out q x -> a:2
out q z -> d:2
";

/// Matching pennies: agent 1 wins on a match, agent 2 on a mismatch.
pub const PENNIES: &str = "\
game lbits=1 horizon=2 bound=2
states s m x
init s
agent 1 actions h t goal m
agent 2 actions h t goal x
play s: 1 2
trans s [h h] -> m:2
trans s [h t] -> x:2
trans s [t h] -> x:2
trans s [t t] -> m:2
trans m [] -> m:2
trans x [] -> x:2
";

pub fn pennies_profile(agent: usize, out: &str) -> String {
    format!(
        "transducer agent={agent} lbits=1\ntstates q\ninit q\nstep q s -> q\nstep q m -> q\nstep q x -> q\nout q s -> {out}\n"
    )
}

pub const ATM_ACCEPT: &str = "atm\nmstates q:acc\ninit q\nalphabet 0 blank=0\n";
pub const ATM_REJECT: &str = "atm\nmstates q:rej\ninit q\nalphabet 0 blank=0\n";
pub const ATM_AND: &str =
    "atm\nmstates q:and y:acc n:rej\ninit q\nalphabet 0 1 blank=0\nrule q 0 -> y 1 R | n 0 R\n";
pub const ATM_OR: &str =
    "atm\nmstates q:or y:acc n:rej\ninit q\nalphabet 0 1 blank=0\nrule q 0 -> n 1 R | y 1 R\n";

/// The four reduction machines with their cell bounds.
pub fn machines() -> Vec<(&'static str, &'static str, usize)> {
    vec![
        ("accept", ATM_ACCEPT, 1),
        ("reject", ATM_REJECT, 1),
        ("and-root", ATM_AND, 2),
        ("or-root", ATM_OR, 2),
    ]
}

pub fn instance(game: &str, ts: &[String]) -> (GameSystem, ProductTransducer) {
    let g = parse_game(game).unwrap();
    let comps = ts
        .iter()
        .map(|t| parse_transducer(t, &g).unwrap())
        .collect();
    let pt = ProductTransducer::new(&g, comps).unwrap();
    (g, pt)
}

pub fn fixture(name: &str, game: &str, ts: &[String]) -> Fixture {
    let (game, profile) = instance(game, ts);
    Fixture {
        name: name.into(),
        game,
        profile,
    }
}

/// Hand-written games plus the compiled machines at horizon 8.
pub fn fixtures() -> Vec<Fixture> {
    let mut out = vec![
        fixture("coin/a", COIN, &[coin_always("a")]),
        fixture("coin/b", COIN, &[coin_always("b")]),
        fixture("off-path", OFF_PATH, &[OFF_PATH_PROFILE.to_string()]),
        fixture(
            "pennies/mixed",
            PENNIES,
            &[pennies_profile(1, "h:1 t:1"), pennies_profile(2, "h:1 t:1")],
        ),
        fixture(
            "pennies/pure",
            PENNIES,
            &[pennies_profile(1, "h:2"), pennies_profile(2, "h:2")],
        ),
    ];
    for (name, src, n) in machines() {
        let mut c = compile(&parse_atm(src).unwrap(), n).unwrap();
        c.game.horizon = BigUint::from(8u32);
        out.push(Fixture {
            name: format!("atm/{name}"),
            game: c.game,
            profile: c.profile,
        });
    }
    out
}
