//! End-to-end acceptance checks, one PASS/FAIL line per criterion.

mod common;

use std::process::Command;
use std::time::Instant;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use eqcheck::atm::{atm_accepts, compile, parse_atm};
use eqcheck::format::{serialize_game, serialize_transducer};
use eqcheck::gen::{gen_random_instance, Limits};
use eqcheck::model::{denominator_exponent, GameSystem, Rat};
use eqcheck::oracle::{
    oracle_best_response, oracle_nash, oracle_payoff, oracle_spe, synthesize_spe,
};
use eqcheck::product::{chain_row, explore_chain, explore_deviation, mdp_actions, DEFAULT_CAP};
use eqcheck::strategy::ProductTransducer;
use eqcheck::values::{best_response_values, bit_bound, hitting_probabilities, payoff};
use eqcheck::verify::{
    export_report, verify_nash, verify_nash_all, verify_spe, verify_spe_all, ReportFormat, Verdict,
    VerifyOptions,
};

use common::{fixtures, machines};

const CAP: usize = DEFAULT_CAP;
const ORACLE_CAP: usize = 2_000_000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random(
    count: u64,
    limits: &Limits,
) -> impl Iterator<Item = (u64, GameSystem, ProductTransducer)> + '_ {
    (0..count).map(move |seed| {
        let (g, pt) = gen_random_instance(seed, limits);
        (seed, g, pt)
    })
}

fn opts() -> VerifyOptions {
    VerifyOptions {
        cap: CAP,
        ..Default::default()
    }
}

fn c1_payoff() -> Outcome {
    let mut n = 0;
    for (seed, g, pt) in random(200, &Limits::default()) {
        for i in 0..g.num_agents() {
            let a = payoff(&g, &pt, i, CAP).map_err(|e| e.to_string())?;
            let b = oracle_payoff(&g, &pt, i, ORACLE_CAP).map_err(|e| e.to_string())?;
            check(a == b, || {
                format!("seed {seed} agent {}: {a} vs oracle {b}", i + 1)
            })?;
            n += 1;
        }
    }
    Ok(format!("200 instances, {n} payoffs equal"))
}

fn c2_best_response() -> Outcome {
    let (mut n, mut refuted) = (0, 0);
    for (seed, g, pt) in random(100, &Limits::default()) {
        for i in 0..g.num_agents() {
            let reach = explore_deviation(&g, &pt, i, CAP).map_err(|e| e.to_string())?;
            let ours = best_response_values(&g, &pt, i, &reach)
                .map_err(|e| e.to_string())?
                .at(0)
                .clone();
            let theirs = oracle_best_response(&g, &pt, i, ORACLE_CAP).map_err(|e| e.to_string())?;
            check(ours == theirs, || {
                format!("seed {seed} agent {}: {ours} vs oracle {theirs}", i + 1)
            })?;
            n += 1;
        }
        let verdict = verify_nash(&g, &pt, &opts()).map_err(|e| e.to_string())?;
        let oracle = oracle_nash(&g, &pt, ORACLE_CAP).map_err(|e| e.to_string())?;
        match (&verdict, &oracle) {
            (Verdict::Nash, None) => {}
            (Verdict::NotNash(w), Some((i, p, q))) => {
                check(w.agent == *i && w.payoff == *p && w.best == *q, || {
                    format!("seed {seed}: witness {w:?} vs oracle {:?}", (i, p, q))
                })?;
                refuted += 1;
            }
            _ => {
                return Err(format!(
                    "seed {seed}: verdict {verdict:?} vs oracle {oracle:?}"
                ))
            }
        }
    }
    Ok(format!(
        "{n} best responses equal, 100 verdicts agree ({refuted} refuted)"
    ))
}

fn c3_spe() -> Outcome {
    let limits = Limits {
        max_horizon: 4,
        ..Limits::default()
    };
    let mut refuted = 0;
    for (seed, g, pt) in random(50, &limits) {
        let ours = verify_spe(&g, &pt, &opts()).map_err(|e| e.to_string())?;
        let theirs = oracle_spe(&g, &pt, ORACLE_CAP).map_err(|e| e.to_string())?;
        check(ours.holds() == theirs.is_none(), || {
            format!("seed {seed}: verdict {ours:?} vs oracle {theirs:?}")
        })?;
        if !ours.holds() {
            refuted += 1;
        }
    }
    Ok(format!("50 instances agree ({refuted} not SPE)"))
}

fn c4_spe_implies_ne() -> Outcome {
    let mut checked = Vec::new();
    for f in fixtures() {
        checked.push((f.name, f.game, f.profile));
    }
    for (seed, g, pt) in random(200, &Limits::default()) {
        checked.push((format!("seed {seed}"), g, pt));
    }
    let mut spe = 0;
    for (name, g, pt) in &checked {
        let s = verify_spe(g, pt, &opts()).map_err(|e| e.to_string())?;
        let n = verify_nash(g, pt, &opts()).map_err(|e| e.to_string())?;
        check(!(s.holds() && !n.holds()), || {
            format!("{name}: SPE but {n:?}")
        })?;
        spe += s.holds() as usize;
    }
    Ok(format!(
        "{} instances, {spe} SPE, none without NE",
        checked.len()
    ))
}

fn c5_synthesis() -> Outcome {
    let (mut made, mut refused) = (0, 0);
    for (seed, g, _) in random(60, &Limits::default()) {
        let pt = match synthesize_spe(&g, CAP) {
            Ok(pt) => pt,
            Err(eqcheck::Error::SynthesisRefused(_)) => {
                refused += 1;
                continue;
            }
            Err(e) => return Err(format!("seed {seed}: {e}")),
        };
        let s = verify_spe(&g, &pt, &opts()).map_err(|e| e.to_string())?;
        let n = verify_nash(&g, &pt, &opts()).map_err(|e| e.to_string())?;
        check(s == Verdict::Spe && n == Verdict::Nash, || {
            format!("seed {seed}: {s:?}, {n:?}")
        })?;
        made += 1;
    }
    check(made >= 20, || format!("only {made} profiles synthesized"))?;
    Ok(format!(
        "{made} synthesized profiles are SPE and NE ({refused} refused)"
    ))
}

fn c6_reduction() -> Outcome {
    let f = 8u32;
    // The fixed branch must beat the sampled-branch bound 1 − (1/2)^(F−1).
    let alpha = Rat::one() - Rat::new(1.into(), BigUint::from(4u32).pow(f - 2).into());
    let beta_bound = Rat::one() - Rat::new(1.into(), BigUint::from(2u32).pow(f - 1).into());
    check(alpha > beta_bound, || {
        "override breaks the payoff inequality".into()
    })?;
    let mut lines = Vec::new();
    for (name, src, n) in machines() {
        let m = parse_atm(src).map_err(|e| e.to_string())?;
        let accepts = atm_accepts(&m, n, CAP).map_err(|e| e.to_string())?;
        let mut c = compile(&m, n).map_err(|e| e.to_string())?;
        c.game.horizon = BigUint::from(f);
        let last = n;
        let p = oracle_payoff(&c.game, &c.profile, last, ORACLE_CAP).map_err(|e| e.to_string())?;
        check(p == alpha, || {
            format!("{name}: fixed-branch payoff {p}, expected {alpha}")
        })?;
        let best = oracle_best_response(&c.game, &c.profile, last, ORACLE_CAP)
            .map_err(|e| e.to_string())?;
        let v = verify_nash(&c.game, &c.profile, &opts()).map_err(|e| e.to_string())?;
        let expected_ne = !accepts;
        check(v.holds() == expected_ne, || {
            format!("{name}: accepts={accepts} but {v:?}")
        })?;
        if accepts {
            let Verdict::NotNash(w) = &v else {
                unreachable!()
            };
            check(w.agent == last && w.best.is_one() && best.is_one(), || {
                format!("{name}: best response {} / oracle {best}", w.best)
            })?;
        } else {
            check(best == alpha, || {
                format!("{name}: oracle best {best}, expected the fixed branch")
            })?;
        }
        let ne = if v.holds() { "NE_YES" } else { "NE_NO" };
        lines.push(format!("{name}:{ne}"));
    }
    // The untruncated horizon is still explorable for these machines.
    for (name, src, n) in machines() {
        let m = parse_atm(src).map_err(|e| e.to_string())?;
        let c = compile(&m, n).map_err(|e| e.to_string())?;
        let v = verify_nash(&c.game, &c.profile, &opts()).map_err(|e| e.to_string())?;
        let accepts = atm_accepts(&m, n, CAP).map_err(|e| e.to_string())?;
        check(v.holds() != accepts, || {
            format!("{name} at F={}: {v:?}", c.game.horizon)
        })?;
    }
    Ok(format!("F=8 {} (also at full F)", lines.join(" ")))
}

fn c7_bit_bound() -> Outcome {
    let mut all: Vec<(String, GameSystem, ProductTransducer)> = fixtures()
        .into_iter()
        .map(|f| (f.name, f.game, f.profile))
        .collect();
    for (seed, g, pt) in random(50, &Limits::default()) {
        all.push((format!("seed {seed}"), g, pt));
    }
    let mut count = 0usize;
    for (name, g, pt) in &all {
        let bound = bit_bound(g, pt);
        let chain = explore_chain(g, pt, CAP).map_err(|e| e.to_string())?;
        for i in 0..g.num_agents() {
            let dev = explore_deviation(g, pt, i, CAP).map_err(|e| e.to_string())?;
            let mut vals: Vec<Rat> = Vec::new();
            vals.extend(
                hitting_probabilities(g, pt, i, &chain)
                    .map_err(|e| e.to_string())?
                    .values()
                    .iter()
                    .cloned(),
            );
            vals.extend(
                hitting_probabilities(g, pt, i, &dev)
                    .map_err(|e| e.to_string())?
                    .values()
                    .iter()
                    .cloned(),
            );
            vals.extend(
                best_response_values(g, pt, i, &dev)
                    .map_err(|e| e.to_string())?
                    .values()
                    .iter()
                    .cloned(),
            );
            for r in &vals {
                let e =
                    denominator_exponent(r).ok_or_else(|| format!("{name}: {r} is not dyadic"))?;
                check(BigUint::from(e) <= bound, || {
                    format!("{name}: exponent {e} > {bound}")
                })?;
            }
            count += vals.len();
        }
    }
    Ok(format!(
        "{count} values within the bound on {} instances",
        all.len()
    ))
}

fn c8_normalization() -> Outcome {
    let mut all: Vec<(String, GameSystem, ProductTransducer)> = fixtures()
        .into_iter()
        .map(|f| (f.name, f.game, f.profile))
        .collect();
    for (seed, g, pt) in random(50, &Limits::default()) {
        all.push((format!("seed {seed}"), g, pt));
    }
    let (mut rows, mut mdp) = (0usize, 0usize);
    for (name, g, pt) in &all {
        for i in 0..g.num_agents() {
            let frag = explore_deviation(g, pt, i, CAP).map_err(|e| e.to_string())?;
            for c in frag.states() {
                if c.is_terminal(g) {
                    continue;
                }
                let row = chain_row(g, pt, c).map_err(|e| e.to_string())?;
                let sum: Rat = row.iter().map(|(_, p)| p).sum();
                check(sum.is_one(), || format!("{name}: chain row sums to {sum}"))?;
                rows += 1;
                for choice in mdp_actions(g, pt, c, i).map_err(|e| e.to_string())? {
                    let sum: Rat = choice.row.iter().map(|(_, p)| p).sum();
                    check(sum.is_one(), || format!("{name}: MDP row sums to {sum}"))?;
                    check(choice.row.iter().all(|(_, p)| *p > Rat::zero()), || {
                        format!("{name}: zero entry")
                    })?;
                    mdp += 1;
                }
            }
        }
    }
    Ok(format!("{rows} chain rows and {mdp} MDP rows sum to 1"))
}

fn c9_determinism() -> Outcome {
    let all_opts = VerifyOptions {
        cap: CAP,
        all_witnesses: true,
        agent: None,
    };
    let mut reports = 0;
    for f in fixtures() {
        for fmt in [ReportFormat::Text, ReportFormat::Structured] {
            let run = || -> Result<String, String> {
                let mut out = String::new();
                let ne =
                    verify_nash_all(&f.game, &f.profile, &all_opts).map_err(|e| e.to_string())?;
                let spe =
                    verify_spe_all(&f.game, &f.profile, &all_opts).map_err(|e| e.to_string())?;
                out.push_str(&export_report(&f.game, &f.profile, &ne, fmt));
                out.push_str(&export_report(&f.game, &f.profile, &spe, fmt));
                Ok(out)
            };
            check(run()? == run()?, || {
                format!("{}: library reports differ", f.name)
            })?;
            reports += 1;
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_eqcheck");
    let mut cli_runs = 0;
    for (k, f) in fixtures().into_iter().enumerate() {
        let base = dir.path().join(format!("f{k}"));
        std::fs::create_dir_all(&base).map_err(|e| e.to_string())?;
        let game = base.join("game.txt");
        std::fs::write(&game, serialize_game(&f.game)).map_err(|e| e.to_string())?;
        let mut ts = Vec::new();
        for t in &f.profile.components {
            let p = base.join(format!("agent{}.txt", t.agent + 1));
            std::fs::write(&p, serialize_transducer(&f.game, t)).map_err(|e| e.to_string())?;
            ts.push(p);
        }
        for concept in ["ne", "spe"] {
            for fmt in ["text", "structured"] {
                let run = || {
                    Command::new(bin)
                        .args(["verify", concept])
                        .arg(&game)
                        .args(&ts)
                        .args(["--format", fmt, "--all-witnesses"])
                        .output()
                        .map_err(|e| e.to_string())
                };
                let (a, b) = (run()?, run()?);
                check(
                    !a.stdout.is_empty() && a.stdout == b.stdout && a.status == b.status,
                    || format!("{} {concept} {fmt}: CLI output differs", f.name),
                )?;
                cli_runs += 1;
            }
        }
    }
    Ok(format!(
        "{reports} library reports and {cli_runs} CLI runs byte-identical"
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("payoff equals oracle", c1_payoff),
        (
            "best response and NE verdict equal oracle",
            c2_best_response,
        ),
        ("SPE verdict equals subgame oracle", c3_spe),
        ("SPE implies NE", c4_spe_implies_ne),
        ("synthesized profiles are SPE", c5_synthesis),
        ("ATM reduction validity", c6_reduction),
        ("value bit-length ceiling", c7_bit_bound),
        ("normalization", c8_normalization),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail} [{secs:.1}s]", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {why} [{secs:.1}s]", k + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
