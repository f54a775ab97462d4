use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use num_traits::Num;

use eqcheck::atm::{atm_accepts, compile, parse_atm};
use eqcheck::error::{Error, Result};
use eqcheck::format::{parse_game, parse_transducer, serialize_game, serialize_transducer};
use eqcheck::gen::{gen_random_instance, Limits};
use eqcheck::model::{fmt_rat, validate_game, GameSystem};
use eqcheck::oracle::{oracle_best_response, oracle_payoff, synthesize_spe};
use eqcheck::product::{explore_chain, explore_histories, DEFAULT_CAP};
use eqcheck::simulate::simulate;
use eqcheck::strategy::ProductTransducer;
use eqcheck::values::{bit_bound, dump_values, hitting_probabilities};
use eqcheck::verify::{
    export_report, verify_nash_all, verify_spe_all, ReportFormat, VerifyOptions,
};

#[derive(Parser)]
#[command(
    name = "eqcheck",
    version,
    about = "Exact equilibrium checking for finite-horizon concurrent stochastic games"
)]
struct Cli {
    /// Maximum number of time-indexed states to explore before refusing.
    #[arg(long, global = true, default_value_t = DEFAULT_CAP as u64, value_parser = clap::value_parser!(u64).range(1..))]
    cap: u64,
    /// Seed for `gen` and `simulate`.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Restrict to one agent (1-based).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    agent: Option<u64>,
    /// Replace the game's horizon (decimal or 0b binary).
    #[arg(long, global = true, value_parser = parse_horizon)]
    horizon_override: Option<BigUint>,
    /// Report a witness for every refuted agent instead of only the first.
    #[arg(long, global = true)]
    all_witnesses: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Clone, Copy, ValueEnum)]
enum Concept {
    Ne,
    Spe,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether a profile is a Nash or subgame perfect equilibrium.
    Verify {
        concept: Concept,
        game: PathBuf,
        #[arg(required = true)]
        transducers: Vec<PathBuf>,
    },
    /// Exact payoff of each agent under the profile.
    Payoff {
        game: PathBuf,
        #[arg(required = true)]
        transducers: Vec<PathBuf>,
        /// Print the value of every reachable chain state.
        #[arg(long)]
        dump_values: bool,
    },
    /// Compile an alternating Turing machine into a game and profile.
    CompileAtm {
        file: PathBuf,
        /// Number of tape cells.
        #[arg(short = 'n', value_parser = clap::value_parser!(u64).range(1..))]
        cells: u64,
        #[arg(short = 'o')]
        out: PathBuf,
        /// Also decide acceptance by direct simulation.
        #[arg(long)]
        check: bool,
    },
    /// Brute-force references (unstable; for testing).
    Oracle {
        #[command(subcommand)]
        what: OracleCommand,
    },
    /// Sample plays and report empirical goal frequencies.
    Simulate {
        game: PathBuf,
        #[arg(required = true)]
        transducers: Vec<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Sizes, reachable counts and the value bit bound.
    Info {
        game: PathBuf,
        #[arg(required = true)]
        transducers: Vec<PathBuf>,
    },
    /// Write a seeded random instance.
    Gen {
        #[arg(short = 'o')]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    Payoff {
        game: PathBuf,
        #[arg(required = true)]
        transducers: Vec<PathBuf>,
    },
    Bestresponse {
        game: PathBuf,
        #[arg(required = true)]
        transducers: Vec<PathBuf>,
    },
    /// Backward-induction profile; written to `-o` or printed.
    Synthesize {
        game: PathBuf,
        #[arg(short = 'o')]
        out: Option<PathBuf>,
    },
}

fn parse_horizon(s: &str) -> std::result::Result<BigUint, String> {
    let r = match s.strip_prefix("0b") {
        Some(b) => BigUint::from_str_radix(b, 2),
        None => BigUint::from_str_radix(s, 10),
    };
    r.map_err(|e| e.to_string())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse(p) => Error::Invalid(format!("{}: {p}", path.display())),
        other => other,
    })
}

fn load_game(cli: &Cli, path: &Path) -> Result<GameSystem> {
    let mut g = with_path(path, parse_game(&read(path)?))?;
    if let Some(f) = &cli.horizon_override {
        g.horizon = f.clone();
    }
    let problems = validate_game(&g);
    if !problems.is_empty() {
        let lines: Vec<String> = problems.iter().map(|p| p.to_string()).collect();
        return Err(Error::Invalid(format!(
            "{}:\n  {}",
            path.display(),
            lines.join("\n  ")
        )));
    }
    Ok(g)
}

fn load(cli: &Cli, game: &Path, ts: &[PathBuf]) -> Result<(GameSystem, ProductTransducer)> {
    let g = load_game(cli, game)?;
    let mut comps = Vec::new();
    for p in ts {
        comps.push(with_path(p, parse_transducer(&read(p)?, &g))?);
    }
    comps.sort_by_key(|t| t.agent);
    let pt = ProductTransducer::new(&g, comps)?;
    Ok((g, pt))
}

fn agents(cli: &Cli, g: &GameSystem) -> Result<Vec<usize>> {
    match cli.agent {
        Some(a) if a as usize > g.num_agents() => Err(Error::Invalid(format!("no agent {a}"))),
        Some(a) => Ok(vec![a as usize - 1]),
        None => Ok((0..g.num_agents()).collect()),
    }
}

fn value_lines(cli: &Cli, rows: &[(usize, String)], key: &str) -> String {
    rows.iter()
        .map(|(i, v)| match cli.format {
            Format::Text => format!("{} agent={} value={v}\n", key.to_uppercase(), i + 1),
            Format::Structured => format!("agent={}\n{key}={v}\n", i + 1),
        })
        .collect()
}

fn write_instance(dir: &Path, g: &GameSystem, pt: &ProductTransducer) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("game.txt"), serialize_game(g))?;
    for t in &pt.components {
        fs::write(
            dir.join(format!("agent{}.txt", t.agent + 1)),
            serialize_transducer(g, t),
        )?;
    }
    Ok(())
}

/// Exit status: 0 confirmed or done, 1 refuted, 2 refused or invalid input.
fn run(cli: &Cli) -> Result<u8> {
    let cap = cli.cap as usize;
    match &cli.command {
        Command::Verify {
            concept,
            game,
            transducers,
        } => {
            let (g, pt) = load(cli, game, transducers)?;
            let opts = VerifyOptions {
                cap,
                all_witnesses: cli.all_witnesses,
                agent: cli
                    .agent
                    .map(|a| a as usize - 1)
                    .filter(|&a| a < g.num_agents()),
            };
            agents(cli, &g)?;
            let verdicts = match concept {
                Concept::Ne => verify_nash_all(&g, &pt, &opts)?,
                Concept::Spe => verify_spe_all(&g, &pt, &opts)?,
            };
            let fmt = match cli.format {
                Format::Text => ReportFormat::Text,
                Format::Structured => ReportFormat::Structured,
            };
            print!("{}", export_report(&g, &pt, &verdicts, fmt));
            Ok(if verdicts[0].holds() {
                0
            } else if matches!(verdicts[0], eqcheck::verify::Verdict::Refused { .. }) {
                2
            } else {
                1
            })
        }
        Command::Payoff {
            game,
            transducers,
            dump_values: dump,
        } => {
            let (g, pt) = load(cli, game, transducers)?;
            let reach = explore_chain(&g, &pt, cap)?;
            let mut rows = Vec::new();
            for i in agents(cli, &g)? {
                let table = hitting_probabilities(&g, &pt, i, &reach)?;
                if *dump {
                    print!("{}", dump_values(&g, &pt, &reach, table.values()));
                }
                rows.push((i, fmt_rat(table.at(0))));
            }
            print!("{}", value_lines(cli, &rows, "payoff"));
            Ok(0)
        }
        Command::CompileAtm {
            file,
            cells,
            out,
            check,
        } => {
            let m = with_path(file, parse_atm(&read(file)?))?;
            let n = *cells as usize;
            let mut c = compile(&m, n)?;
            if let Some(f) = &cli.horizon_override {
                c.game.horizon = f.clone();
            }
            write_instance(out, &c.game, &c.profile)?;
            println!(
                "wrote {} states, {} agents, horizon {} to {}",
                c.game.num_states(),
                c.game.num_agents(),
                c.game.horizon,
                out.display()
            );
            if *check {
                println!("accepts={}", atm_accepts(&m, n, cap)?);
            }
            Ok(0)
        }
        Command::Oracle { what } => match what {
            OracleCommand::Payoff { game, transducers }
            | OracleCommand::Bestresponse { game, transducers } => {
                let (g, pt) = load(cli, game, transducers)?;
                let best = matches!(what, OracleCommand::Bestresponse { .. });
                let mut rows = Vec::new();
                for i in agents(cli, &g)? {
                    let v = if best {
                        oracle_best_response(&g, &pt, i, cap)?
                    } else {
                        oracle_payoff(&g, &pt, i, cap)?
                    };
                    rows.push((i, fmt_rat(&v)));
                }
                print!(
                    "{}",
                    value_lines(cli, &rows, if best { "best" } else { "payoff" })
                );
                Ok(0)
            }
            OracleCommand::Synthesize { game, out } => {
                let g = load_game(cli, game)?;
                let pt = synthesize_spe(&g, cap)?;
                match out {
                    Some(dir) => write_instance(dir, &g, &pt)?,
                    None => {
                        for t in &pt.components {
                            print!("{}", serialize_transducer(&g, t));
                        }
                    }
                }
                Ok(0)
            }
        },
        Command::Simulate {
            game,
            transducers,
            count,
        } => {
            let (g, pt) = load(cli, game, transducers)?;
            print!("{}", simulate(&g, &pt, cli.seed, *count)?.to_text(&g));
            Ok(0)
        }
        Command::Info { game, transducers } => {
            let (g, pt) = load(cli, game, transducers)?;
            let chain = explore_chain(&g, &pt, cap)?;
            let hist = explore_histories(&g, &pt, cap)?;
            print!(
                "states={}\nagents={}\nbound={}\nhorizon={}\nproduct_states={}\nreachable={}\nhistory_reachable={}\nbit_bound={}\n",
                g.num_states(),
                g.num_agents(),
                g.bound,
                g.horizon,
                pt.size(),
                chain.len(),
                hist.len(),
                bit_bound(&g, &pt)
            );
            Ok(0)
        }
        Command::Gen { out } => {
            let (g, pt) = gen_random_instance(cli.seed, &Limits::default());
            write_instance(out, &g, &pt)?;
            println!("wrote seed {} to {}", cli.seed, out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Error::CapExceeded { cap }) => {
            match cli.format {
                Format::Text => println!("VERDICT REFUSED cap={cap}"),
                Format::Structured => println!("verdict=REFUSED\ncap={cap}"),
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
