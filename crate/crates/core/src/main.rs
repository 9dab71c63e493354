use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use padic_stability::campaign::{
    load_input, run_campaign, CampaignConfig, Input, EXIT_OK, EXIT_SOLVE, EXIT_USAGE,
};
use padic_stability::dsl;
use padic_stability::families::{builtin_family, family_source, FamilyRequest};
use padic_stability::field::{format_rational, parse_rational, ExactRational, PrimeContext};
use padic_stability::perturb::Mode;
use padic_stability::recurrence::{solve_exact, SolveError};
use padic_stability::stability::BorderlinePolicy;

#[derive(Parser)]
#[command(name = "padic-stability", version, about = "Exact solutions and p-adic stability campaigns for recurrences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the exact solution as JSON.
    Solve {
        /// `.rec` file (or use --family).
        input: Option<PathBuf>,
        #[arg(long)]
        family: Option<FamilyName>,
        #[command(flatten)]
        params: FamilyParams,
        #[arg(long)]
        p: Option<u64>,
    },
    /// Run perturbation trials and write trials.jsonl and summary.csv.
    Campaign(CampaignArgs),
    /// Write a built-in family as `.rec` text.
    Family {
        name: FamilyName,
        #[command(flatten)]
        params: FamilyParams,
        /// Prime used to check the round trip.
        #[arg(long, default_value_t = 2)]
        p: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CampaignArgs {
    input: Option<PathBuf>,
    #[arg(long)]
    family: Option<FamilyName>,
    #[command(flatten)]
    params: FamilyParams,
    /// Read every setting from a config.json written by an earlier campaign.
    #[arg(long, conflicts_with_all = ["input", "family"])]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<u64>,
    #[arg(long = "N", default_value_t = 10)]
    precision: u32,
    #[arg(long, default_value = "exact")]
    mode: Mode,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    depth: u32,
    #[arg(long)]
    pairwise: bool,
    #[arg(long, value_enum, default_value_t = Policy::Separate)]
    borderline: Policy,
    /// Exact star assignment (JSON) replayed as one extra trial.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Separate,
    Strict,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyName {
    Counterexample,
    Frieze,
    Somos,
    Fz54,
    Dodgson,
    PolynomialDemo,
}

#[derive(Args, Default)]
struct FamilyParams {
    /// Frieze size.
    #[arg(long)]
    n: Option<usize>,
    /// Frieze coefficients (comma list) or the fz54 / polynomial-demo c.
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    d: Option<String>,
    /// Somos order.
    #[arg(long)]
    k: Option<usize>,
    /// Somos coefficients (comma list) or the polynomial-demo a.
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    b: Option<i64>,
    /// Index of the last term.
    #[arg(long)]
    length: Option<i64>,
    #[arg(long)]
    x0: Option<String>,
    #[arg(long)]
    x1: Option<String>,
    /// Rows separated by `;`, entries by `,`.
    #[arg(long)]
    matrix: Option<String>,
}

struct Failure(i32, String);

type CliResult<T> = Result<T, Failure>;

fn usage(msg: impl ToString) -> Failure {
    Failure(EXIT_USAGE, msg.to_string())
}

fn rationals(s: &str) -> CliResult<Vec<ExactRational>> {
    s.split(',').map(|t| parse_rational(t.trim()).map_err(usage)).collect()
}

fn rational(s: &Option<String>, default: i64) -> CliResult<ExactRational> {
    match s {
        None => Ok(ExactRational::from_integer(default.into())),
        Some(s) => parse_rational(s.trim()).map_err(usage),
    }
}

fn integer(s: &Option<String>, default: i64) -> CliResult<i64> {
    match s {
        None => Ok(default),
        Some(s) => s.trim().parse().map_err(|_| usage(format!("expected an integer, got `{s}`"))),
    }
}

fn family_request(name: FamilyName, f: &FamilyParams) -> CliResult<FamilyRequest> {
    Ok(match name {
        FamilyName::Counterexample => FamilyRequest::Counterexample,
        FamilyName::Frieze => {
            let c = match (&f.c, f.n) {
                (Some(c), n) => {
                    let c = rationals(c)?;
                    if n.is_some_and(|n| n != c.len()) {
                        return Err(usage(format!("--n {} but {} coefficients", n.unwrap(), c.len())));
                    }
                    c
                }
                (None, Some(n)) => vec![ExactRational::from_integer(2.into()); n],
                (None, None) => return Err(usage("frieze needs --n or --c")),
            };
            FamilyRequest::Frieze { c }
        }
        FamilyName::Somos => {
            let k = f.k.ok_or_else(|| usage("somos needs --k"))?;
            let a = match &f.a {
                Some(a) => rationals(a)?,
                None => vec![ExactRational::from_integer(1.into()); k / 2],
            };
            FamilyRequest::Somos { k, a, last: f.length.unwrap_or(29) }
        }
        FamilyName::Fz54 => FamilyRequest::Fz54 {
            c: rational(&f.c, 1)?,
            d: rational(&f.d, 1)?,
            x0: rational(&f.x0, 1)?,
            x1: rational(&f.x1, 1)?,
            last: f.length.unwrap_or(10),
        },
        FamilyName::Dodgson => {
            let text = f.matrix.as_deref().ok_or_else(|| usage("dodgson needs --matrix"))?;
            let matrix = text
                .split(';')
                .map(|row| row.split(',').map(|e| e.trim().parse::<i64>()).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| usage(format!("--matrix: {e}")))?;
            FamilyRequest::Dodgson { matrix }
        }
        FamilyName::PolynomialDemo => FamilyRequest::PolynomialDemo {
            x0: integer(&f.x0, 1)?,
            x1: integer(&f.x1, 1)?,
            a: integer(&f.a, 1)?,
            b: f.b.unwrap_or(1),
            c: integer(&f.c, 1)?,
            last: f.length.unwrap_or(10),
        },
    })
}

fn input(path: Option<PathBuf>, family: Option<FamilyName>, params: &FamilyParams) -> CliResult<Input> {
    match (path, family) {
        (Some(path), None) => Ok(Input::File(path)),
        (None, Some(name)) => Ok(Input::Family(family_request(name, params)?)),
        (Some(_), Some(_)) => Err(usage("give either an input file or --family, not both")),
        (None, None) => Err(usage("no input: give a .rec file or --family")),
    }
}

/// The prime from --p, else from the file's `prime` statement.
fn resolve_prime(input: &Input, p: Option<u64>) -> CliResult<Option<u64>> {
    if p.is_some() {
        return Ok(p);
    }
    match input {
        Input::File(path) => {
            let text = read(path)?;
            let program = dsl::parse(&text).map_err(|e| usage(format!("{}:{e}", path.display())))?;
            Ok(program.prime)
        }
        Input::Family(_) => Ok(None),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn prime(p: u64) -> CliResult<PrimeContext> {
    PrimeContext::new(p).map_err(usage)
}

fn cmd_solve(input: Input, p: Option<u64>) -> CliResult<i32> {
    let ctx = prime(resolve_prime(&input, p)?.unwrap_or(2))?;
    let spec = load_input(&input, &ctx).map_err(usage)?;
    let g = solve_exact(&spec).map_err(|e| match e {
        SolveError::DivisionByZero(ref node) => Failure(EXIT_SOLVE, format!("division by zero at {node}")),
    })?;
    let map: Map<String, Value> = spec
        .nodes()
        .iter()
        .zip(&g.values)
        .map(|(node, v)| (node.id.to_string(), Value::String(format_rational(v))))
        .collect();
    println!("{}", serde_json::to_string_pretty(&map).expect("json"));
    Ok(EXIT_OK)
}

fn cmd_campaign(args: CampaignArgs) -> CliResult<i32> {
    let cfg = match &args.config {
        Some(path) => {
            let mut cfg = CampaignConfig::from_json(&read(path)?).map_err(usage)?;
            if let Some(out) = args.out {
                cfg.out = out;
            }
            cfg
        }
        None => {
            let input = input(args.input, args.family, &args.params)?;
            let p = resolve_prime(&input, args.p)?
                .ok_or_else(|| usage("no prime: pass --p or declare `prime P;` in the file"))?;
            CampaignConfig {
                input,
                p,
                precision: args.precision,
                mode: args.mode,
                trials: args.trials,
                seed: args.seed,
                depth: args.depth,
                pairwise: args.pairwise,
                borderline: match args.borderline {
                    Policy::Separate => BorderlinePolicy::Separate,
                    Policy::Strict => BorderlinePolicy::Strict,
                },
                replay: args.replay,
                out: args.out.unwrap_or_else(|| PathBuf::from("campaign-out")),
            }
        }
    };
    let report = run_campaign(&cfg).map_err(usage)?;
    let trials = report.outcomes.len();
    let aborts = report.outcomes.iter().filter(|o| o.abort.is_some()).count();
    eprintln!(
        "{trials} trials, {} violations, {aborts} aborted; reports in {}",
        report.violations(),
        cfg.out.display()
    );
    for row in report.summary.iter().filter(|r| r.violations > 0) {
        eprintln!("  {}: {} violations, min margin {}", row.node, row.violations, row.min_margin);
    }
    Ok(report.exit_code())
}

fn cmd_family(name: FamilyName, params: &FamilyParams, p: u64, out: Option<PathBuf>) -> CliResult<i32> {
    let req = family_request(name, params)?;
    let ctx = prime(p)?;
    let spec = builtin_family(&req, &ctx).map_err(usage)?;
    let text = family_source(&req);
    let reparsed = dsl::load(&text, &ctx).map_err(|e| usage(format!("generated source: {e}")))?;
    if reparsed.nodes() != spec.nodes() {
        return Err(usage("generated source does not elaborate to the built-in family"));
    }
    match out {
        Some(path) => fs::write(&path, text).map_err(|e| usage(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Solve { input: path, family, params, p } => input(path, family, &params).and_then(|i| cmd_solve(i, p)),
        Command::Campaign(args) => cmd_campaign(args),
        Command::Family { name, params, p, out } => cmd_family(name, &params, p, out),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
