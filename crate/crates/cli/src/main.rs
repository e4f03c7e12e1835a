//! `lvdes`: run a scenario end to end and write its artifacts.
//!
//! Exit codes: 0 converged or complete, 1 error, 2 usage, 3 time or
//! iteration limit reached, 4 no feasible solution.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser};
use lvdes::error::Error;
use lvdes::mopf::audit_solution;
use lvdes::orchestrator::{brute_force_reference, run_with, RunStatus};
use lvdes::milp::HighsBackend;
use lvdes::report::{describe_audit, read_schedule, render_breakdown, write_artifacts, ResultDocument};
use lvdes::scenario::{parse_scenario, Scenario};
use lvdes::settings::Variant;

const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_LIMIT: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "lvdes", version, about = "Design distributed energy systems on unbalanced low-voltage networks")]
struct Args {
    /// Scenario manifest (TOML).
    manifest: PathBuf,

    /// Algorithm: pa, pa-h or milp-only.
    #[arg(long, value_name = "NAME")]
    algorithm: Option<Variant>,

    /// Wall-clock limit in seconds.
    #[arg(long, value_name = "SECONDS")]
    time_limit: Option<f64>,

    /// Maximum number of MILP/NLP iterations.
    #[arg(long, value_name = "N")]
    max_iters: Option<usize>,

    /// First complementarity bound, pu^2.
    #[arg(long, value_name = "EPS")]
    eps_initial: Option<f64>,

    /// Complementarity bound that counts as met, pu^2.
    #[arg(long, value_name = "EPS")]
    eps_min: Option<f64>,

    /// Directory for the artifacts.
    #[arg(long, short, env = "LVDES_OUTPUT_DIR", default_value = "lvdes-out")]
    output: PathBuf,

    /// Audit a schedule written by an earlier run instead of optimising.
    #[arg(long, value_name = "SCHEDULE_JSON", conflicts_with = "brute_force")]
    audit_only: Option<PathBuf>,

    /// Evaluate every design combination (small cases only).
    #[arg(long)]
    brute_force: bool,

    /// More log output; repeat for more.
    #[arg(long, short, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(format!("lvdes={level}"))).init();

    if !args.manifest.is_file() {
        let _ = Args::command()
            .error(clap::error::ErrorKind::ValueValidation, format!("manifest `{}` does not exist", args.manifest.display()))
            .print();
        return ExitCode::from(EXIT_USAGE);
    }
    match execute(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Invalid(_) => EXIT_USAGE,
                _ => EXIT_ERROR,
            })
        }
    }
}

fn load(args: &Args) -> Result<Scenario, Error> {
    let mut s = parse_scenario(&args.manifest)?;
    let set = &mut s.settings;
    if let Some(v) = args.algorithm {
        set.variant = v;
    }
    if let Some(t) = args.time_limit {
        set.time_limit_s = t;
    }
    if let Some(n) = args.max_iters {
        set.max_iterations = n;
    }
    if let Some(e) = args.eps_initial {
        set.epsilon.initial = e;
    }
    if let Some(e) = args.eps_min {
        set.epsilon.min = e;
    }
    set.validate()?;
    Ok(s)
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn execute(args: &Args) -> Result<u8, Error> {
    let s = load(args)?;
    create_dir(&args.output)?;

    if let Some(path) = &args.audit_only {
        let schedule = read_schedule(path)?;
        let audit = audit_solution(&s, &schedule)?;
        let out = args.output.join("violations.csv");
        audit.report.write_csv(fs::File::create(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?)?;
        println!("{}", describe_audit(&audit.report));
        println!("violations written to {}", out.display());
        return Ok(0);
    }

    if args.brute_force {
        let bf = brute_force_reference(&s)?;
        let rows: Vec<_> = bf
            .evaluated
            .iter()
            .map(|(d, ub)| serde_json::json!({ "design": d.describe(&s), "ub": ub }))
            .collect();
        let doc = serde_json::json!({
            "scenario": s.name,
            "combinations": bf.combinations,
            "best_objective": bf.best.as_ref().map(|b| b.objective),
            "best_design": bf.best.as_ref().map(|b| b.design.describe(&s)),
            "evaluated": rows,
        });
        let out = args.output.join("brute_force.json");
        write_file(&out, &serde_json::to_string_pretty(&doc).expect("json"))?;
        return Ok(match &bf.best {
            Some(b) => {
                println!("best of {} combinations: {:.2}", bf.combinations, b.objective);
                0
            }
            None => {
                println!("no design of {} combinations met complementarity", bf.combinations);
                EXIT_INFEASIBLE
            }
        });
    }

    // Stream the run log as it happens.
    let log_path = args.output.join("run.log.jsonl");
    let mut log_file = fs::File::create(&log_path).map_err(|e| Error::Io { path: log_path.clone(), source: e })?;
    let outcome = run_with(&s, &HighsBackend, &mut |rec| {
        if let Ok(line) = serde_json::to_string(rec) {
            let _ = writeln!(log_file, "{line}");
        }
    })?;
    let paths = write_artifacts(&args.output, &s, &outcome)?;
    let doc = ResultDocument::new(&s, &outcome);

    println!("scenario {} ({}): {}", s.name, doc.variant, doc.status);
    println!("iterations {}, NLP solves {}, {:.1} s", doc.iterations, doc.nlp_solves, doc.elapsed_s);
    match (&outcome.best, &outcome.breakdown) {
        (Some(best), Some(b)) => {
            println!("objective {:.2} (iteration {})", best.objective, best.iteration);
            for line in &doc.design_summary {
                println!("  {line}");
            }
            print!("{}", render_breakdown(b)?);
        }
        _ => println!("no solution"),
    }
    if let Some(a) = &outcome.audit {
        println!("audit: {}", describe_audit(a));
    }
    println!("artifacts in {}", paths.result.parent().unwrap_or(Path::new(".")).display());

    Ok(match doc.status {
        _ if outcome.best.is_none() => match doc.status {
            RunStatus::TimeLimit | RunStatus::MaxIterations => EXIT_LIMIT,
            RunStatus::SolverFailure => EXIT_ERROR,
            _ => EXIT_INFEASIBLE,
        },
        RunStatus::TimeLimit | RunStatus::MaxIterations => EXIT_LIMIT,
        RunStatus::SolverFailure => EXIT_ERROR,
        _ => 0,
    })
}
