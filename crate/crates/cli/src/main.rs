use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bidreserve::bilevel::brute_force_bilevel;
use bidreserve::error::{Error, Result};
use bidreserve::model::Scenario;
use bidreserve::runner::{
    run_cases, run_suite, summary_table, CaseSpec, RunManifest, SolverOverrides,
};

/// Multi-period market clearing with strategic bidding and reserve analytics.
#[derive(Parser)]
#[command(name = "bidreserve", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run truthful and strategic cases and write reports and figures.
    Simulate(SimulateArgs),
    /// Check a scenario file and list every violated constraint.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Exhaustive grid search over the strategic company's bids (small horizons only).
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        grid_step: f64,
        /// Strategic company; defaults to the scenario's own designation.
        #[arg(long)]
        company: Option<String>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Run manifest (JSON).
    #[arg(long, conflicts_with_all = ["scenario", "case", "out"])]
    manifest: Option<PathBuf>,
    /// Scenario file (JSON); requires --case and --out.
    #[arg(long, requires_all = ["case", "out"])]
    scenario: Option<PathBuf>,
    /// `pcm` or `icm:<company>`; may be repeated.
    #[arg(long, value_parser = parse_case)]
    case: Vec<CaseSpec>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the strategic search restarts.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of market clearings the strategic search may spend.
    #[arg(long)]
    eval_budget: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
}

fn parse_case(s: &str) -> std::result::Result<CaseSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let overrides = SolverOverrides {
        restarts: a.restarts,
        seed: a.seed,
        eval_budget: a.eval_budget,
        grid_step: None,
    };
    let outcome = match (a.manifest, a.scenario, a.out) {
        (Some(path), _, _) => {
            let mut m = RunManifest::load(&path)?;
            let o = &mut m.solver;
            o.restarts = overrides.restarts.or(o.restarts);
            o.seed = overrides.seed.or(o.seed);
            o.eval_budget = overrides.eval_budget.or(o.eval_budget);
            run_suite(&m)?
        }
        (None, Some(scenario), Some(out)) => {
            let m = RunManifest {
                scenario: scenario.clone(),
                cases: a.case,
                output_dir: out.clone(),
                solver: overrides,
            };
            m.validate()?;
            let mut s = Scenario::load(&scenario)?;
            m.solver.apply(&mut s.solver);
            run_cases(&s, &m.cases, &out, &scenario.display().to_string())?
        }
        _ => {
            return Err(Error::Parse(
                "simulate needs --manifest, or --scenario with --case and --out".into(),
            ))
        }
    };
    print!("{}", summary_table(&outcome.summaries()));
    println!("results written to {}", outcome.output_dir.display());
    Ok(())
}

fn validate(path: PathBuf) -> Result<()> {
    let s = Scenario::load(&path)?;
    s.validate()?;
    println!(
        "{}: ok ({} periods, {} companies)",
        path.display(),
        s.horizon,
        s.companies.len()
    );
    Ok(())
}

fn oracle(path: PathBuf, grid_step: f64, company: Option<String>) -> Result<()> {
    let mut s = Scenario::load(&path)?;
    if let Some(id) = company {
        if s.company(&id).is_none() {
            return Err(Error::UnknownCompany(id));
        }
        s.strategic_company = Some(id);
    }
    let sol = brute_force_bilevel(&s, grid_step)?;
    let out = serde_json::json!({
        "strategic_company": s.strategic_company,
        "grid_step": grid_step,
        "evaluations": sol.stats.evaluations,
        "bids": sol.bids,
        "strategic_profit": sol.strategic_profit,
        "prices": sol.dispatch.prices,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&out).expect("json value serializes")
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Validate { scenario } => validate(scenario),
        Command::Oracle {
            scenario,
            grid_step,
            company,
        } => oracle(scenario, grid_step, company),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                Error::Validation(v) => {
                    eprintln!("error: invalid input");
                    for item in v {
                        eprintln!("  {item}");
                    }
                }
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
