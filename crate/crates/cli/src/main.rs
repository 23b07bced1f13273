use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use jsam::flsim::MechanismKind;
use jsam::mechanism::ObjectiveForm;
use jsam_cli::commands;
use jsam_cli::{run_audit, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "jsam", version, about = "Joint client selection and privacy compensation for DP federated learning")]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment configuration; defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed for every derived random stream
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file; stdout when omitted
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Comma-separated mechanisms, e.g. jsam,usbm,fsbm-10,bbm,jsam-ci
    #[arg(long, global = true, value_delimiter = ',')]
    mechanism: Option<Vec<MechanismKind>>,

    /// exact_l1 or paper_literal
    #[arg(long = "objective-form", global = true)]
    objective_form: Option<ObjectiveForm>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Solve for the selection plan, budgets and payments (JSON)
    Solve,
    /// Train every (mechanism, seed) pair and emit per-round rows (CSV)
    Simulate,
    /// Run oracle, payment and accounting checks; nonzero exit on failure
    Audit,
    /// Summarise plans (and optionally accuracy) along an eta or budget grid (CSV)
    Sweep,
}

fn load(args: &Args) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(m) = &args.mechanism {
        cfg.mechanisms = m.clone();
    }
    if let Some(form) = args.objective_form {
        cfg.server.objective_form = form;
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(cfg: &ExperimentConfig, text: &str) -> Result<()> {
    match &cfg.output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> Result<ExitCode> {
    let args = Args::parse();
    let cfg = load(&args)?;
    match args.command {
        Command::Solve => emit(&cfg, &commands::solve_json(&cfg)?)?,
        Command::Simulate => {
            let records = commands::simulate(&cfg)?;
            emit(&cfg, &commands::runs_csv(&records))?;
            eprint!("{}", commands::runs_summary(&records));
            for r in records.iter().filter(|r| r.diverged) {
                eprintln!("warning: run {} diverged", r.label.run_id);
            }
        }
        Command::Audit => {
            let report = run_audit(&cfg)?;
            emit(&cfg, &format!("{report}\n"))?;
            if !report.passed() {
                for c in report.failures() {
                    eprintln!("audit failure: {} ({})", c.name, c.detail);
                }
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Sweep => emit(&cfg, &commands::sweep_csv(&commands::sweep(&cfg)?))?,
    }
    Ok(ExitCode::SUCCESS)
}
