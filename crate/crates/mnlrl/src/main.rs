//! Thin command-line front end over the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mnlrl::error::{Error, Result};
use mnlrl::hard::{
    build_finite, build_infinite, validate_instance, FiniteHardParams, HardInstanceParams,
    HardMode, InfiniteHardParams,
};
use mnlrl::harness::{run_experiment, ExperimentConfig};
use mnlrl::io::{load_instance, save_instance};
use mnlrl::oracle::{solve_average, solve_discounted};

#[derive(Parser)]
#[command(name = "mnlrl", about = "MNL-transition MDP experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded regret experiment from a JSON config file.
    Run(RunArgs),
    /// Validate an instance file and report every structural check.
    ValidateInstance(ValidateArgs),
    /// Build a hard benchmark instance and write it to a file.
    BuildHard(BuildHardArgs),
    /// Solve an instance exactly and print the optimal values.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON, mirrors ExperimentConfig).
    #[arg(long)]
    config: PathBuf,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use seeds 0..N (overrides the config seed list).
    #[arg(long)]
    seeds: Option<u64>,
    /// Comma-separated explicit seed list (overrides --seeds).
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    /// Worker threads for the seed fan-out.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Optional hard-instance parameter file (JSON HardInstanceParams) to
    /// check the structural claims against.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct BuildHardArgs {
    /// infinite | finite
    #[arg(long)]
    family: String,
    /// Core dimension d (per step for the finite family).
    #[arg(long)]
    d: usize,
    /// Diameter target (infinite family, average-reward flavor).
    #[arg(long = "D")]
    diameter: Option<f64>,
    /// Discount target (infinite family, discounted flavor).
    #[arg(long)]
    gamma: Option<f64>,
    /// Steps per episode H (finite family).
    #[arg(long = "H")]
    h: Option<usize>,
    /// Calibration horizon T (infinite family).
    #[arg(long = "T")]
    t: Option<usize>,
    /// Episode count K (finite family).
    #[arg(long = "K")]
    k: Option<usize>,
    /// Output instance path; parameters are written alongside with the
    /// extension `.params.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    /// avg | disc
    #[arg(long)]
    objective: String,
    #[arg(long)]
    gamma: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::ValidateInstance(args) => cmd_validate(args),
        Command::BuildHard(args) => cmd_build_hard(args),
        Command::Oracle(args) => cmd_oracle(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(out) = args.out {
        config.out_dir = out;
    }
    if let Some(list) = args.seed_list {
        config.seeds = list;
    } else if let Some(n) = args.seeds {
        config.seeds = (0..n).collect();
    }
    if args.workers.is_some() {
        config.workers = args.workers;
    }
    let output = run_experiment(&config)?;
    for path in &output.seed_files {
        println!("seed csv: {}", path.display());
    }
    println!("aggregate: {}", output.aggregate_file.display());
    println!("metadata: {}", output.metadata_file.display());
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let mdp = load_instance(&args.instance)?;
    println!(
        "loaded: {} states, {} actions, dim {}, U {}",
        mdp.num_states(),
        mdp.num_actions(),
        mdp.dim(),
        mdp.max_reachable()
    );
    if let Some(params_path) = args.params {
        let text = std::fs::read_to_string(&params_path)?;
        let params: HardInstanceParams = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", params_path.display())))?;
        let report = validate_instance(&mdp, &params);
        println!("{}", serde_json::to_string_pretty(&report)?);
        if !report.all_pass() {
            return Err(Error::InstanceValidation(
                "structural checks failed; see report above".into(),
            ));
        }
    }
    println!("instance valid");
    Ok(())
}

fn cmd_build_hard(args: BuildHardArgs) -> Result<()> {
    let (mdp, params) = match args.family.as_str() {
        "infinite" => {
            let mode = match (args.diameter, args.gamma) {
                (Some(d), None) => HardMode::Average { diameter: d },
                (None, Some(g)) => HardMode::Discounted { gamma: g },
                _ => {
                    return Err(Error::Config(
                        "infinite family needs exactly one of --D or --gamma".into(),
                    ))
                }
            };
            let horizon = args
                .t
                .ok_or_else(|| Error::Config("infinite family needs --T".into()))?;
            let params = InfiniteHardParams::new(args.d, mode, horizon)?;
            let mdp = build_infinite(&params)?;
            (mdp, HardInstanceParams::Infinite(params))
        }
        "finite" => {
            let h = args
                .h
                .ok_or_else(|| Error::Config("finite family needs --H".into()))?;
            let k = args
                .k
                .ok_or_else(|| Error::Config("finite family needs --K".into()))?;
            let params = FiniteHardParams::new(args.d, h, k)?;
            let mdp = build_finite(&params)?;
            (mdp, HardInstanceParams::Finite(params))
        }
        other => {
            return Err(Error::Config(format!(
                "unknown family {other:?}; expected infinite or finite"
            )))
        }
    };
    save_instance(&mdp, &args.out)?;
    let params_path = args.out.with_extension("params.json");
    std::fs::write(&params_path, serde_json::to_string_pretty(&params)?)?;
    let report = validate_instance(&mdp, &params);
    println!(
        "built {} ({} states, {} actions, dim {}); checks: {}",
        args.out.display(),
        mdp.num_states(),
        mdp.num_actions(),
        mdp.dim(),
        if report.all_pass() { "all pass" } else { "FAILURES" }
    );
    println!("params: {}", params_path.display());
    if !report.all_pass() {
        return Err(Error::InstanceValidation(
            "built instance failed its own structural checks".into(),
        ));
    }
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let mdp = load_instance(&args.instance)?;
    match args.objective.as_str() {
        "avg" => {
            let vt = solve_average(&mdp, 1e-9)?;
            println!("gain: {:.12}", vt.gain.unwrap());
            for (s, v) in vt.v.iter().enumerate() {
                println!("bias[{s}] = {v:.12}");
            }
        }
        "disc" => {
            let gamma = args
                .gamma
                .ok_or_else(|| Error::Config("disc objective needs --gamma".into()))?;
            let vt = solve_discounted(&mdp, gamma, 1e-9)?;
            for (s, v) in vt.v.iter().enumerate() {
                println!("v[{s}] = {v:.12}");
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown objective {other:?}; expected avg or disc"
            )))
        }
    }
    Ok(())
}
