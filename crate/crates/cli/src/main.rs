use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hyfem::verify::{run_all, Status, VerifyOptions};
use hyfem_cli::{cmd_run, CliError, Config};

/// Hybrid finite elements for singularly perturbed reaction-diffusion.
#[derive(Parser)]
#[command(name = "hyfem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write errors.csv, patch files and mesh dumps.
    Run(RunArgs),
    /// Run the self-check suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// manufactured | boxload
    #[arg(long)]
    problem: Option<String>,
    /// phfem | dhfem | cg | all
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    /// exponential | polynomial
    #[arg(long)]
    bubble_variant: Option<String>,
    /// uniform | adaptive
    #[arg(long)]
    refinement: Option<String>,
    /// Bulk parameter of the marking.
    #[arg(long)]
    theta: Option<String>,
    /// Adaptive runs stop after the first level above this many dofs.
    #[arg(long)]
    max_dof: Option<String>,
    /// Number of levels (uniform) or an upper bound (adaptive).
    #[arg(long)]
    levels: Option<String>,
    /// Output directory.
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Skip patch files and mesh dumps.
    #[arg(long)]
    no_patches: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Only eps = 1; suites that need layer bubbles are skipped.
    #[arg(long)]
    eps_one_only: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, hide = true)]
    flip_coupling: bool,
}

fn config(args: &RunArgs) -> Result<Config, CliError> {
    let mut c = Config::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        c.apply_file_contents(&text)?;
    }
    let flags = [
        ("problem", &args.problem),
        ("method", &args.method),
        ("eps", &args.eps),
        ("bubble_variant", &args.bubble_variant),
        ("refinement", &args.refinement),
        ("theta", &args.theta),
        ("max_dof", &args.max_dof),
        ("levels", &args.levels),
        ("output", &args.output),
        ("seed", &args.seed),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            c.set(key, v)?;
        }
    }
    if args.no_patches {
        c.patches = false;
    }
    Ok(c)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match cli.command {
        Command::Run(args) => match config(&args).and_then(|c| cmd_run(&c, std::io::stdout())) {
            Ok(_) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::Verify(args) => {
            let opts = VerifyOptions { eps_one_only: args.eps_one_only, flip_coupling: args.flip_coupling, seed: args.seed };
            let results = run_all(&opts);
            for r in &results {
                println!("{r}");
            }
            if results.iter().any(|r| matches!(r.status, Status::Fail(_))) {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}
