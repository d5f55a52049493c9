use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use skelforge::commands;
use skelforge::{CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "skelforge", version, about = "Skeleton-guided single-view 3D reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; defaults are used for absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration field, e.g. `--set skeleton.steps=100`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate the procedural dataset.
    GenData,
    /// Train the image encoder and skeletal decoders.
    TrainSkeleton,
    /// Train the volume refinement network and write refined volumes.
    Refine,
    /// Mesh reconstruction with the graph network.
    ReconExplicit,
    /// Mesh reconstruction with the implicit field.
    ReconImplicit,
    /// Chamfer distance and IoU of the reconstructed meshes.
    Eval,
    /// Skeletons decoded from blended global codes.
    Interp,
    /// Print the effective configuration.
    Config,
}

fn run(cli: &Cli) -> CliResult<()> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = base.with_overrides(&cli.sets)?;
    match cli.command {
        Command::GenData => {
            let e = commands::gen_data(&cfg)?;
            println!("wrote {} shapes to {}", e.len(), cfg.paths.data.display());
        }
        Command::TrainSkeleton => commands::train_skeleton(&cfg)?,
        Command::Refine => commands::refine(&cfg)?,
        Command::ReconExplicit => commands::recon_explicit(&cfg)?,
        Command::ReconImplicit => commands::recon_implicit(&cfg)?,
        Command::Eval => {
            for r in commands::eval(&cfg)? {
                println!("{:<9} {:<24} cd(x1000) {:>10.4}  iou {:.4}", r.method, r.id, r.cd, r.iou);
            }
        }
        Command::Interp => {
            for p in commands::interp(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Config => {
            cfg.validate()?;
            println!("{}", cfg.to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CliError::exit_code(&e) as u8)
        }
    }
}
