use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser};
use optofcs_cli::{exit, run, CliError, RunConfig, Task};

/// Photon counting statistics of a driven optomechanical cavity.
///
/// Frequencies and rates are given in units of the mechanical frequency Ω.
/// Tasks: steady, g2, trajectories, counting, cascade-map, sweep.
///
/// Exit codes: 0 success, 1 i/o error, 2 configuration error, 3 solver
/// failure, 4 insufficient statistics, 5 unconverged results.
#[derive(Parser, Debug)]
#[command(name = "optofcs", version)]
struct Args {
    /// Flat TOML run configuration.
    config: Option<PathBuf>,
    /// Task to run, repeatable; replaces the configuration's task list.
    #[arg(short, long = "task")]
    tasks: Vec<String>,
    /// Take parameters and cutoffs from a built-in preset
    /// (fig2a, fig2d, fig5, fig6, fig7a, fig7b).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with 0 even when convergence checks flag a result.
    #[arg(long)]
    allow_unconverged: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

fn resolve(args: &Args) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path, args.preset.as_deref())?,
        None => match &args.preset {
            Some(name) => RunConfig::from_preset(name)?,
            None => RunConfig::default(),
        },
    };
    if !args.tasks.is_empty() {
        cfg.tasks = args
            .tasks
            .iter()
            .map(|t| Task::parse(t).ok_or_else(|| CliError::Config(format!("unknown task `{t}`"))))
            .collect::<Result<_, _>>()?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    cfg.allow_unconverged |= args.allow_unconverged;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let cfg = match resolve(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("optofcs: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if args.print_config {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }
    if cfg.tasks.is_empty() {
        println!("{}", Args::command().render_long_help());
        return ExitCode::SUCCESS;
    }
    if cfg.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(&cfg) {
        Ok(flags) => {
            for f in flags {
                log::warn!("accepted unconverged result: {f}");
            }
            log::info!("outputs written to {}", cfg.out.display());
            ExitCode::from(exit::OK as u8)
        }
        Err(e) => {
            eprintln!("optofcs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
