//! Library side of the `optofcs` binary: configuration, task runners and
//! output files.

pub mod config;
pub mod output;
pub mod tasks;

pub use config::{RunConfig, SweepEstimator, Task};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(optofcs::Error),
    #[error("insufficient statistics: {0}")]
    Statistics(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("unconverged results: {0}")]
    Unconverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => exit::IO,
            CliError::Config(_) => exit::CONFIG,
            CliError::Solver(_) => exit::SOLVER,
            CliError::Statistics(_) => exit::STATISTICS,
            CliError::Unconverged(_) => exit::UNCONVERGED,
        }
    }
}

pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const STATISTICS: i32 = 4;
    pub const UNCONVERGED: i32 = 5;
}

impl From<optofcs::Error> for CliError {
    fn from(e: optofcs::Error) -> Self {
        use optofcs::Error as E;
        match e {
            E::InvalidParameter { .. } | E::DimensionMismatch { .. } | E::OutOfValidity(_) => {
                CliError::Config(e.to_string())
            }
            E::InsufficientStatistics(s) => CliError::Statistics(s),
            E::Io(e) => CliError::Io(e.to_string()),
            E::Csv(e) => CliError::Io(e.to_string()),
            other => CliError::Solver(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Runs every task of `cfg` in order, writing into `cfg.out`. Convergence
/// flags raised along the way turn into [`CliError::Unconverged`] at the end
/// unless `allow_unconverged` is set; the data files are written either way.
pub fn run(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    cfg.validate()?;
    let out = output::Output::create(cfg)?;
    let mut ctx = tasks::Context::new(cfg, out);
    for task in &cfg.tasks {
        log::info!("running {}", task.name());
        ctx.run(*task)?;
    }
    let flags = ctx.flags;
    if !flags.is_empty() && !cfg.allow_unconverged {
        return Err(CliError::Unconverged(flags.join("; ")));
    }
    Ok(flags)
}
