//! Batch driver: config-driven cell solves, convergence studies and simulations.

pub mod config;
pub mod report;
pub mod run;
pub mod svg;

use std::path::PathBuf;

use clap::Parser;

pub use config::{Command, Format, KernelConfig, Overrides, RunConfig, SCHEMA_VERSION};
pub use report::ReportBundle;
pub use run::{exit_code, run, EXIT_ERROR, EXIT_FAIL, EXIT_PASS};

#[derive(Debug, Parser)]
#[command(name = "nlhomog", version, about = "Homogenization of nonlocal convolution-type operators")]
pub struct Cli {
    /// Task to run; defaults to `task.command` from the config.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed of the simulation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, replacing `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Dotted `key=value` override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Parses arguments, runs the command and writes the bundle; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let Some(path) = cli.config.as_ref() else {
        eprintln!("error: --config <path> is required");
        return EXIT_ERROR;
    };
    let overrides = Overrides { set: cli.set.clone(), seed: cli.seed, out: cli.out.clone() };
    let cfg = match RunConfig::load(path, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_ERROR;
        }
    };
    let Some(command) = cli.command.or(cfg.task.command) else {
        eprintln!("error: no command given and task.command is not set");
        return EXIT_ERROR;
    };
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_ERROR;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("warning: thread pool already initialized: {e}");
        }
    }
    let mut bundle = run(command, &cfg);
    let dir = cfg.output.dir.clone();
    if let Err(e) = bundle.write(&dir, &cfg.output.formats) {
        eprintln!("error writing bundle: {e}");
        return EXIT_ERROR;
    }
    let code = exit_code(&bundle);
    eprintln!(
        "{}: {} ({} verdicts, {} warnings) -> {}",
        command.name(),
        match code {
            EXIT_PASS => "PASS",
            EXIT_FAIL => "FAIL",
            _ => "ERROR",
        },
        bundle.verdicts.len(),
        bundle.warnings.len(),
        dir.display()
    );
    code
}
