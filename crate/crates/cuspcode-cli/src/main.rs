//! Batch front end: one command per process, reading a TOML run configuration and writing JSON
//! and CSV reports into the output directory.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use commands::{commands, resolve_out, Context};
use config::validate_config;
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_VALIDATION: u8 = 2;
const EXIT_COMPUTATION: u8 = 3;

#[derive(Parser)]
#[command(name = "cuspcode", version, about = "Codings, transfer operators and flow diagnostics for cusped hyperbolic groups")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// run configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory; overrides CUSPCODE_OUT and the config's `output`
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// overrides flow.seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker threads (default: available parallelism)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// build the branch system and report coding statistics
    CodeBuild,
    /// critical exponent and Perron data
    DeltaEstimate,
    /// tail partial sums of the branch series
    TailReport,
    /// search for a non-integrability certificate
    UniCheck,
    /// smallest singular value of I - M(s) over a grid
    SpectralScan,
    /// L2 decay of the normalized twisted operator
    L2Probe,
    /// correlation decay of the suspension flow
    MixEstimate,
    /// orbit growth on a radius ladder
    OrbitCount,
    /// doubling and cusp scaling of the discrete conformal measure
    MeasureDiag,
    /// check the configuration without computing anything
    Validate,
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::CodeBuild => "code-build",
            Cmd::DeltaEstimate => "delta-estimate",
            Cmd::TailReport => "tail-report",
            Cmd::UniCheck => "uni-check",
            Cmd::SpectralScan => "spectral-scan",
            Cmd::L2Probe => "l2-probe",
            Cmd::MixEstimate => "mix-estimate",
            Cmd::OrbitCount => "orbit-count",
            Cmd::MeasureDiag => "measure-diag",
            Cmd::Validate => "validate",
        }
    }
}

fn fail(code: u8, class: &str, message: &str, line: Option<usize>, out: Option<&PathBuf>) -> ExitCode {
    let body = json!({ "status": "error", "exit": code, "class": class, "message": message, "line": line });
    eprintln!("{body}");
    if let Some(dir) = out {
        if let Err(e) = output::write_json(dir, "error.json", &body) {
            log::warn!("could not write error.json: {e}");
        }
    }
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose { "info" } else { "warn" }))
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail(EXIT_VALIDATION, "invalid", "--threads must be at least 1", None, None);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    let Some(path) = cli.config.as_ref() else {
        return fail(EXIT_VALIDATION, "invalid", "--config is required", None, None);
    };
    let mut loaded = match validate_config(path) {
        Ok(l) => l,
        Err(d) => return fail(EXIT_VALIDATION, "config", &d.to_string(), d.line, None),
    };
    if let Some(s) = cli.seed {
        loaded.config.flow.seed = s;
    }
    let out = resolve_out(cli.out.as_deref(), std::env::var_os("CUSPCODE_OUT").map(PathBuf::from), loaded.config.output.as_deref());
    if let Cmd::Validate = cli.command {
        println!("{}", json!({ "status": "ok", "config": path }));
        return ExitCode::SUCCESS;
    }
    let name = cli.command.name();
    let cmd = commands().create(name, &()).expect("every subcommand is registered");
    let ctx = Context { loaded, out: out.clone() };
    let t = std::time::Instant::now();
    match cmd.run(&ctx) {
        Ok(()) => {
            log::info!("{} finished in {:.2} s", cmd.name(), t.elapsed().as_secs_f64());
            println!("{}", json!({ "status": "ok", "command": name, "out": out }));
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_COMPUTATION, e.class(), &e.to_string(), None, Some(&out)),
    }
}
