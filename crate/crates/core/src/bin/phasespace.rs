use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phasespace::cli::{self, verify::Suite, CliError, Format, Options, Scenario};
use phasespace::weyl::NyquistCheck;

#[derive(Parser)]
#[command(name = "phasespace", version, about = "Symplectic flows, metaplectic propagators and Weyl symbols")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Scenario JSON, or {"preset": NAME}
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Bundled preset, instead of --config
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = cli::verify::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, global = true, default_value = "strict", value_parser = parse_nyquist)]
    nyquist_check: NyquistCheck,
    #[arg(long, global = true, default_value = "json", value_parser = parse_format)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Classical flow of the scenario Hamiltonian
    Flow,
    /// Metaplectic lift of the quadratic flow
    Lift,
    /// Propagate the initial state
    Propagate,
    /// Weyl symbol, operator and Wigner functions
    Symbols,
    /// Run a verification suite
    Verify {
        #[arg(default_value = "all", value_parser = parse_suite)]
        suite: Suite,
    },
    /// List bundled presets
    Presets,
}

fn parse_nyquist(s: &str) -> Result<NyquistCheck, String> {
    s.parse().map_err(|e: phasespace::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse()
}

fn scenario(args: &Args) -> Result<Scenario, CliError> {
    match (&args.config, &args.preset) {
        (Some(path), None) => cli::load_scenario(path),
        (None, Some(name)) => Scenario::preset(name),
        (None, None) => Err(CliError::config("--config or --preset is required", Some("config"))),
        (Some(_), Some(_)) => Err(CliError::config("give either --config or --preset", Some("config"))),
    }
}

fn run(args: &Args) -> Result<i32, CliError> {
    let opts = Options {
        out: args.out.clone(),
        seed: args.seed,
        nyquist: args.nyquist_check,
        format: args.format,
    };
    let summary = match &args.command {
        Command::Verify { suite } => return cli::run_verify(*suite, &opts),
        Command::Presets => {
            for (name, _) in cli::scenario::PRESETS {
                println!("{name}");
            }
            return Ok(cli::EXIT_OK);
        }
        Command::Flow => cli::run_flow(&scenario(args)?, &opts)?,
        Command::Lift => cli::run_lift(&scenario(args)?, &opts)?,
        Command::Propagate => cli::run_propagate(&scenario(args)?, &opts)?,
        Command::Symbols => cli::run_symbols(&scenario(args)?, &opts)?,
    };
    for w in summary["warnings"].as_array().into_iter().flatten() {
        eprintln!("warning: {}", w.as_str().unwrap_or_default());
    }
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    Ok(cli::EXIT_OK)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let doc = e.to_json();
            eprintln!("{doc}");
            if fs::create_dir_all(&args.out).is_ok() {
                let _ = fs::write(args.out.join("error.json"), format!("{doc}\n"));
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
