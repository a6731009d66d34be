use carnot_ma::cli::{run, Command, RunConfig, EXIT_USAGE};
use clap::{Parser, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Log verbosity, e.g. `CARNOT_MA_LOG=debug`.
const LOG_ENV: &str = "CARNOT_MA_LOG";

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CommandArg {
    Solve,
    Certify,
    Compare,
    Sweep,
    ValidateFrame,
}

#[derive(Parser, Debug)]
#[command(name = "carnot-ma", version, about = "Subelliptic Monge-Ampere solver and certifier on Carnot groups")]
struct Args {
    #[arg(value_enum)]
    command: CommandArg,
    /// Spec file or builtin:<name>; validate-frame also takes frame files and frame:<name>.
    #[arg(long)]
    spec: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Seed recorded in every report; overrides the spec seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Spec override as a dotted key, e.g. --set hamiltonian.k=2.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_key_value)]
    overrides: Vec<(String, String)>,
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    if k.trim().is_empty() {
        return Err(format!("empty key in {s:?}"));
    }
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let command = match args.command {
        CommandArg::Solve => Command::Solve,
        CommandArg::Certify => Command::Certify,
        CommandArg::Compare => Command::Compare,
        CommandArg::Sweep => Command::Sweep,
        CommandArg::ValidateFrame => Command::ValidateFrame,
    };
    let outcome = run(&RunConfig {
        command,
        spec: args.spec,
        output_dir: args.out,
        seed: args.seed,
        overrides: args.overrides,
    });
    if outcome.exit_code == 0 {
        println!("{}", outcome.summary);
    } else {
        eprintln!("{}", outcome.summary);
    }
    ExitCode::from(outcome.exit_code as u8)
}
