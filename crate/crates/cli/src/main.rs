mod args;
mod commands;

use std::ffi::OsString;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{CommandFactory, Parser};

use args::{Cli, Command};

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID_ARGS: u8 = 2;
const EXIT_CODEC: u8 = 3;
const EXIT_TRAINING: u8 = 4;
const EXIT_CORRUPT_STREAM: u8 = 5;

fn main() -> ExitCode {
    let argv = match with_config_defaults(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(EXIT_INVALID_ARGS);
        }
    };
    let cli = Cli::try_parse_from(argv).unwrap_or_else(|e| e.exit());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build_global()
        .context("starting worker threads")?;
    match cli.command {
        Command::Encode(a) => commands::encode(&a, cli.verbose),
        Command::Decode(a) => commands::decode(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Sweep(a) => commands::sweep(&a, cli.workers),
        Command::Inspect(a) => commands::inspect(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Bench(a) => commands::bench(&a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use srvc_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidArgument(_) => EXIT_INVALID_ARGS,
                E::CodecUnavailable { .. } | E::ContentDecode(_) => EXIT_CODEC,
                E::Training(_) => EXIT_TRAINING,
                e if e.is_stream_corruption() => EXIT_CORRUPT_STREAM,
                _ => EXIT_FAILURE,
            };
        }
    }
    EXIT_FAILURE
}

/// Splices the entries of a `--config` file in front of the user's own flags, right
/// after the subcommand name. Flags given on the command line take precedence.
fn with_config_defaults(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let strings: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut config_path = None;
    for (i, arg) in strings.iter().enumerate() {
        if let Some(p) = arg.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        } else if arg == "--config" {
            config_path = strings.get(i + 1).cloned();
        }
    }
    let Some(path) = config_path else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .with_context(|| format!("reading config file {path}"))?;
    let names: Vec<String> = Cli::command()
        .get_subcommands()
        .map(|s| s.get_name().to_string())
        .collect();
    let Some(at) = strings.iter().skip(1).position(|a| names.contains(a)).map(|p| p + 2) else {
        return Ok(argv);
    };
    let injected = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (k, v) = l
                .split_once('=')
                .with_context(|| format!("config line `{l}` is not key=value"))?;
            Ok(OsString::from(format!("--{}={}", k.trim(), v.trim())))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = argv;
    out.splice(at..at, injected);
    Ok(out)
}
