//! Command-line front end: train, calibrate, replay, eval, ablate, synth.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use args::{Cli, Command};

/// Exit status and error tag for a failed run. Bad input or configuration
/// exits with 2, processing failures with 1.
fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    if let Some(e) = err.chain().find_map(|c| c.downcast_ref::<tempdens_core::Error>()) {
        let kind = e.kind();
        let input = matches!(
            kind,
            "io" | "manifest"
                | "size_mismatch"
                | "non_finite_sample"
                | "invalid_band"
                | "non_integer_samples"
                | "invalid_parameter"
                | "unknown_name"
                | "serde"
                | "shape"
        );
        return (if input { 2 } else { 1 }, kind);
    }
    if err.chain().any(|c| c.is::<std::io::Error>()) {
        return (2, "io");
    }
    (1, "internal")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, result) = match &cli.command {
        Command::Train(a) => ("train", commands::train(a)),
        Command::Calibrate(a) => ("calibrate", commands::calibrate(a)),
        Command::Replay(a) => ("replay", commands::replay(a)),
        Command::Eval(a) => ("eval", commands::eval(a)),
        Command::Ablate(a) => ("ablate", commands::ablate(a)),
        Command::Synth(a) => ("synth", commands::synth(a)),
    };
    match result {
        Ok(outputs) => {
            println!("{}", json!({"command": name, "status": "ok", "outputs": outputs}));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (code, kind) = classify(&e);
            let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
            eprintln!(
                "{}",
                json!({"command": name, "status": "error", "error": {"kind": kind, "message": e.to_string(), "chain": chain}})
            );
            ExitCode::from(code)
        }
    }
}
