mod args;
mod commands;
mod report;

use std::process::ExitCode;

use clap::Parser;
use equiterm::Scenario64;
use serde_json::Value;
use sha2::{Digest, Sha256};

use args::{Cli, Format};
use report::{outcome, Report, ScenarioInfo, EXIT_INVALID, EXIT_USAGE};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    ExitCode::from(run(&cli) as u8)
}

fn run(cli: &Cli) -> i32 {
    let common = cli.command.common();
    let bytes = match std::fs::read(&common.scenario) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", common.scenario.display());
            return EXIT_USAGE;
        }
    };
    let info =
        ScenarioInfo { path: common.scenario.display().to_string(), sha256: format!("{:x}", Sha256::digest(&bytes)) };
    let parsed = std::str::from_utf8(&bytes)
        .map_err(|e| e.to_string())
        .and_then(|text| Scenario64::from_json(text).map_err(|e| e.to_string()));
    let out = match parsed {
        Ok(scenario) => commands::run(&cli.command, &scenario),
        Err(msg) => commands::Outcome { code: EXIT_INVALID, message: Some(msg), result: Value::Null },
    };
    if let Some(msg) = &out.message {
        eprintln!("{}: {msg}", cli.command.name());
    }
    let report = Report {
        tool: "equiterm",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        scenario: info,
        config: commands::config(&cli.command),
        outcome: outcome(out.code),
        exit_code: out.code,
        message: out.message,
        result: out.result,
    };
    let text = match common.format {
        Format::Json => report.json(),
        Format::Text => report.text(),
    };
    match &common.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_USAGE;
            }
        }
        None => print!("{text}"),
    }
    out.code
}
