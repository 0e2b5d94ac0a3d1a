use std::process::ExitCode;

use clap::Parser;

mod commands;

use commands::Cli;

const USAGE: &str = "usage: mkdpinn <preprocess|meta-train|adapt|evaluate|ablate|synth> [OPTIONS]; see mkdpinn --help";

/// Collapse a multi-line message into one line.
fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The error and its causes, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprintln!("error: no subcommand given ({USAGE})");
                return ExitCode::from(2);
            }
            let rendered = e.render().to_string();
            let body = rendered
                .split("Usage:")
                .next()
                .and_then(|b| b.split("For more information").next())
                .unwrap_or_default();
            let body = body.trim().trim_start_matches("error:").trim();
            eprintln!("error: {} ({USAGE})", one_line(body));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&describe(&e)));
            ExitCode::FAILURE
        }
    }
}
