mod args;
mod commands;
mod report;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, OutputArgs};
use commands::Failure;
use report::Rendered;

fn emit(out: &OutputArgs, r: &Rendered) -> Result<(), Failure> {
    match &out.report {
        Some(path) => std::fs::write(path, &r.json)
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?,
        None => std::io::stdout()
            .lock()
            .write_all(r.json.as_bytes())
            .map_err(|e| Failure::Runtime(e.to_string()))?,
    }
    if let Some(path) = &out.csv {
        std::fs::write(path, &r.csv)
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let (rendered, out) = match &cli.command {
        Command::Loss(a) => (commands::loss(a)?, &a.out),
        Command::Fit(a) => (commands::fit(a)?, &a.out),
        Command::Compare(a) => (commands::compare(a)?, &a.out),
        Command::Quantize(a) => (commands::quantize(a)?, &a.out),
        Command::Oks(a) => (commands::oks_cmd(a)?, &a.out),
        Command::Synth(a) => (commands::synth(a)?, &a.out),
    };
    emit(out, &rendered)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
