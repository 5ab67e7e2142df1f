use std::fs::File;
use std::io::{self, BufWriter};
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;

use sensel_cli::{run, Config, Report};

fn main() -> ExitCode {
    match try_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn try_main() -> anyhow::Result<()> {
    let args = Config::parse();
    let config = match &args.replay {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Config {
                out: args.out.clone(),
                format: args.format,
                ..Report::embedded_config(&text)?
            }
        }
        None => args,
    };
    let report = run(&config)?;
    match &config.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            report.write(config.format, BufWriter::new(file))
        }
        None => report.write(config.format, io::stdout().lock()),
    }
}
