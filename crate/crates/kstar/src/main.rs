use std::process::ExitCode;

use clap::Parser;
use kstar::cli::{Cli, Sub};
use kstar::{commands, CliError, Report};

fn execute(cli: &Cli) -> Result<Report, CliError> {
    let (config, output) = cli.command.resolve()?;
    match (&cli.command, config) {
        (Sub::Replay(args), _) => commands::replay(&args.manifest, &output.out, output.threads),
        (_, Some(config)) => commands::run(&config, &output.out, output.threads),
        (_, None) => unreachable!("only replay resolves without a config"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("{w}");
            }
            print!("{}", report.stdout);
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
