use std::process::ExitCode;

use clap::Parser;

use dsilab_cli::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dsilab_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let missing = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<dsilab::Error>(), Some(dsilab::Error::MissingArtifact(_))));
            ExitCode::from(if missing { 3 } else { 1 })
        }
    }
}
