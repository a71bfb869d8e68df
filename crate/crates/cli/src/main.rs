use std::process::ExitCode;

use clap::Parser;
use firmnet_cli::service::{self, ServiceConfig};
use firmnet_cli::{listen_address, run_batch, Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Serve(args) => {
            let listen = listen_address(args.listen.as_deref());
            let cfg = ServiceConfig { workers: args.threads, result_cap: args.result_cap };
            let rt = match tokio::runtime::Runtime::new() {
                Ok(rt) => rt,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            if let Err(e) = rt.block_on(service::serve(&listen, cfg)) {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        cmd => match run_batch(cmd) {
            Ok(files) => {
                for f in files {
                    eprintln!("wrote {}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
