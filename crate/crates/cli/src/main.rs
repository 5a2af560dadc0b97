use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match pod_cli::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { pod_cli::EXIT_CONFIG } else { 0 });
        }
    };
    let code = pod_cli::run(cli, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    ExitCode::from(code)
}
