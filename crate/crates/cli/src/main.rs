mod args;
mod exec;
mod presets;

use clap::Parser;

fn main() {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 2 on usage errors, 0 on --help/--version
        Err(e) => e.exit(),
    };
    match exec::run(cli) {
        Ok(()) => {}
        Err(exec::AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(exec::AppError::Failure(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}
