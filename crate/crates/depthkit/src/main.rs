use clap::Parser;

fn main() -> std::process::ExitCode {
    let cli = depthkit::cli::Cli::parse();
    match depthkit::cli::run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}
