use clap::Parser;

fn main() {
    let cli = cornercase::cli::Cli::parse();
    if let Err(err) = cornercase::cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
