use clap::Parser;

fn main() {
    let cli = ssnnpu::cli::Cli::parse();
    if let Err(e) = ssnnpu::cli::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
