use clap::Parser;

fn main() {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let cli = psma_cli::Cli::parse();
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = psma_cli::execute(cli, &mut stdout) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
