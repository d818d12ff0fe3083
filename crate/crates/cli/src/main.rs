use clap::Parser;
use rigmotion_cli::{logging, Cli};

fn main() {
    let cli = Cli::parse();
    logging::init(cli.quiet);
    let code = cli.execute(&mut std::io::stdout().lock());
    std::process::exit(code);
}
