use clap::Parser;

fn main() {
    extrudesim_cli::init_logging();
    let cli = extrudesim_cli::Cli::parse();
    std::process::exit(extrudesim_cli::execute(cli).code());
}
