fn main() {
    phiperiodic::cli::init_logging();
    std::process::exit(phiperiodic::cli::run(std::env::args_os()));
}
