fn main() {
    std::process::exit(brox::harness::cli::cli_main(std::env::args().collect()));
}
