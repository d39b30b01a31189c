fn main() {
    std::process::exit(simprune::cli::run(std::env::args_os()));
}
