fn main() {
    std::process::exit(semple::cli::run_cli(std::env::args_os()));
}
