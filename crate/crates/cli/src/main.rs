fn main() {
    std::process::exit(lifeline_cli::run(std::env::args_os()));
}
