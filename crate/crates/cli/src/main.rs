fn main() {
    std::process::exit(lobfluid_cli::run(std::env::args_os()));
}
