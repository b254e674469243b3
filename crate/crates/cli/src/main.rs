fn main() {
    std::process::exit(rqnls_cli::run(std::env::args_os()));
}
