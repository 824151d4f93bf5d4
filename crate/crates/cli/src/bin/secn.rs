fn main() {
    std::process::exit(secn_cli::run_main(std::env::args_os()));
}
