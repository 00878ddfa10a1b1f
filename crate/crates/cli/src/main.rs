fn main() {
    std::process::exit(lfag_cli::run(std::env::args_os()));
}
