fn main() {
    std::process::exit(kbr_cli::run(std::env::args_os()));
}
