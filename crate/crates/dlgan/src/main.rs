fn main() {
    std::process::exit(dlgan::cli::run(std::env::args_os()));
}
