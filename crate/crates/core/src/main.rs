fn main() {
    std::process::exit(sl0sr::cli::run(std::env::args_os()));
}
