fn main() {
    std::process::exit(maskboard::cli::run(std::env::args_os()));
}
