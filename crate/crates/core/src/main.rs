fn main() {
    std::process::exit(rbfdh::cli::run(std::env::args_os()));
}
