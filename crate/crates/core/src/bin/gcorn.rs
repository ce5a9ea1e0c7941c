fn main() {
    std::process::exit(gcorn::cli::run(std::env::args_os()));
}
