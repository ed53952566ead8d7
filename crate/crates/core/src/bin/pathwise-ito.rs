fn main() {
    std::process::exit(pathwise_ito::cli::run(std::env::args_os()));
}
