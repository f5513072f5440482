fn main() {
    std::process::exit(boltzinv::cli::run(std::env::args_os()));
}
