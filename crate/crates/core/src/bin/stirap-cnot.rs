fn main() {
    std::process::exit(stirap_cnot::cli::run(std::env::args_os()));
}
