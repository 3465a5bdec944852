fn main() {
    std::process::exit(nil_core::harness::cli::run(std::env::args_os()));
}
