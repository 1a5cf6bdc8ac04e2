fn main() {
    std::process::exit(lshawkes_harness::cli::run(std::env::args_os()));
}
