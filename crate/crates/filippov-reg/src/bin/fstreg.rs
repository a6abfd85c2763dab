fn main() {
    std::process::exit(filippov_reg::cli::run(std::env::args_os()));
}
