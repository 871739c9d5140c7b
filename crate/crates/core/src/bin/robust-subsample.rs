fn main() {
    std::process::exit(robust_subsample::cli::run(std::env::args_os()));
}
