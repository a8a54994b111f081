fn main() {
    std::process::exit(svbeam::cli::run(std::env::args_os()));
}
