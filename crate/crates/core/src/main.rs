fn main() {
    std::process::exit(entroproj::cli::run(std::env::args()));
}
