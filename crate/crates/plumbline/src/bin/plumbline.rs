fn main() {
    std::process::exit(plumbline::cli::run(std::env::args()));
}
