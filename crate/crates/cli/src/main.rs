fn main() {
    std::process::exit(cjrio_cli::run(std::env::args()));
}
