fn main() {
    std::process::exit(rgc_oct::cli::run());
}
