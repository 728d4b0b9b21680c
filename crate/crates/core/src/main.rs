fn main() {
    std::process::exit(twolines::cli::run());
}
