fn main() {
    std::process::exit(ofd::cli::run());
}
