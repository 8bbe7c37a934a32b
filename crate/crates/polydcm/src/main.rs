fn main() {
    std::process::exit(polydcm::cli::run());
}
