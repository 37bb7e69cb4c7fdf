fn main() {
    std::process::exit(cryodaq::cli::run());
}
