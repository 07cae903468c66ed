fn main() {
    std::process::exit(jointcrf::cli::main());
}
