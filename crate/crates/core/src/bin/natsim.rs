fn main() {
    std::process::exit(natsim::cli::main());
}
