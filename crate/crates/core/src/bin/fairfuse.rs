fn main() {
    std::process::exit(fairfuse::cli::main());
}
