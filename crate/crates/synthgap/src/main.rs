fn main() {
    std::process::exit(synthgap::cli::main());
}
