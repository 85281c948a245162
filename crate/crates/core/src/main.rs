fn main() {
    std::process::exit(stresskit::cli::main());
}
