fn main() {
    std::process::exit(projfl::cli::main());
}
