fn main() {
    std::process::exit(saqd::cli::main());
}
