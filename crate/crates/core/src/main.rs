fn main() {
    std::process::exit(cnntree::cli::main());
}
