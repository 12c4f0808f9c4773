fn main() {
    std::process::exit(fscap::app::cli::main());
}
