fn main() {
    std::process::exit(rgnn_lab::cli::main());
}
