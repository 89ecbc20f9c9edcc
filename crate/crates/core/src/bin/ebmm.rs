fn main() {
    std::process::exit(ebmm::commands::main_with_args(std::env::args_os()));
}
