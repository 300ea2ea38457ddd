fn main() {
    std::process::exit(frerec::cli::main_with(std::env::args_os()));
}
