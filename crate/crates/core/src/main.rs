fn main() {
    std::process::exit(ttg::cli::main_with_args(std::env::args_os()));
}
