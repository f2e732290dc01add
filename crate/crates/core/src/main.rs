fn main() {
    std::process::exit(cave::cli::main_with_args(std::env::args_os()));
}
