fn main() {
    std::process::exit(resilient_gd::cli::main_with_args(std::env::args_os()));
}
