fn main() {
    std::process::exit(autotune_core::cli::main_with_args(std::env::args_os()));
}
