fn main() {
    std::process::exit(tsallis_merton::cli::main_with_args(std::env::args_os()));
}
