fn main() {
    std::process::exit(nlhomog::cli::main_with_args(std::env::args_os()));
}
