fn main() {
    std::process::exit(lmte_cli::main_with_args(std::env::args_os()));
}
