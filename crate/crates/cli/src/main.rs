fn main() {
    std::process::exit(netdiff_cli::main_with_args(std::env::args_os()));
}
