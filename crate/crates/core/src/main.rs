fn main() {
    std::process::exit(tcdedup::cli::main_with_args(std::env::args_os()));
}
