fn main() {
    std::process::exit(scri_scatter::cli::main_with_args(std::env::args_os()));
}
