fn main() {
    std::process::exit(faithfulness::cli::run(std::env::args_os()));
}
