fn main() {
    std::process::exit(ccts::cli::run(std::env::args_os()));
}
