fn main() {
    std::process::exit(medthink_cli::run(std::env::args_os()));
}
