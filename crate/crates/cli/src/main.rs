fn main() {
    std::process::exit(foldkit_cli::run(std::env::args_os()));
}
