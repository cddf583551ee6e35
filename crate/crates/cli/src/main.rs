fn main() {
    std::process::exit(perspcam_cli::run(std::env::args_os()));
}
