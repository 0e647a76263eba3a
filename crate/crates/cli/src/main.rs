fn main() {
    std::process::exit(ppress_cli::run(std::env::args_os()));
}
