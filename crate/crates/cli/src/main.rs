fn main() {
    std::process::exit(dipfuse_cli::run(std::env::args_os()));
}
