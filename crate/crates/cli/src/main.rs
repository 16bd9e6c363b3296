fn main() {
    std::process::exit(velsched_cli::run(std::env::args_os()));
}
