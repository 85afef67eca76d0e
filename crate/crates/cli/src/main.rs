fn main() {
    std::process::exit(octrl_cli::run(std::env::args_os()));
}
