fn main() {
    std::process::exit(sue_cli::run(std::env::args_os()));
}
