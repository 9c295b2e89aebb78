fn main() {
    std::process::exit(taskforge_cli::run(std::env::args_os()));
}
