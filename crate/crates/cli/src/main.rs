fn main() {
    std::process::exit(rhotrace_cli::run(std::env::args_os()));
}
