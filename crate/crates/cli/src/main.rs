fn main() {
    std::process::exit(aaa_cli::run(std::env::args_os()));
}
