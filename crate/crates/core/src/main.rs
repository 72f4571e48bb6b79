fn main() {
    std::process::exit(evhin::cli::run(std::env::args_os()));
}
