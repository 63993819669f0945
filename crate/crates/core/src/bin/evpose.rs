fn main() {
    std::process::exit(evpose::cli::run(std::env::args_os()));
}
