fn main() {
    std::process::exit(csl::cli::run(std::env::args_os()));
}
