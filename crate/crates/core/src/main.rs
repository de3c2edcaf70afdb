fn main() {
    std::process::exit(caseforge::cli::run(std::env::args_os()));
}
