fn main() {
    std::process::exit(rfcw::cli::run(std::env::args_os()));
}
