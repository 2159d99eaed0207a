fn main() {
    std::process::exit(crossbody::cli::run(std::env::args_os()));
}
