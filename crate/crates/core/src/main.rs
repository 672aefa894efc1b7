fn main() {
    std::process::exit(invsep::cli::run_from(std::env::args_os()));
}
