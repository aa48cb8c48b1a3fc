fn main() {
    std::process::exit(herald_mux::cli::run(std::env::args_os()));
}
