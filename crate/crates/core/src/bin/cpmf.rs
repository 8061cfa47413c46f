fn main() {
    std::process::exit(cpmf::cli::run(std::env::args_os(), std::env::vars()));
}
