fn main() {
    std::process::exit(netmod::cli::run(std::env::args_os()));
}
