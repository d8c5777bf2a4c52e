fn main() {
    std::process::exit(pbsmt::cli::run(std::env::args_os()));
}
