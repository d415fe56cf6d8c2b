fn main() {
    std::process::exit(rbmtree::cli::run(std::env::args_os()));
}
