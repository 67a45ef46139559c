fn main() {
    std::process::exit(tabsem::cli::run(std::env::args().collect()));
}
