fn main() { std::process::exit(cfm::cli::run(std::env::args().skip(1))); }
