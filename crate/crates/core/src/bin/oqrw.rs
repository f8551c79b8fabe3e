fn main() { std::process::exit(oqrw::cli::main_with_args(std::env::args_os())) }
