fn main() {
    std::process::exit(netmoment::cli::main_with(std::env::args_os()));
}
