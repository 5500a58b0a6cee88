fn main() {
    std::process::exit(rsdmd::cli::main_with(std::env::args_os()));
}
