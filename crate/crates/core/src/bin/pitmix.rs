fn main() {
    std::process::exit(pitmix::cli::main_with(std::env::args_os()));
}
