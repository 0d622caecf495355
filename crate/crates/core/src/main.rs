fn main() {
    std::process::exit(spinecomp::cli::main_with(std::env::args_os()));
}
