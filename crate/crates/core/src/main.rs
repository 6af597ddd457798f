fn main() {
    std::process::exit(optsave::cli::run(std::env::args_os()));
}
