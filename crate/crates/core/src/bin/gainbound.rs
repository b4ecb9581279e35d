fn main() {
    std::process::exit(gainbound::cli::run(std::env::args_os()));
}
