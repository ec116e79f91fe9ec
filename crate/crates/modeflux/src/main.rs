fn main() {
    std::process::exit(modeflux::cli::main_with_args(std::env::args_os()));
}
