fn main() {
    std::process::exit(tamed_euler_cli::main_with(std::env::args_os()));
}
