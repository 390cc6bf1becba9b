fn main() {
    std::process::exit(coolsim_cli::main_with_args(std::env::args_os()));
}
