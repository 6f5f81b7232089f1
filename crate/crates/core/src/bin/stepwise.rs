fn main() {
    std::process::exit(stepwise_je::cli::main_with_args(std::env::args_os()));
}
