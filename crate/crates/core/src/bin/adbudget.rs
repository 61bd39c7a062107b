fn main() -> std::process::ExitCode {
    adbudget::cli::main_with_args(std::env::args_os())
}
