fn main() -> std::process::ExitCode {
    marlbench::cli::main_with_args(std::env::args_os())
}
