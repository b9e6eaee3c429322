fn main() -> std::process::ExitCode {
    xcheck_cli::main_entry()
}
