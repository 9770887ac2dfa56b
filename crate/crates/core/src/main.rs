fn main() -> std::process::ExitCode {
    lambtouch::cli::main_entry()
}
