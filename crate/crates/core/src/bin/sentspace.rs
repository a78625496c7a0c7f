fn main() -> std::process::ExitCode {
    sentspace::cli::main()
}
