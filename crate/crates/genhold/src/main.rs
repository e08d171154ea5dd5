fn main() -> std::process::ExitCode {
    genhold::cli::main()
}
