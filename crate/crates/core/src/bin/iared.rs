fn main() -> std::process::ExitCode {
    iared::harness::cli::main()
}
