fn main() -> std::process::ExitCode {
    vmarker::cli::main()
}
