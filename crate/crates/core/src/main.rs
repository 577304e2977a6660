fn main() -> std::process::ExitCode {
    glyphfuse::cli::main()
}
