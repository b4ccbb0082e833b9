fn main() -> std::process::ExitCode {
    spoofguard::cli::run()
}
