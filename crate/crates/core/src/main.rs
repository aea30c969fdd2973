fn main() -> std::process::ExitCode {
    mmprobe::cli::main_entry()
}
