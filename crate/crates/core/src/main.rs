use std::process::ExitCode;

fn main() -> ExitCode {
    eh_aloha::cli::main()
}
