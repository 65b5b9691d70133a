use std::process::ExitCode;

fn main() -> ExitCode {
    rooney_lab::cli::main()
}
