// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

fn main() -> std::process::ExitCode {
    dataclock::cli::main()
}
