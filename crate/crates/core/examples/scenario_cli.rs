//! Drive the command-line front end in-process: verify a shipped scenario.

use std::path::Path;

fn main() {
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/controller_b.scenario");
    let out = std::env::temp_dir().join("kladapt-scenario-example");
    let code = kladapt::cli::main_with_args([
        "kladapt".as_ref(),
        "verify".as_ref(),
        scenario.as_os_str(),
        "--out-dir".as_ref(),
        out.as_os_str(),
    ]);
    println!("exit code {code}");
}
