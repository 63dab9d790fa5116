use std::process::Command;

fn main() {
    let describe = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unreleased".to_string());
    println!("cargo:rustc-env=PARHOM_GIT_DESCRIBE={describe}");
    println!("cargo:rerun-if-changed=build.rs");
}
