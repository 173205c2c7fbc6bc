//! Locating the `minidafny` executable from other crates' tests.
//!
//! Integration tests elsewhere in the workspace need a real verifier binary
//! to spawn. Under `cargo test` the test executable sits in
//! `target/<profile>/deps`, with the bin target one directory up, so walking
//! toward `target` finds it. As a last resort the binary is built on demand,
//! which keeps single-crate test runs (`cargo test -p <other-crate>`) working
//! from a cold target directory.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

/// Absolute path to a `minidafny` binary, building it if necessary.
pub fn binary() -> PathBuf {
    static FOUND: OnceLock<PathBuf> = OnceLock::new();
    FOUND.get_or_init(find).clone()
}

fn exe_name() -> String {
    format!("minidafny{}", std::env::consts::EXE_SUFFIX)
}

fn find() -> PathBuf {
    let name = exe_name();
    if let Ok(me) = std::env::current_exe() {
        let mut dir = me.parent();
        while let Some(d) = dir {
            let candidate = d.join(&name);
            if candidate.is_file() {
                return candidate;
            }
            if d.file_name().is_some_and(|n| n == "target") {
                break;
            }
            dir = d.parent();
        }
    }

    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let cargo = option_env!("CARGO").unwrap_or("cargo");
    let _ = Command::new(cargo)
        .args(["build", "-p", "minidafny", "--quiet"])
        .current_dir(&manifest)
        .status();
    let target = std::env::var_os("CARGO_TARGET_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| manifest.join("..").join("..").join("target"));
    let debug = target.join("debug").join(&name);
    if debug.is_file() {
        return debug;
    }
    // Leave a best-guess path; callers surface a clear error if spawning fails.
    Path::new(&name).to_path_buf()
}
