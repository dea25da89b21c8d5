use std::path::{Path, PathBuf};
use std::process::Command;

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn have(tool: &str) -> bool {
    Command::new(tool).arg("--version").output().is_ok_and(|o| o.status.success())
}

/// `target/<profile>` of the running test binary.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(manifest().join("include/dome.h")).unwrap();
    for name in [
        "dome_last_error",
        "dome_status_name",
        "dome_scalar_forward",
        "dome_scalar_backward",
        "dome_pdome_forward",
        "dome_pdome_backward",
        "dome_mdome_forward",
        "dome_network_load",
        "dome_network_from_bytes",
        "dome_network_free",
        "dome_network_dims",
        "dome_network_predict",
        "dome_network_output",
        "dome_network_embed",
        "typedef struct DomeNetwork DomeNetwork",
        "DOME_STATUS_BUFFER_TOO_SMALL = 7",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

#[test]
fn c_program_compiles_links_and_runs() {
    if !have("cc") {
        eprintln!("cc not found; skipping C smoke test");
        return;
    }
    let lib = profile_dir().join("libdome_ffi.a");
    if !lib.is_file() {
        eprintln!("{} not built; skipping C smoke test", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror", "-I"])
        .arg(manifest().join("include"))
        .arg(manifest().join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
