use std::path::{Path, PathBuf};
use std::process::Command;

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/natsim.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    for sym in [
        "nat_network_standard_four_site",
        "nat_network_from_json",
        "nat_network_n_sites",
        "nat_network_free",
        "nat_transmission_fock",
        "nat_transmission_moments",
        "nat_last_error_message",
        "nat_version",
        "typedef struct NatNetwork NatNetwork",
        "NAT_STATUS_OK = 0",
        "NAT_STATUS_PANIC = 6",
    ] {
        assert!(h.contains(sym), "missing {sym}");
    }
}

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "natsim.h"

int main(void) {
    NatNetwork *net = NULL;
    double t = 0.0;
    if (nat_network_standard_four_site(NAT_MODE_CONSTRUCTIVE, 0.0, 0.0, &net) != NAT_STATUS_OK) return 1;
    if (nat_transmission_moments(net, &t) != NAT_STATUS_OK) return 2;
    if (!(t > 0.0 && t < 0.1)) return 3;
    if (nat_transmission_moments(NULL, &t) != NAT_STATUS_NULL_POINTER) return 4;
    if (strlen(nat_last_error_message()) == 0) return 5;
    nat_network_free(net);
    printf("%s %.6f\n", nat_version(), t);
    return 0;
}
"#;

fn cc() -> Option<&'static str> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("check.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let inc = header().parent().unwrap().to_path_buf();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&inc)
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

/// Links the C program against the static library when cargo has produced it.
#[test]
fn c_program_links_and_runs() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libnatsim_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("run.c");
    let bin = dir.path().join("run");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new(cc)
        .args(["-std=c99", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with(natsim::VERSION), "{text}");
}
