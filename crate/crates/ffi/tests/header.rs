//! Compiles and runs a small C program against the generated header and
//! the static library. Skipped when no C compiler is available.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "mlgraph.h"

int main(void) {
    double pts[4] = {0.0, 0.01, 10.0, 10.01};
    size_t labels[4];
    if (mlg_kmeans(pts, 4, 1, 2, 5, 1, labels) != MLG_STATUS_OK) return 1;
    if (labels[0] != labels[1] || labels[0] == labels[2]) return 2;

    MlgDataset *ds = NULL;
    if (mlg_dataset_new(1, &ds) != MLG_STATUS_INVALID_ARGUMENT) return 3;
    if (strlen(mlg_last_error_message()) == 0) return 4;

    double nmi = 0.0;
    if (mlg_nmi(labels, labels, 4, &nmi) != MLG_STATUS_OK || nmi != 1.0) return 5;
    printf("%s\n", mlg_version());
    return 0;
}
"#;

fn compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok()?.status.success().then_some(cc)
}

fn static_lib() -> Option<PathBuf> {
    // target/<profile>/deps/<test binary> -> target/<profile>
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?.parent()?;
    let lib = dir.join("libmlgraph_ffi.a");
    lib.is_file().then_some(lib)
}

#[test]
fn header_compiles_and_links() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("mlgraph.h").is_file());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(&src, PROGRAM).unwrap();

    let Some(lib) = static_lib() else {
        let st = Command::new(&cc)
            .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
            .arg(&include)
            .arg(&src)
            .status()
            .unwrap();
        assert!(st.success());
        return;
    };
    let bin = dir.path().join("smoke");
    let st = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(st.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
