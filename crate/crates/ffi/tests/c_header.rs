use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "pwduffing.h"

int main(void) {
    double a[2] = {1.0, 2.0};
    double alpha[3] = {1.0, 2.0, 3.0};
    PwdSystem *sys = NULL;
    if (pwd_system_new(a, 2, alpha, 3, PWD_SHAPE_LINEAR, NULL, 0, true, &sys) != PWD_STATUS_OK) return 1;
    size_t zone = 9;
    if (pwd_zone_index(sys, 1.5, &zone) != PWD_STATUS_OK || zone != 1) return 2;
    PwdMelnikovPieces p;
    if (pwd_m1_closed_form(sys, 1.5, &p) != PWD_STATUS_OK || p.total != 0.0) return 3;
    double m1 = 1.0;
    if (pwd_m1_quadrature(sys, 1.5, 1e-10, &m1) != PWD_STATUS_OK || fabs(m1) > 2e-10) return 4;
    if (pwd_zone_index(sys, NAN, &zone) != PWD_STATUS_INVALID_INPUT) return 5;
    if (pwd_last_error() == NULL) return 6;
    pwd_system_free(sys);
    printf("ok\n");
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().expect("test binary path");
    exe.parent().and_then(Path::parent).expect("profile dir").to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("pwduffing.h").exists(), "generated header missing");
    let lib = target_dir().join("libpwduffing_ffi.a");
    if !lib.exists() {
        eprintln!("static library not built at {}, skipping link check", lib.display());
        return;
    }
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = tmp.path().join("main");
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&header_dir)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status();
    let Ok(status) = status else {
        eprintln!("no C compiler ({cc}), skipping");
        return;
    };
    assert!(status.success(), "C compile/link failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
