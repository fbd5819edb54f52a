//! Compiles a C program against the generated header and the static
//! library, then runs it.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "robust_ensemble.h"

int main(void) {
    double p[4] = {0.2, 0.4, 0.6, 0.8};
    double out = -1.0;
    if (re_aggregate_uniform(p, 2, 2, &out) != RE_STATUS_OK || out != 0.5) return 1;
    if (re_aggregate_uniform(NULL, 2, 2, &out) != RE_STATUS_NULL_POINTER) return 2;
    if (re_last_error() == NULL || strstr(re_last_error(), "null") == NULL) return 3;
    ReModel *model = NULL;
    if (re_model_init(2, NULL, &model) != RE_STATUS_OK) return 4;
    double prob = 0.0;
    uint8_t label = 9;
    if (re_model_predict(model, "hello", &prob, &label) != RE_STATUS_OK) return 5;
    re_model_free(model);
    printf("%.3f %u\n", prob, (unsigned)label);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("librobust_ensemble_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0.500 0");
}
