use std::path::PathBuf;
use std::process::Command;

fn header_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header_dir().join("recourse.h")).unwrap();
    for symbol in [
        "RECOURSE_H",
        "typedef struct RecourseExplainer RecourseExplainer;",
        "RECOURSE_STATUS_NO_RECOURSE",
        "recourse_explain_row",
        "recourse_outcome_trace_json",
        "recourse_last_error",
        "max_exploit_iters",
    ] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let probe = r#"
#include "recourse.h"
int main(void) {
    RecourseConfig cfg;
    RecourseDataset *d = 0;
    RecourseStatus s = recourse_config_default(&cfg);
    s = recourse_dataset_two_moons(100, 0.1, 1, &d);
    recourse_dataset_free(d);
    return s == RECOURSE_STATUS_OK ? 0 : 1;
}
"#;
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("probe.c");
    std::fs::write(&c, probe).unwrap();
    let cpp = dir.path().join("probe.cpp");
    std::fs::write(&cpp, probe).unwrap();
    for (compiler, src) in [("cc", &c), ("c++", &cpp)] {
        let status = match Command::new(compiler)
            .arg("-fsyntax-only")
            .arg("-Wall")
            .arg("-Werror")
            .arg("-I")
            .arg(header_dir())
            .arg(src)
            .status()
        {
            Ok(s) => s,
            Err(_) => {
                eprintln!("{compiler} not found; skipping");
                continue;
            }
        };
        assert!(status.success(), "{compiler} rejected the header");
    }
}
