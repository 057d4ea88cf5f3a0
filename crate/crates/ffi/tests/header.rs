use std::path::PathBuf;
use std::process::Command;

fn header() -> (PathBuf, String) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/epra.h");
    let text = std::fs::read_to_string(&path).expect("generated header");
    (path, text)
}

#[test]
fn declares_the_public_functions() {
    let (_, h) = header();
    for f in [
        "epra_last_error_message",
        "epra_instance_from_json",
        "epra_instance_from_matrix",
        "epra_instance_generate",
        "epra_instance_dims",
        "epra_instance_to_json",
        "epra_instance_free",
        "epra_string_free",
        "epra_config_default",
        "epra_solve",
        "epra_solution_outcome",
        "epra_solution_counters",
        "epra_solution_x",
        "epra_solution_x_hat",
        "epra_solution_partition",
        "epra_solution_to_json",
        "epra_solution_free",
        "epra_verify",
        "epra_wendel_probability",
    ] {
        let declared = h
            .lines()
            .any(|l| l.contains(&format!(" {f}(")) || l.contains(&format!("*{f}(")));
        assert!(declared, "missing {f}");
    }
}

#[test]
fn handles_are_opaque_and_codes_are_fixed() {
    let (_, h) = header();
    assert!(h.contains("typedef struct EpraInstance EpraInstance;"));
    assert!(h.contains("typedef struct EpraSolution EpraSolution;"));
    assert!(h.contains("EPRA_CODE_OK = 0"));
    assert!(h.contains("EPRA_CODE_PANIC = 8"));
    assert!(h.contains("#ifndef EPRA_H"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let (path, _) = header();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&path)
            .output()
        else {
            eprintln!("{compiler} not available; skipping");
            continue;
        };
        assert!(
            out.status.success(),
            "{compiler}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
