//! Every experiment kind has a checked-in config whose CSV outputs must
//! reproduce byte-for-byte with the pinned seed.

use std::path::{Path, PathBuf};

use rigidlab::experiment::{parse_config, run_experiment};

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn run_into(config_name: &str, out: &Path) {
    let path = workspace_root().join("configs").join(config_name);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["output"] = serde_json::Value::String(out.to_string_lossy().into_owned());
    let text = serde_json::to_string(&value).unwrap();
    let (cfg, echo) = parse_config(&text).unwrap();
    let report = run_experiment(&cfg, echo).unwrap();
    assert!(
        report.summary.pass,
        "{}: {:?}",
        config_name, report.summary.assertions
    );
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

#[test]
fn all_golden_configs_reproduce_bit_exactly() {
    for kind in [
        "bracket",
        "flow",
        "minmax",
        "gamma",
        "weakfield",
        "c0commute",
        "rigidity",
        "property-suite",
    ] {
        let config_name = format!("{}.json", kind);
        let golden = workspace_root().join("configs/golden").join(kind);
        let run1 = tempfile::tempdir().unwrap();
        let run2 = tempfile::tempdir().unwrap();
        run_into(&config_name, run1.path());
        run_into(&config_name, run2.path());
        let names = csv_files(&golden);
        assert!(!names.is_empty(), "{}: no golden CSV files", kind);
        assert_eq!(names, csv_files(run1.path()), "{}: file set differs", kind);
        for name in &names {
            let reference = std::fs::read(golden.join(name)).unwrap();
            let a = std::fs::read(run1.path().join(name)).unwrap();
            let b = std::fs::read(run2.path().join(name)).unwrap();
            assert_eq!(a, b, "{}/{}: two runs differ", kind, name);
            assert_eq!(a, reference, "{}/{}: differs from golden file", kind, name);
        }
    }
}
