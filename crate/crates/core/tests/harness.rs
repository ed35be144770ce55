use std::path::PathBuf;

use emsfem::exec::Threading;
use emsfem::harness::report::parse_table_csv;
use emsfem::harness::{run_suite, ErrorReport, ExperimentConfig, SuiteOptions};

const TINY: &str = r#"
name = "tiny"
seed = 9

[domain]
bounds = [0.0, 1.0, 0.0, 1.0]

[mesh]
fine_exponent = 4
coarse_exponents = [1, 2]
levels = [0, 1]

[time]
dt = 0.01
t_final = 0.05

[reaction]
model = "allen_cahn"
eps = 0.3

[[species]]
kappa = { preset = "random_log_uniform", contrast = 100.0, cells = 16 }
velocity = { preset = "rigid_rotation" }
initial = { preset = "trig", amplitude = 0.5, kx = 1.0, ky = 1.0 }

[output]
vtk = true
"#;

fn tiny(dir: &tempfile::TempDir) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str(TINY).unwrap();
    cfg.output.dir = dir.path().join("out");
    cfg
}

#[test]
fn shipped_configs_validate() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap();
            assert!(cfg.steps() > 0);
            seen += 1;
        }
    }
    assert!(seen >= 6);
}

#[test]
fn suite_writes_outputs_and_reuses_the_reference() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(&dir);
    let first = run_suite(&cfg, &SuiteOptions::default()).unwrap();
    assert!(!first.reference_cached);
    assert_eq!(first.report.rows.len(), 4);
    assert!(first.report.rows.iter().all(|r| r.error.is_none() && r.eps0.unwrap() < 1.0));

    let out = dir.path().join("out");
    for f in ["table.csv", "cells.csv", "manifest.json", "reference.vtk", "cell_q2_l1.vtk"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["reference_key"], first.reference_key.as_str());
    assert_eq!(manifest["cells"].as_array().unwrap().len(), 4);

    let cells = ErrorReport::read_cells_csv(std::fs::File::open(out.join("cells.csv")).unwrap()).unwrap();
    assert_eq!(cells.rows.len(), first.report.rows.len());
    for (a, b) in cells.rows.iter().zip(&first.report.rows) {
        assert_eq!(a.eps0, b.eps0);
        assert_eq!(a.eps1, b.eps1);
    }
    let (header, rows) = parse_table_csv(&std::fs::read_to_string(out.join("table.csv")).unwrap()).unwrap();
    assert_eq!(header[0], "H");
    assert_eq!(rows.iter().map(|r| r.0.as_str()).collect::<Vec<_>>(), ["2^-1", "2^-2"]);

    let opts = SuiteOptions { cell_threading: Threading::Sequential, inner_threading: Threading::Sequential, write_outputs: false };
    let second = run_suite(&cfg, &opts).unwrap();
    assert!(second.reference_cached);
    assert_eq!(second.reference_key, first.reference_key);
    for (a, b) in second.report.rows.iter().zip(&first.report.rows) {
        assert_eq!(a.eps0, b.eps0, "sequential and parallel runs must agree bit for bit");
    }
}

#[test]
fn changing_the_fine_problem_changes_the_cache_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(&dir);
    let mut other = cfg.clone();
    other.time.t_final = 0.04;
    let a = run_suite(&cfg, &SuiteOptions { write_outputs: false, ..SuiteOptions::default() }).unwrap();
    let b = run_suite(&other, &SuiteOptions { write_outputs: false, ..SuiteOptions::default() }).unwrap();
    assert_ne!(a.reference_key, b.reference_key);
    assert!(!b.reference_cached);
}
