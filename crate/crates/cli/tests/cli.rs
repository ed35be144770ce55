use std::path::Path;
use std::process::Command;

const TINY: &str = r#"
name = "tiny_cli"
seed = 3

[domain]
bounds = [0.0, 1.0, 0.0, 1.0]

[mesh]
fine_exponent = 4
coarse_exponents = [1, 2]
levels = [0, 1]

[time]
dt = 0.01
t_final = 0.03

[reaction]
model = "allen_cahn"
eps = 0.3

[[species]]
kappa = { preset = "channels", contrast = 1000.0, cells = 16 }
initial = { preset = "trig", amplitude = 0.5, kx = 1.0, ky = 1.0 }

[output]
dir = "out"
snapshot_stride = 1
vtk = true
"#;

fn emsfem(args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_emsfem")).args(args).env("RUST_LOG", "warn").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.success(), text)
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn selftest_passes() {
    let (ok, text) = emsfem(&["selftest", "--seed", "11"]);
    assert!(ok, "{text}");
    assert!(text.lines().filter(|l| l.starts_with("[pass]")).count() >= 4, "{text}");
}

#[test]
fn converge_reference_run_and_basis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");

    let (ok, text) = emsfem(&["reference", &cfg]);
    assert!(ok, "{text}");
    assert!(text.contains("computed"), "{text}");

    let (ok, text) = emsfem(&["converge", &cfg, "--sequential"]);
    assert!(ok, "{text}");
    assert!(text.contains("(cached)"), "{text}");
    assert!(text.contains("H,eps0_l0,CR0_l0,eps1_l0,CR1_l0"), "{text}");
    assert!(out.join("table.csv").is_file() && out.join("manifest.json").is_file());

    let (ok, text) = emsfem(&["run", &cfg, "--coarse", "2", "--level", "1"]);
    assert!(ok, "{text}");
    let trace = std::fs::read_to_string(out.join("trace_q2_l1.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 4);

    let (ok, text) = emsfem(&["basis", &cfg, "--node", "12", "--coarse", "2", "--level", "1"]);
    assert!(ok, "{text}");
    assert!(text.contains("node 12: 8 basis functions"), "{text}");
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, TINY.replace("t_final = 0.03", "t_final = 0.035")).unwrap();
    let (ok, text) = emsfem(&["converge", path.to_str().unwrap()]);
    assert!(!ok);
    assert!(text.contains("error:"), "{text}");

    let (ok, _) = emsfem(&["basis", &write_config(dir.path()), "--node", "999"]);
    assert!(!ok);
}
