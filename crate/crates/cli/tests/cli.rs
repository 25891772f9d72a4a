use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vsc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsc")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, format!("[system]\nbuiltin = \"pta_surrogate\"\n\n{body}")).unwrap();
    p.display().to_string()
}

fn csvs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap().flatten() {
        let p = e.path();
        if p.is_dir() {
            out.extend(csvs(&p).into_iter().map(|(q, b)| (Path::new(e.file_name().to_str().unwrap()).join(q), b)));
        } else if p.extension().is_some_and(|x| x == "csv") {
            out.push((PathBuf::from(e.file_name()), fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

const SHORT: &str = "[dynamics]\nduration_fs = 300\n\n[ensemble]\nn_trajectories = 4\nn_base = 8\nwindow_fs = [0, 250]\n";

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&vsc(&["--help"])), 0);
    assert_eq!(code(&vsc(&["frobnicate"])), 1);
    assert_eq!(code(&vsc(&["run", "--format", "xml"])), 1);
}

#[test]
fn missing_config_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent.toml");
    assert_eq!(code(&vsc(&["calibrate", "--config", missing.to_str().unwrap()])), 3);
}

#[test]
fn invalid_configs_are_validation_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let both = write_config(tmp.path(), "[cavity]\nratio = 1.0\nlambda_au = 0.1\n");
    assert_eq!(code(&vsc(&["calibrate", "--config", &both, "--out", out])), 1);
    let unknown = write_config(tmp.path(), "[dynamics]\ntimestep = 1.0\n");
    assert_eq!(code(&vsc(&["calibrate", "--config", &unknown, "--out", out])), 1);
    let plain = write_config(tmp.path(), "");
    assert_eq!(code(&vsc(&["scan", "--config", &plain, "--out", out])), 1);
    assert_eq!(code(&vsc(&["analyze", "--config", &plain, "--out", out])), 1);
    assert_eq!(code(&vsc(&["ensemble", "--config", &plain, "--out", out, "--threads", "0"])), 1);
}

#[test]
fn calibrate_and_spectrum_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cal");
    let o = vsc(&["calibrate", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cal: serde_json::Value = serde_json::from_slice(&fs::read(out.join("calibration.json")).unwrap()).unwrap();
    assert!(cal.to_string().contains("barrier"));
    assert!(out.join("manifest.json").exists());

    let spec = tmp.path().join("spec");
    assert_eq!(code(&vsc(&["spectrum", "--out", spec.to_str().unwrap(), "--format", "csv"])), 0);
    for f in ["modes.csv", "lines.csv", "spectrum.csv"] {
        let text = fs::read_to_string(spec.join(f)).unwrap();
        assert!(text.starts_with("# manifest=manifest.json config_sha256="));
    }
    assert!(!spec.join("modes.json").exists());
}

#[test]
fn model_check_passes_on_the_builtin_system() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mc");
    let o = vsc(&["model-check", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let check: serde_json::Value = serde_json::from_slice(&fs::read(out.join("model_check.json")).unwrap()).unwrap();
    assert_eq!(check["passed"], true);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("[cavity]\nratio = 1.132\n\n{SHORT}\n[outputs]\ntrajectories = true\n"));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&vsc(&["ensemble", "--config", &cfg, "--out", a.to_str().unwrap()])), 0);
    assert_eq!(code(&vsc(&["ensemble", "--config", &cfg, "--out", b.to_str().unwrap(), "--threads", "1"])), 0);
    let (fa, fb) = (csvs(&a), csvs(&b));
    assert!(fa.len() > 4);
    assert_eq!(fa, fb);

    let c = tmp.path().join("c");
    assert_eq!(code(&vsc(&["ensemble", "--config", &cfg, "--out", c.to_str().unwrap(), "--seed", "2"])), 0);
    assert_ne!(csvs(&c), fa);
}

#[test]
fn scan_then_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let scan_cfg = write_config(
        tmp.path(),
        &format!("[cavity]\nratio = 1.132\n\n{SHORT}\n[outputs]\ntrajectories = true\n\n[scan]\nkind = \"resonance\"\nomega_list = [42.8, 856.0]\n"),
    );
    let scan = tmp.path().join("scan");
    let o = vsc(&["scan", "--config", &scan_cfg, "--out", scan.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(scan.join("scan.csv")).unwrap();
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 4);
    assert!(table.lines().nth(2).unwrap().starts_with("baseline"));

    let res = scan.join("trajectories/row_02");
    let off = scan.join("trajectories/row_01");
    let analyze_cfg = tmp.path().join("analyze.toml");
    fs::write(
        &analyze_cfg,
        format!(
            "[system]\nbuiltin = \"pta_surrogate\"\n\n{SHORT}\n[analyze]\ntrajectories = \"{}\"\nreference = \"{}\"\n",
            res.display(),
            off.display()
        ),
    )
    .unwrap();
    let an = tmp.path().join("an");
    let o = vsc(&["analyze", "--config", analyze_cfg.to_str().unwrap(), "--out", an.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["occupation.csv", "occupation_difference.csv", "accumulated.csv", "correlation_summary.json"] {
        assert!(an.join(f).exists(), "{f}");
    }
}
