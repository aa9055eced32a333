//! Black-box tests of the command-line interface: exit codes, manifest
//! round-trips, determinism and environment overrides.

use std::path::Path;
use std::process::Command;

fn nvraman() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nvraman"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn levels_prints_transitions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    write(&cfg, &format!("[run]\nout_dir = \"{}\"\n", dir.path().join("out").display()));
    let out = nvraman().args(["levels", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("1800.7325"), "{stdout}");
    assert!(stdout.contains("3939.2675"), "{stdout}");
    assert!(dir.path().join("out/levels.csv").exists());
    assert!(dir.path().join("out/transitions.csv").exists());
    assert!(dir.path().join("out/levels.manifest.json").exists());
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    write(&cfg, "[nv]\nd_mhz = 2870.0\nmisspelled_key = 3.0\n");
    let out = nvraman().args(["levels", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("misspelled_key") || stderr.contains("unknown field"), "{stderr}");
}

#[test]
fn invalid_unit_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    write(&cfg, "[nv]\nd_mhz = -1.0\n");
    let out = nvraman().args(["levels", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nyquist_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    write(
        &cfg,
        &format!(
            "[waveform]\nsample_rate_gsps = 0.5\n\n[run]\nout_dir = \"{}\"\n",
            dir.path().join("out").display()
        ),
    );
    let out = nvraman().args(["waveform", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Nyquist"), "{stderr}");
}

#[test]
fn scan_rerun_from_manifest_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let out1 = dir.path().join("out1");
    let out2 = dir.path().join("out2");
    write(
        &cfg,
        &format!(
            "[drive]\nscheme = \"srt\"\ndelta_mhz = 5.0\ntau_us = 1.0\n\n\
             [sweep]\ntau_start_us = 0.0\ntau_stop_us = 1.0\ntau_points = 11\n\n\
             [signal]\nenabled = true\n\n\
             [run]\nseed = 77\nout_dir = \"{}\"\n",
            out1.display()
        ),
    );
    let s = nvraman().args(["scan", "--config"]).arg(&cfg).output().unwrap();
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));

    // rerun from the manifest into a second directory
    let s2 = nvraman()
        .args(["scan", "--config"])
        .arg(out1.join("scan.manifest.json"))
        .arg("--out")
        .arg(&out2)
        .output()
        .unwrap();
    assert!(s2.status.success(), "{}", String::from_utf8_lossy(&s2.stderr));

    let a = std::fs::read(out1.join("scan.csv")).unwrap();
    let b = std::fs::read(out2.join("scan.csv")).unwrap();
    assert_eq!(a, b, "scan rerun from manifest must be byte-identical");
}

#[test]
fn map_kind_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    write(
        &cfg,
        &format!(
            "[sweep]\nkind = \"detuning_map\"\n\
             tau_start_us = 0.0\ntau_stop_us = 0.5\ntau_points = 3\naudit = false\n\n\
             [drive]\ntau_us = 0.5\n\n\
             [run]\nout_dir = \"{}\"\n",
            dir.path().join("out").display()
        ),
    );
    let out = nvraman()
        .args(["map", "--kind", "tau-scan", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/map.csv")).unwrap();
    assert!(csv.starts_with("tau_us,P_m1,P_0,P_p1\n"), "{csv}");
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn env_var_overrides_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    write(&cfg, "[run]\nout_dir = \"/nonexistent/should/not/be/used\"\n");
    let out_env = dir.path().join("env_out");
    let out = nvraman()
        .args(["levels", "--config"])
        .arg(&cfg)
        .env("NVRAMAN_OUT", &out_env)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_env.join("levels.csv").exists());
}

#[test]
fn fit_reads_scan_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("out");
    let cfg = dir.path().join("c.toml");
    write(
        &cfg,
        &format!(
            "[drive]\nscheme = \"srt\"\ndelta_mhz = 5.0\ntau_us = 2.5\n\
             delta_minus_mhz = 0.1\n\n\
             [sweep]\ntau_start_us = 0.1\ntau_stop_us = 2.5\ntau_points = 25\n\n\
             [fit]\nmax_evals = 400\nrestarts = 1\n\n\
             [run]\nseed = 3\nout_dir = \"{}\"\n",
            out1.display()
        ),
    );
    let s = nvraman().args(["scan", "--config"]).arg(&cfg).output().unwrap();
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    let f = nvraman()
        .args(["fit", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(out1.join("scan.csv"))
        .output()
        .unwrap();
    assert!(f.status.success(), "{}", String::from_utf8_lossy(&f.stderr));
    let json = std::fs::read_to_string(out1.join("fit.json")).unwrap();
    assert!(json.contains("delta_minus_mhz"));
}

#[test]
fn waveform_f32_export_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    write(
        &cfg,
        &format!(
            "[drive]\nscheme = \"srt\"\ntau_us = 0.01\n\n\
             [waveform]\nsample_rate_gsps = 10.0\nformat = \"f32le\"\n\n\
             [run]\nout_dir = \"{}\"\n",
            dir.path().join("out").display()
        ),
    );
    let out = nvraman().args(["waveform", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let raw = std::fs::read(dir.path().join("out/waveform.f32")).unwrap();
    assert_eq!(raw.len(), 100 * 4);
    // run manifest plus the sample-format sidecar next to the data file
    let run_manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/waveform.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(run_manifest["command"], "waveform");
    let sidecar: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/waveform.f32.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(sidecar["n_samples"], 100);
}
