use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use ddrm_refine::denoiser::protocol::Frame;
use ddrm_refine::denoiser::ExternalDenoiser;
use ddrm_refine::evalblend::si_sdr;
use ddrm_refine::signal::read_wav;

const BIN: &str = env!("CARGO_BIN_EXE_ddrm-refine");

fn ddrm(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn")
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn synth(dir: &Path, snr: Option<f64>) -> std::path::PathBuf {
    let mut spec = serde_json::json!({
        "version": 1,
        "duration_secs": 1.0,
        "seed": 2,
        "sources": [
            {"type": "sine", "freq": 523.0, "amplitude": 0.4},
            {"type": "noise_burst", "start": 0.1, "duration": 0.5, "amplitude": 0.1}
        ]
    });
    if let Some(snr) = snr {
        spec["corruption_snr_db"] = snr.into();
    }
    let path = dir.join("scene.json");
    std::fs::write(&path, spec.to_string()).unwrap();
    let out = ddrm(&["synth", "--config", &s(&path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("refine.json")
}

fn edit(path: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    std::fs::write(path, v.to_string()).unwrap();
}

#[test]
fn synth_writes_scene_at_requested_snr() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), Some(10.0));
    for i in 1..=2 {
        let t = read_wav(dir.path().join(format!("truth_{i}.wav"))).unwrap();
        let e = read_wav(dir.path().join(format!("estimate_{i}.wav"))).unwrap();
        // float32 files: quantization keeps the measured SNR well inside 0.2 dB.
        assert!((si_sdr(&e.samples, &t.samples).unwrap() - 10.0).abs() < 0.2);
    }
    let mix = read_wav(dir.path().join("mixture.wav")).unwrap();
    let a = read_wav(dir.path().join("truth_1.wav")).unwrap();
    let b = read_wav(dir.path().join("truth_2.wav")).unwrap();
    for n in 0..mix.len() {
        assert!((mix.samples[n] - (a.samples[n] + b.samples[n])).abs() < 1e-7);
    }
}

#[test]
fn noiseless_isolated_identity_reproduces_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), Some(5.0));
    edit(&cfg, |v| {
        v["design"] = "isolated".into();
        v["variance"] = serde_json::json!({"kind": "fixed", "fixed": 0.0});
        v["sampler"]["schedule"] = serde_json::json!({"kind": "linear-beta", "steps": 20, "sigma_min": 0.0});
    });
    let out = ddrm(&["refine", "--config", &s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for i in 1..=2 {
        let e = read_wav(dir.path().join(format!("estimate_{i}.wav"))).unwrap();
        let r = read_wav(dir.path().join(format!("refined/synth/refined_{i}.wav"))).unwrap();
        let err: f64 = r.samples.iter().zip(&e.samples).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err / e.energy().sqrt() < 1e-5);
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("refined/report.json")).unwrap()).unwrap();
    assert_eq!(report["scenes"][0]["sweep"].as_array().unwrap().len(), 11);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("refined/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenes"][0]["sigmas"].as_array().unwrap().len(), 21);
    assert_eq!(manifest["software"]["name"], "ddrm-refine");
    assert!(dir.path().join("refined/blend_sweep.csv").exists());
    assert!(dir.path().join("refined/synth/branches.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), Some(10.0));

    let missing = ddrm(&["refine", "--config", &s(&dir.path().join("nope.json"))]);
    assert_eq!(missing.status.code(), Some(3));

    let no_mix = dir.path().join("no_mix.json");
    std::fs::copy(&cfg, &no_mix).unwrap();
    edit(&no_mix, |v| {
        v["scenes"][0].as_object_mut().unwrap().remove("mixture");
    });
    let out = ddrm(&["refine", "--config", &s(&no_mix)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("shared design requires mixture"));

    let typo = dir.path().join("typo.json");
    std::fs::copy(&cfg, &typo).unwrap();
    edit(&typo, |v| v["sampler"]["eta_bb"] = 1.into());
    let out = ddrm(&["refine", "--config", &s(&typo)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampler.eta_bb"));

    let tight = dir.path().join("tight.json");
    std::fs::copy(&cfg, &tight).unwrap();
    edit(&tight, |v| v["sampler"]["schedule"]["sigma_max"] = 0.1.into());
    let out = ddrm(&["refine", "--config", &s(&tight)]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schedule too small"));

    let broken = dir.path().join("broken.json");
    std::fs::copy(&cfg, &broken).unwrap();
    edit(&broken, |v| {
        v["denoiser"] = serde_json::json!({"kind": "external", "command": [BIN, "protocol-echo", "--fault", "shape"]});
    });
    let out = ddrm(&["refine", "--config", &s(&broken)]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));

    assert_eq!(ddrm(&["refine"]).status.code(), Some(2));
}

#[test]
fn external_echo_matches_identity_denoiser() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), Some(10.0));
    edit(&cfg, |v| {
        v["sampler"]["schedule"]["steps"] = 15.into();
        v["denoiser"] = serde_json::json!({"kind": "identity"});
        v["output"]["dir"] = "identity".into();
    });
    assert!(ddrm(&["refine", "--config", &s(&cfg)]).status.success());
    edit(&cfg, |v| {
        v["denoiser"] = serde_json::json!({"kind": "external", "command": [BIN, "protocol-echo"]});
        v["output"]["dir"] = "external".into();
    });
    let out = ddrm(&["refine", "--config", &s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // The wire carries f32, so agreement is to single precision.
    for i in 1..=2 {
        let a = read_wav(dir.path().join(format!("identity/synth/refined_{i}.wav"))).unwrap();
        let b = read_wav(dir.path().join(format!("external/synth/refined_{i}.wav"))).unwrap();
        let err = a.samples.iter().zip(&b.samples).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }
}

#[test]
fn eval_reports_permutation() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), Some(10.0));
    let p = |n: &str| s(&dir.path().join(n));
    let out = ddrm(&[
        "eval", "--estimates", &p("estimate_2.wav"), &p("estimate_1.wav"),
        "--references", &p("truth_1.wav"), &p("truth_2.wav"),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["permutation"], serde_json::json!([1, 0]));
    let own = ddrm(&["eval", "--estimates", &p("truth_1.wav"), "--references", &p("truth_1.wav")]);
    let report: serde_json::Value = serde_json::from_slice(&own.stdout).unwrap();
    assert_eq!(report["mean"], 100.0);
    let mismatch = ddrm(&["eval", "--estimates", &p("truth_1.wav"), "--references", &p("truth_1.wav"), &p("truth_2.wav")]);
    assert_eq!(mismatch.status.code(), Some(2));
}

#[test]
fn schedule_check_verb() {
    let out = ddrm(&["schedule-check", "--steps", "2", "--sigma-min", "0.01", "--sigma-max", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("0\t1.000000e-2") && text.contains("2\t1.000000e0"), "{text}");
    let bad = ddrm(&["schedule-check", "--sigma-max", "0.5", "--sigma-bar", "0.7"]);
    assert_eq!(bad.status.code(), Some(5));

    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), Some(10.0));
    let out = ddrm(&["schedule-check", "--config", &s(&cfg)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("# scene synth"));
}

#[test]
fn echo_server_over_tcp() {
    let mut child = Command::new(BIN)
        .args(["protocol-echo", "--listen", "tcp:127.0.0.1:0", "--once"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.as_mut().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();
    let mut d = ExternalDenoiser::connect(&addr, Duration::from_secs(10)).unwrap();
    let frame = Frame { dims: vec![1, 2, 2, 2], sigma: 0.25, payload: (0..8).map(|i| i as f32 * 0.5).collect() };
    assert_eq!(d.roundtrip(&frame).unwrap(), frame);
    drop(d);
    assert!(child.wait().unwrap().success());
}
