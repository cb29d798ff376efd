//! End-to-end tests driving the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

use conformer_core::frontend::{write_wav, AudioBuffer};

fn conformer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conformer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn forward_synthetic_s_preset_shape() {
    let out = conformer(&["forward", "--synthetic", "100", "--seed", "0"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["command"], "forward");
    assert_eq!(report["output"]["shape"], serde_json::json!([24, 144]));
    assert_eq!(report["input"]["frames"], 100);
}

#[test]
fn forward_same_seed_same_checksum() {
    let a = conformer(&["forward", "--synthetic", "60", "--seed", "7"]);
    let b = conformer(&["forward", "--synthetic", "60", "--seed", "7"]);
    let c = conformer(&["forward", "--synthetic", "60", "--seed", "8"]);
    assert_eq!(code(&a), 0);
    let ca = stdout_json(&a)["output"]["checksum"].as_str().unwrap().to_string();
    let cb = stdout_json(&b)["output"]["checksum"].as_str().unwrap().to_string();
    let cc = stdout_json(&c)["output"]["checksum"].as_str().unwrap().to_string();
    assert_eq!(ca, cb);
    assert_ne!(ca, cc);
    assert!(ca.starts_with("0x") && ca.len() == 18, "{ca}");
}

#[test]
fn forward_wav_input_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("tone.wav");
    let sr = 16_000;
    let samples: Vec<f64> = (0..sr / 2)
        .map(|i| 0.3 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / sr as f64).sin())
        .collect();
    write_wav(&wav, &AudioBuffer { samples, sample_rate: sr as u32 }).unwrap();

    let out = conformer(&["forward", "--input", wav.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    // 0.5 s at 16 kHz: 1 + (8000 - 400) / 160 = 48 frames, subsampled to 11.
    assert_eq!(report["input"]["frames"], 48);
    assert_eq!(report["output"]["shape"], serde_json::json!([11, 144]));
}

#[test]
fn forward_writes_output_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfkt = dir.path().join("out.cfkt");
    let csv = dir.path().join("out.csv");

    let a = conformer(&[
        "forward", "--synthetic", "40", "--out", cfkt.to_str().unwrap(),
    ]);
    assert_eq!(code(&a), 0);
    let tensor: conformer_core::Tensor64 = conformer_core::io::read_tensor(&cfkt).unwrap();
    assert_eq!(tensor.shape(), &[9, 144]);

    let b = conformer(&[
        "forward", "--synthetic", "40", "--out", csv.to_str().unwrap(), "--format", "csv",
    ]);
    assert_eq!(code(&b), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 10, "header plus 9 data rows");
    assert_eq!(rows[0].split(',').count(), 144);
    assert!(rows[0].starts_with("c0,"));

    // Same run, same checksum regardless of the file format written.
    assert_eq!(
        stdout_json(&a)["output"]["checksum"],
        stdout_json(&b)["output"]["checksum"]
    );
}

#[test]
fn forward_train_mode_differs_from_infer() {
    let infer = conformer(&["forward", "--synthetic", "80", "--mode", "infer"]);
    let train = conformer(&["forward", "--synthetic", "80", "--mode", "train"]);
    assert_eq!(code(&infer), 0);
    assert_eq!(code(&train), 0);
    assert_ne!(
        stdout_json(&infer)["output"]["checksum"],
        stdout_json(&train)["output"]["checksum"]
    );
}

#[test]
fn forward_config_file_selects_model_and_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "model = \"contextnet\"\nprecision = \"f32\"\n").unwrap();
    let out = conformer(&[
        "forward", "--config", path.to_str().unwrap(), "--synthetic", "100",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    // Standard layout: stride-2 blocks at 4, 7, 11 give 100 -> 50 -> 25 -> 13.
    assert_eq!(
        stdout_json(&out)["output"]["shape"],
        serde_json::json!([13, 640])
    );
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[conformer]\nnum_heds = 4\n").unwrap();
    let out = conformer(&[
        "forward", "--config", path.to_str().unwrap(), "--synthetic", "10",
    ]);
    assert_eq!(code(&out), 2);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("num_heds"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn missing_wav_exits_3() {
    let out = conformer(&["forward", "--input", "/definitely/not/here.wav"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn truncated_wav_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trunc.wav");
    std::fs::write(&path, b"RIFF\x10\x00\x00\x00WAVE").unwrap();
    let out = conformer(&["forward", "--input", path.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_small_passes_and_reports_checks() {
    let out = conformer(&["verify", "--suite", "all", "--scale", "small"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["passed"], true);
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.len() > 30);
    assert!(checks.iter().all(|c| c["pass"] == true));
    // Human-readable table goes to stderr, one line per check.
    let table = String::from_utf8_lossy(&out.stderr);
    assert!(table.contains("gradcheck/matmul"));
    assert!(table.contains("oracle/relpos_shift_trick"));
}

#[test]
fn verify_fault_injection_exits_1() {
    let out = conformer(&[
        "verify", "--suite", "gradcheck", "--scale", "small", "--fault", "swish-deriv-sign",
    ]);
    assert_eq!(code(&out), 1);
    let report = stdout_json(&out);
    assert_eq!(report["passed"], false);
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["gradcheck/swish"]);
}

#[test]
fn verify_rejects_unknown_suite() {
    let out = conformer(&["verify", "--suite", "everything"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn params_default_prints_three_presets_within_target() {
    let out = conformer(&["params"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "name,encoder,decoder_analytic,total,target,deviation_pct,delta_vs_base"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    for (row, name) in rows.iter().zip(["S", "M", "L"]) {
        assert_eq!(row[0], name);
        let deviation: f64 = row[5].parse().unwrap();
        assert!(deviation.abs() < 10.0, "{name}: {deviation}");
    }
}

#[test]
fn params_ablation_rows_report_deltas() {
    let out = conformer(&["params", "L", "--ablation", "heads(32)", "--ablation", "kernel(3)"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][0], "heads(32)");
    assert_eq!(rows[1][6], "0");
    assert_eq!(rows[2][0], "kernel(3)");
    // Per-layer depthwise delta is (32 - 3) * 512 across 17 layers.
    assert_eq!(rows[2][6], (-17i64 * (32 - 3) * 512).to_string());
}

#[test]
fn params_rejects_unknown_preset_and_multi_base_ablation() {
    assert_eq!(code(&conformer(&["params", "XL"])), 2);
    assert_eq!(code(&conformer(&["params", "S", "M", "--ablation", "relu"])), 2);
}

#[test]
fn params_config_file_counts_custom_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "[conformer]\nnum_layers = 2\nd_model = 64\nnum_heads = 4\n").unwrap();
    let out = conformer(&["params", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "custom");
    // Closed form: subsample 28d^2 + 10d plus two default blocks of
    // 24d^2 + (28 + k)d, with the analytic decoder at width 640.
    let d = 64i64;
    let encoder = 28 * d * d + 10 * d + 2 * (24 * d * d + (28 + 32) * d);
    assert_eq!(row[1].parse::<i64>().unwrap(), encoder);
    assert_eq!(row[4], "");
    assert!(Path::new(&path).exists());
}
