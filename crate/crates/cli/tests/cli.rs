//! End-to-end tests of the `rawpipe` binary: exit codes, file formats,
//! and byte-level determinism of every subcommand.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rawpipe_core::bayer::{save_bayer, BayerFrame, CfaPattern};
use rawpipe_core::checkpoint::save_checkpoint;
use rawpipe_core::tensor::Tensor;
use rawpipe_core::trainer::{TrainConfig, TrainedModel};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rawpipe"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

/// 8×8 RGGB mosaic with a gradient pattern.
fn write_frame(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    let samples: Vec<u16> = (0..64).map(|i| 512 + i * 13).collect();
    let frame = BayerFrame::new(8, 8, samples, CfaPattern::Rggb, 512, 16383).unwrap();
    let pgm = dir.join(format!("{name}.pgm"));
    let meta = dir.join(format!("{name}.json"));
    save_bayer(&frame, &pgm, &meta).unwrap();
    (pgm, meta)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pack_writes_4xhxw_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let (pgm, meta) = write_frame(dir.path(), "in");
    let out = dir.path().join("packed.rten");
    assert_exit(&run(&["pack", s(&pgm), s(&meta), s(&out)]), 0);
    let tensor = Tensor::read_rten(&out).unwrap();
    assert_eq!(tensor.shape(), [4, 4, 4]);
    assert!(tensor.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn pack_rejects_odd_dimensions_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let pgm = dir.path().join("odd.pgm");
    let mut bytes = b"P5\n3 2\n65535\n".to_vec();
    bytes.extend_from_slice(&[0u8; 12]);
    std::fs::write(&pgm, bytes).unwrap();
    let meta = dir.path().join("odd.json");
    std::fs::write(&meta, r#"{"pattern":"RGGB","black_level":0,"white_level":65535}"#).unwrap();
    let out = dir.path().join("out.rten");
    assert_exit(&run(&["pack", s(&pgm), s(&meta), s(&out)]), 2);
}

#[test]
fn pack_unpack_chain_reproduces_input_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (pgm, meta) = write_frame(dir.path(), "in");
    let packed = dir.path().join("packed.rten");
    assert_exit(&run(&["pack", s(&pgm), s(&meta), s(&packed)]), 0);
    let pgm2 = dir.path().join("back.pgm");
    let meta2 = dir.path().join("back.json");
    assert_exit(
        &run(&[
            "unpack",
            s(&packed),
            s(&pgm2),
            s(&meta2),
            "--black-level",
            "512",
            "--white-level",
            "16383",
        ]),
        0,
    );
    assert_eq!(std::fs::read(&pgm).unwrap(), std::fs::read(&pgm2).unwrap());
    assert_eq!(std::fs::read(&meta).unwrap(), std::fs::read(&meta2).unwrap());
}

#[test]
fn pack_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (pgm, meta) = write_frame(dir.path(), "in");
    let a = dir.path().join("a.rten");
    let b = dir.path().join("b.rten");
    assert_exit(&run(&["pack", s(&pgm), s(&meta), s(&a)]), 0);
    assert_exit(&run(&["pack", s(&pgm), s(&meta), s(&b)]), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

fn write_packed_input(dir: &Path) -> PathBuf {
    let (pgm, meta) = write_frame(dir, "src");
    let packed = dir.join("packed.rten");
    assert_exit(&run(&["pack", s(&pgm), s(&meta), s(&packed)]), 0);
    packed
}

fn init_checkpoint(dir: &Path, zeroed: bool) -> PathBuf {
    let cfg = TrainConfig::default();
    let mut model = TrainedModel::init(&cfg).unwrap();
    if zeroed {
        for (_, p) in model.ggle.named_params_mut() {
            p.value.fill(0.0);
        }
    }
    let ckpt = dir.join(if zeroed { "ckpt_zero" } else { "ckpt" });
    save_checkpoint(&ckpt, &model).unwrap();
    ckpt
}

#[test]
fn enhance_writes_3xhxw_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let packed = write_packed_input(dir.path());
    let ckpt = init_checkpoint(dir.path(), false);
    let a = dir.path().join("a.rten");
    let b = dir.path().join("b.rten");
    assert_exit(&run(&["enhance", s(&packed), s(&a), "--checkpoint", s(&ckpt)]), 0);
    assert_exit(&run(&["enhance", s(&packed), s(&b), "--checkpoint", s(&ckpt)]), 0);
    let out = Tensor::read_rten(&a).unwrap();
    assert_eq!(out.shape(), [3, 4, 4]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn enhance_with_zero_weights_writes_zero_image() {
    let dir = tempfile::tempdir().unwrap();
    let packed = write_packed_input(dir.path());
    let ckpt = init_checkpoint(dir.path(), true);
    let out = dir.path().join("zero.rten");
    assert_exit(&run(&["enhance", s(&packed), s(&out), "--checkpoint", s(&ckpt)]), 0);
    let tensor = Tensor::read_rten(&out).unwrap();
    assert!(tensor.data().iter().all(|&v| v == 0.0));
}

#[test]
fn enhance_mode_mismatch_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let packed = write_packed_input(dir.path());
    let ckpt = init_checkpoint(dir.path(), false); // trained with GG
    let out = dir.path().join("out.rten");
    let output = run(&[
        "enhance",
        s(&packed),
        s(&out),
        "--checkpoint",
        s(&ckpt),
        "--mode",
        "RGGB",
    ]);
    assert_exit(&output, 3);
}

#[test]
fn train_with_zero_epochs_writes_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"epochs": 0, "warmup_epochs": 0, "seed": 3}"#).unwrap();
    let out = dir.path().join("run");
    let output = run(&["train", s(&cfg), "--out", s(&out), "--samples", "4"]);
    assert_exit(&output, 0);
    assert!(out.join("manifest.json").exists());
    assert!(out.join("gge.json").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["epochs"].as_array().unwrap().len(), 0);
}

#[test]
fn train_emits_epoch_lines_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"epochs": 2, "warmup_epochs": 1, "batch_size": 4, "seed": 5}"#,
    )
    .unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let run_a = run(&["train", s(&cfg), "--out", s(&out_a), "--samples", "8"]);
    assert_exit(&run_a, 0);
    let stdout = String::from_utf8_lossy(&run_a.stdout);
    assert!(stdout.contains("epoch=0 loss="), "stdout: {stdout}");
    assert!(stdout.contains("gamma=["), "stdout: {stdout}");
    let run_b = run(&["train", s(&cfg), "--out", s(&out_b), "--samples", "8"]);
    assert_exit(&run_b, 0);
    for name in ["gge.json", "manifest.json", "report.json", "ggle.fusion.weight.rten"] {
        assert_eq!(
            std::fs::read(out_a.join(name)).unwrap(),
            std::fs::read(out_b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn train_rejects_bad_config_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"epochs": 2, "warmup_epochs": 7}"#).unwrap();
    let out = dir.path().join("run");
    assert_exit(&run(&["train", s(&cfg), "--out", s(&out), "--samples", "4"]), 3);
}

#[test]
fn snr_on_constant_frame_reports_undefined() {
    let dir = tempfile::tempdir().unwrap();
    let samples: Vec<u16> = vec![700; 64];
    let frame = BayerFrame::new(8, 8, samples, CfaPattern::Rggb, 512, 16383).unwrap();
    let pgm = dir.path().join("flat.pgm");
    let meta = dir.path().join("flat.json");
    save_bayer(&frame, &pgm, &meta).unwrap();
    let out = dir.path().join("snr.csv");
    assert_exit(&run(&["snr", s(&pgm), "--out", s(&out)]), 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("channel,mean,std,snr_db\n"), "csv: {csv}");
    assert!(csv.contains("undefined"), "csv: {csv}");
}

#[test]
fn hist_csv_counts_sum_to_pixel_count() {
    let dir = tempfile::tempdir().unwrap();
    let packed = write_packed_input(dir.path());
    let out = dir.path().join("hist.csv");
    assert_exit(
        &run(&["hist", s(&packed), "--out", s(&out), "--bins", "4", "--channel", "1"]),
        0,
    );
    let csv = std::fs::read_to_string(&out).unwrap();
    let total: u64 = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 16);
    // multi-plane tensor without --channel is a config error
    assert_exit(&run(&["hist", s(&packed), "--out", s(&out), "--bins", "4"]), 3);
}

#[test]
fn gradcheck_passes_and_prints_max_error() {
    let output = run(&["gradcheck", "--pipeline", "full", "--seed", "7"]);
    assert_exit(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("max_rel_error="), "stdout: {stdout}");
    assert!(stdout.contains("pipeline=full seed=7"), "stdout: {stdout}");
    // unknown pipeline name is a config error
    assert_exit(&run(&["gradcheck", "--pipeline", "conv"]), 3);
}

#[test]
fn synth_toy_dataset_feeds_train() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("sensor.json");
    std::fs::write(
        &model,
        r#"{"quantum_efficiency":[1.0,2.0,1.0],"exposure":20.0,"read_noise_sigma":4.0,"full_well":1000.0,"black_level":512,"white_level":16383,"seed":1}"#,
    )
    .unwrap();
    let scene = dir.path().join("scene.json");
    std::fs::write(&scene, r#"{"kind":"toy","count":4}"#).unwrap();
    let data = dir.path().join("data");
    assert_exit(&run(&["synth", s(&model), s(&scene), "--out", s(&data)]), 0);
    assert!(data.join("manifest.json").exists());
    assert!(data.join("sample_00000.pgm").exists());

    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"epochs": 1, "warmup_epochs": 0, "batch_size": 2, "seed": 2}"#,
    )
    .unwrap();
    let out = dir.path().join("run");
    let manifest = data.join("manifest.json");
    assert_exit(
        &run(&["train", s(&cfg), "--out", s(&out), "--data", s(&manifest)]),
        0,
    );
}

#[test]
fn synth_flat_frames_support_snr() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("sensor.json");
    std::fs::write(&model, serde_json::to_string(&rawpipe_core::sensor::SensorModel::default()).unwrap()).unwrap();
    let scene = dir.path().join("scene.json");
    std::fs::write(
        &scene,
        r#"{"kind":"flat","count":2,"width":8,"height":8,"rgb":[0.5,0.5,0.5]}"#,
    )
    .unwrap();
    let data = dir.path().join("frames");
    assert_exit(&run(&["synth", s(&model), s(&scene), "--out", s(&data)]), 0);
    let out = dir.path().join("snr.csv");
    let f0 = data.join("frame_00000.pgm");
    let f1 = data.join("frame_00001.pgm");
    assert_exit(&run(&["snr", s(&f0), s(&f1), "--out", s(&out)]), 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn ablate_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"epochs": 1, "warmup_epochs": 0, "batch_size": 4, "seed": 0}"#,
    )
    .unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        assert_exit(
            &run(&[
                "ablate",
                s(&cfg),
                "--out",
                s(out),
                "--modes",
                "GG,None",
                "--seeds",
                "1",
                "--samples",
                "4",
            ]),
            0,
        );
    }
    let csv = std::fs::read_to_string(&a).unwrap();
    assert!(csv.starts_with("mode,seed,final_loss\n"));
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(csv, std::fs::read_to_string(&b).unwrap());
}

#[test]
fn synth_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("sensor.json");
    std::fs::write(
        &model,
        serde_json::to_string(&rawpipe_core::sensor::SensorModel::default()).unwrap(),
    )
    .unwrap();
    let scene = dir.path().join("scene.json");
    std::fs::write(&scene, r#"{"kind":"toy","count":2}"#).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert_exit(&run(&["synth", s(&model), s(&scene), "--out", s(out), "--seed", "9"]), 0);
    }
    for name in ["manifest.json", "sample_00000.pgm", "sample_00001.json"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn unknown_flags_are_rejected_with_exit_2() {
    assert_exit(&run(&["pack", "--bogus"]), 2);
    assert_exit(&run(&["definitely-not-a-subcommand"]), 2);
}

#[test]
fn every_subcommand_has_help() {
    for sub in [
        "pack", "unpack", "enhance", "train", "snr", "hist", "gradcheck", "ablate", "synth",
    ] {
        let output = run(&[sub, "--help"]);
        assert_exit(&output, 0);
        let text = String::from_utf8_lossy(&output.stdout);
        assert!(text.contains("Usage:"), "{sub} help: {text}");
    }
}
