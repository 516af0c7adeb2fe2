//! Subcommand implementations.

use std::path::Path;

use rawpipe_core::analysis::{channel_snr_pooled, histogram, histogram_csv, run_ablation, snr_csv};
use rawpipe_core::bayer::{load_bayer, pack as pack_frame, save_bayer, unpack as unpack_packed, PackedRaw};
use rawpipe_core::checkpoint::{load_enhancer, save_checkpoint};
use rawpipe_core::error::{Error, Result};
use rawpipe_core::ggle::GuidanceMode;
use rawpipe_core::gradcheck::{grad_check, Pipeline, TOLERANCE};
use rawpipe_core::nn::Mode;
use rawpipe_core::sensor::SensorModel;
use rawpipe_core::surrogate::{load_dataset, make_dataset};
use rawpipe_core::tensor::Tensor;
use rawpipe_core::trainer::{train as train_model, TrainConfig};

use crate::scene;
use crate::RangeArg;

pub fn pack(pgm: &Path, meta: &Path, out: &Path) -> Result<()> {
    let frame = load_bayer(pgm, meta)?;
    let packed = pack_frame(&frame);
    packed.to_tensor().write_rten(out)?;
    Ok(())
}

pub fn unpack(input: &Path, pgm: &Path, meta: &Path, black: u16, white: u16) -> Result<()> {
    let tensor = Tensor::read_rten(input)?;
    let packed = PackedRaw::from_tensor(&tensor)?;
    let frame = unpack_packed(&packed, black, white)?;
    save_bayer(&frame, pgm, meta)
}

pub fn enhance(input: &Path, out: &Path, checkpoint: &Path, mode: Option<&str>) -> Result<()> {
    let expected = mode.map(str::parse::<GuidanceMode>).transpose()?;
    let (gge, mut ggle) = load_enhancer(checkpoint, expected)?;
    let tensor = Tensor::read_rten(input)?;
    let packed = PackedRaw::from_tensor(&tensor)?;
    let (h, w) = (packed.h(), packed.w());
    let batched = Tensor::from_vec(&[1, 4, h, w], packed.data().to_vec())?;
    let (x_gamma, _) = gge.forward(&batched)?;
    let (enhanced, _) = ggle.forward(&x_gamma, Mode::Eval)?;
    let unbatched = Tensor::from_vec(&[3, h, w], enhanced.data().to_vec())?;
    unbatched.write_rten(out)?;
    Ok(())
}

fn load_sensor(path: Option<&Path>) -> Result<SensorModel> {
    let model = match path {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => SensorModel::default(),
    };
    Ok(model)
}

fn load_train_config(path: &Path, seed_override: Option<u64>) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(
    config: &Path,
    out: &Path,
    data: Option<&Path>,
    samples: usize,
    sensor: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<()> {
    let cfg = load_train_config(config, seed_override)?;
    let dataset = match data {
        Some(manifest) => load_dataset(manifest)?,
        None => {
            let model = load_sensor(sensor)?;
            make_dataset(samples, &model, cfg.seed)?
        }
    };
    let (model, report) = train_model(&cfg, &dataset)?;
    std::fs::create_dir_all(out)?;
    save_checkpoint(out, &model)?;
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    std::fs::write(out.join("report.json"), text)?;
    Ok(())
}

pub fn snr(inputs: &[std::path::PathBuf], out: &Path) -> Result<()> {
    let mut frames = Vec::with_capacity(inputs.len());
    for input in inputs {
        let meta = input.with_extension("json");
        let frame = load_bayer(input, &meta)?;
        frames.push(pack_frame(&frame));
    }
    let stats = channel_snr_pooled(&frames);
    std::fs::write(out, snr_csv(&stats))?;
    Ok(())
}

pub fn hist(
    input: &Path,
    out: &Path,
    bins: usize,
    range: RangeArg,
    channel: Option<usize>,
) -> Result<()> {
    let tensor = Tensor::read_rten(input)?;
    let (values, label): (&[f32], String) = match tensor.ndim() {
        3 => {
            let (c, plane) = (tensor.dim(0), tensor.dim(1) * tensor.dim(2));
            let idx = match (channel, c) {
                (Some(i), _) if i < c => i,
                (Some(i), _) => {
                    return Err(Error::Config(format!(
                        "--channel {i} out of range for {c} planes"
                    )))
                }
                (None, 1) => 0,
                (None, _) => {
                    return Err(Error::Config(
                        "--channel is required for multi-plane tensors".into(),
                    ))
                }
            };
            (&tensor.data()[idx * plane..(idx + 1) * plane], idx.to_string())
        }
        _ => {
            if channel.is_some() {
                return Err(Error::Config(
                    "--channel only applies to [C,H,W] tensors".into(),
                ));
            }
            (tensor.data(), "0".to_string())
        }
    };
    let (lo, hi) = match range {
        RangeArg::Unit => (0.0, 1.0),
        RangeArg::Byte => (0.0, 255.0),
    };
    let h = histogram(&label, values, bins, lo, hi)?;
    std::fs::write(out, histogram_csv(&h))?;
    Ok(())
}

pub fn gradcheck(pipeline: &str, seed: u64, step: f64) -> Result<()> {
    let pipeline: Pipeline = pipeline.parse()?;
    let report = grad_check(pipeline, seed, step)?;
    println!(
        "pipeline={} seed={} step={:e} params={} max_rel_error={:.3e} worst={} coord_error={:.3e} worst_coord={}",
        report.pipeline,
        report.seed,
        report.step,
        report.params_checked,
        report.max_rel_error,
        report.worst_param,
        report.max_coordinate_error,
        report.worst_coordinate
    );
    if report.max_rel_error > TOLERANCE {
        return Err(Error::ToleranceExceeded {
            what: format!("gradient check ({pipeline})"),
            value: report.max_rel_error,
            limit: TOLERANCE,
        });
    }
    Ok(())
}

pub fn ablate(
    config: &Path,
    out: &Path,
    modes: &[String],
    seeds: &[u64],
    samples: usize,
    sensor: Option<&Path>,
    threads: usize,
) -> Result<()> {
    let cfg = load_train_config(config, None)?;
    let modes: Vec<GuidanceMode> =
        modes.iter().map(|m| m.parse()).collect::<Result<Vec<_>>>()?;
    let model = load_sensor(sensor)?;
    let table = run_ablation(&cfg, &modes, seeds, samples, &model, threads)?;
    std::fs::write(out, table.to_csv())?;
    for (mode, mean, std) in table.aggregate() {
        println!("mode={mode} mean_final_loss={mean:.6} std={std:.6}");
    }
    Ok(())
}

pub fn synth(model: &Path, scene_spec: &Path, out: &Path, seed_override: Option<u64>) -> Result<()> {
    let model: SensorModel = serde_json::from_str(&std::fs::read_to_string(model)?)?;
    model.validate()?;
    let spec: scene::SceneSpec = serde_json::from_str(&std::fs::read_to_string(scene_spec)?)?;
    let seed = seed_override.unwrap_or(model.seed);
    scene::generate(&spec, &model, seed, out)
}
