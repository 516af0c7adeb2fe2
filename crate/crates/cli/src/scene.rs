//! Scene specs for the `synth` subcommand.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use rawpipe_core::bayer::save_bayer;
use rawpipe_core::error::Result;
use rawpipe_core::sensor::{synthesize_raw, RadianceMap, SensorModel};
use rawpipe_core::surrogate::{make_dataset, save_dataset, DatasetManifest, ManifestEntry};

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneSpec {
    /// Labelled detection-style dataset (dark scenes, optional bright
    /// square), written with a training manifest.
    Toy { count: usize },
    /// Constant-radiance frames, e.g. for SNR studies.
    Flat {
        count: usize,
        width: usize,
        height: usize,
        rgb: [f32; 3],
    },
}

pub fn generate(spec: &SceneSpec, model: &SensorModel, seed: u64, out: &Path) -> Result<()> {
    match *spec {
        SceneSpec::Toy { count } => {
            let samples = make_dataset(count, model, seed)?;
            save_dataset(out, &samples)
        }
        SceneSpec::Flat { count, width, height, rgb } => {
            std::fs::create_dir_all(out)?;
            let scene = RadianceMap::filled(height, width, rgb)?;
            let mut root = ChaCha8Rng::seed_from_u64(seed);
            let mut entries = Vec::with_capacity(count);
            for i in 0..count {
                let frame = synthesize_raw(&scene, &model.with_seed(root.next_u64()))?;
                let pgm = format!("frame_{i:05}.pgm");
                let meta = format!("frame_{i:05}.json");
                save_bayer(&frame, out.join(&pgm), out.join(&meta))?;
                entries.push(ManifestEntry { pgm, meta, cls_label: None, reg_target: None });
            }
            let manifest = DatasetManifest { samples: entries };
            let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            text.push('\n');
            std::fs::write(out.join("manifest.json"), text)?;
            Ok(())
        }
    }
}
