//! Checkpoint directories.
//!
//! Layout: `manifest.json` maps parameter names to RTEN tensor files and
//! records the guidance mode; `gge.json` holds the gamma parameters as
//! `{"alpha":[..4..],"gamma_min":…,"gamma_max":…}`. Loading rebuilds the
//! architecture from the manifest and validates every tensor shape, so a
//! checkpoint cannot silently load into the wrong network.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gge::GammaParams;
use crate::ggle::{GgleWeights, GuidanceMode};
use crate::surrogate::ToyHead;
use crate::tensor::Tensor;
use crate::trainer::TrainedModel;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GGE_FILE: &str = "gge.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GgeCheckpoint {
    pub alpha: [f32; 4],
    pub gamma_min: f32,
    pub gamma_max: f32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub guidance_mode: GuidanceMode,
    /// Relative path of the gamma-parameter JSON.
    pub gge: String,
    /// Parameter name → relative RTEN file path. Includes batch-norm
    /// running statistics; those are state, not learnable parameters.
    pub tensors: BTreeMap<String, String>,
}

/// Write the full model (enhancement stages plus task head).
pub fn save_checkpoint(dir: impl AsRef<Path>, model: &TrainedModel) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let gge = GgeCheckpoint {
        alpha: {
            let a = model.gge.alpha.value.data();
            [a[0], a[1], a[2], a[3]]
        },
        gamma_min: model.gge.gamma_min,
        gamma_max: model.gge.gamma_max,
    };
    let mut gge_text = serde_json::to_string(&gge).expect("gge serializes");
    gge_text.push('\n');
    std::fs::write(dir.join(GGE_FILE), gge_text)?;

    let mut tensors = BTreeMap::new();
    let mut state: Vec<(String, &Tensor<f32>)> = model.ggle.named_state();
    state.extend(model.head.named_state());
    for (name, tensor) in state {
        let file = format!("{name}.rten");
        tensor.write_rten(dir.join(&file))?;
        tensors.insert(name, file);
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        guidance_mode: model.ggle.mode,
        gge: GGE_FILE.to_string(),
        tensors,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let text = std::fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint format version {}",
            manifest.format_version
        )));
    }
    Ok(manifest)
}

fn load_gge(dir: &Path, manifest: &Manifest) -> Result<GammaParams<f32>> {
    let text = std::fs::read_to_string(dir.join(&manifest.gge))?;
    let ckpt: GgeCheckpoint = serde_json::from_str(&text)?;
    let mut gge = GammaParams::new(ckpt.gamma_min, ckpt.gamma_max)?;
    gge.alpha.value.data_mut().copy_from_slice(&ckpt.alpha);
    Ok(gge)
}

fn fill_tensors(
    dir: &Path,
    manifest: &Manifest,
    slots: Vec<(String, &mut Tensor<f32>)>,
) -> Result<()> {
    for (name, slot) in slots {
        let file = manifest.tensors.get(&name).ok_or_else(|| {
            Error::Config(format!("checkpoint is missing tensor {name:?}"))
        })?;
        let tensor = Tensor::read_rten(dir.join(file))?;
        if tensor.shape() != slot.shape() {
            return Err(Error::Config(format!(
                "checkpoint tensor {name:?} has shape {:?}, architecture wants {:?}",
                tensor.shape(),
                slot.shape()
            )));
        }
        *slot = tensor;
    }
    Ok(())
}

/// Load the enhancement stages only. When `expected_mode` is given, a
/// differently wired checkpoint is rejected.
pub fn load_enhancer(
    dir: impl AsRef<Path>,
    expected_mode: Option<GuidanceMode>,
) -> Result<(GammaParams<f32>, GgleWeights<f32>)> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    if let Some(expected) = expected_mode {
        if expected != manifest.guidance_mode {
            return Err(Error::Config(format!(
                "checkpoint was trained with guidance mode {}, requested {}",
                manifest.guidance_mode, expected
            )));
        }
    }
    let gge = load_gge(dir, &manifest)?;
    let mut ggle = GgleWeights::init(manifest.guidance_mode, 0);
    fill_tensors(dir, &manifest, ggle.named_state_mut())?;
    Ok((gge, ggle))
}

/// Load the full model, task head included.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<TrainedModel> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let gge = load_gge(dir, &manifest)?;
    let mut ggle = GgleWeights::init(manifest.guidance_mode, 0);
    fill_tensors(dir, &manifest, ggle.named_state_mut())?;
    let mut head = ToyHead::init(0);
    fill_tensors(dir, &manifest, head.named_state_mut())?;
    Ok(TrainedModel { gge, ggle, head })
}
