//! Dataset manifests: a JSON list of `{pan_path, ms_path, meta}` entries with
//! paths relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::sipr::{BitDepth, SiprRaster};
use crate::data::synth::{generate_scene, OffsetField, SceneConfig, SceneMeta, ScenePair};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryMeta {
    #[serde(flatten)]
    pub scene: SceneMeta,
    /// Ground-truth offsets; for evaluation only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_offset_path: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pan_path: String,
    pub ms_path: String,
    pub meta: EntryMeta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<ManifestEntry> =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if entries.is_empty() {
            return Err(Error::format(path, "manifest lists no scenes"));
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Manifest { root, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.entries)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }
}

/// Read one scene's rasters. The offset field is all-zero when absent.
pub fn load_scene(manifest: &Manifest, entry: &ManifestEntry) -> Result<ScenePair> {
    let pan_path = manifest.resolve(&entry.pan_path);
    let ms_path = manifest.resolve(&entry.ms_path);
    let pan = SiprRaster::read(&pan_path)?;
    let ms = SiprRaster::read(&ms_path)?;
    if pan.channels() != 1 || ms.channels() != 3 {
        return Err(Error::format(&ms_path, "expected a 1-band PAN and a 3-band MS raster"));
    }
    if pan.width() != 4 * ms.width() || pan.height() != 4 * ms.height() {
        return Err(Error::format(&pan_path, "PAN is not 4x the MS size"));
    }
    let (h, w) = (ms.height() as usize, ms.width() as usize);
    let gt_offsets = match &entry.meta.gt_offset_path {
        Some(p) => {
            let path = manifest.resolve(p);
            let r = SiprRaster::read(&path)?;
            let field = OffsetField::from_raster(&r).map_err(|e| Error::format(&path, e))?;
            if (field.height, field.width) != (h, w) {
                return Err(Error::format(&path, "offset field size differs from MS"));
            }
            field
        }
        None => OffsetField::constant(h, w, [0, 0]),
    };
    Ok(ScenePair {
        pan: pan.to_tensor(),
        ms: ms.to_tensor(),
        gt_offsets,
        meta: entry.meta.scene.clone(),
    })
}

/// Every scene of a manifest, held in memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub scenes: Vec<ScenePair>,
}

impl Dataset {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = Manifest::load(manifest_path)?;
        let scenes = manifest
            .entries
            .iter()
            .map(|e| load_scene(&manifest, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { scenes })
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }
}

/// Per-scene seeds derived from the dataset seed.
pub fn scene_seeds(seed: u64, scenes: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..scenes).map(|_| rng.next_u64()).collect()
}

/// Generate `scenes` pairs into `out` and write `manifest.json` there.
pub fn generate_dataset(out: &Path, scenes: usize, seed: u64, config: &SceneConfig) -> Result<Manifest> {
    config.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut entries = Vec::with_capacity(scenes);
    for (i, scene_seed) in scene_seeds(seed, scenes).into_iter().enumerate() {
        let pair = generate_scene(scene_seed, config)?;
        let names = [
            format!("scene_{i:04}_pan.sipr"),
            format!("scene_{i:04}_ms.sipr"),
            format!("scene_{i:04}_offsets.sipr"),
        ];
        let quantize = |t| SiprRaster::from_tensor(t, BitDepth::Eleven).map_err(|e| Error::format(out, e.to_string()));
        quantize(&pair.pan)?.write(&out.join(&names[0]))?;
        quantize(&pair.ms)?.write(&out.join(&names[1]))?;
        pair.gt_offsets.to_raster().write(&out.join(&names[2]))?;
        let [pan_path, ms_path, gt] = names;
        entries.push(ManifestEntry {
            pan_path,
            ms_path,
            meta: EntryMeta {
                scene: pair.meta,
                gt_offset_path: Some(gt),
            },
        });
    }
    let manifest = Manifest {
        root: out.to_path_buf(),
        entries,
    };
    manifest.save(&out.join("manifest.json"))?;
    Ok(manifest)
}
