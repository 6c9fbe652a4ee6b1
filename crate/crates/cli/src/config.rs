//! Per-subcommand run configurations, resolved as defaults < JSON file < flags.

use std::path::{Path, PathBuf};

use pansharp_core::data::SceneConfig;
use pansharp_core::trainer::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::failure::Failure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataRun {
    pub out: Option<PathBuf>,
    pub scenes: usize,
    pub seed: u64,
    pub scene: SceneConfig,
}

impl Default for GenDataRun {
    fn default() -> Self {
        GenDataRun {
            out: None,
            scenes: 200,
            seed: 0,
            scene: SceneConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRun {
    pub data: Option<PathBuf>,
    /// Checkpoint path; rewritten every `checkpoint_every` iterations and at the end.
    pub out: Option<PathBuf>,
    /// Loss log; `<out>.loss.csv` when unset.
    pub log: Option<PathBuf>,
    pub checkpoint_every: u64,
    /// Continue from this checkpoint, whose configuration replaces `train`.
    pub resume: Option<PathBuf>,
    pub train: TrainConfig,
}

impl Default for TrainRun {
    fn default() -> Self {
        TrainRun {
            data: None,
            out: None,
            log: None,
            checkpoint_every: 1000,
            resume: None,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharpenRun {
    pub ckpt: Option<PathBuf>,
    pub pan: Option<PathBuf>,
    pub ms: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dump_aligned_ms: Option<PathBuf>,
    pub dump_pwopm_argmax: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolChoice {
    Misaligned,
    Aligned,
    #[default]
    Both,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalRun {
    pub ckpt: Option<PathBuf>,
    pub data: Option<PathBuf>,
    /// JSONL report path.
    pub out: Option<PathBuf>,
    /// CSV report path; the JSONL path with a `.csv` extension when unset.
    pub csv: Option<PathBuf>,
    pub protocol: ProtocolChoice,
    /// Direct comparison of two rasters, without a checkpoint.
    pub candidate: Option<PathBuf>,
    pub reference: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckRun {
    pub module: String,
    pub seeds: Vec<u64>,
}

impl Default for GradcheckRun {
    fn default() -> Self {
        GradcheckRun {
            module: "all".into(),
            seeds: vec![1, 2],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportRun {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Recursively overlay `top` on `base`. Objects merge key by key; anything
/// else replaces.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Flag overrides as a JSON object; unset flags are simply absent.
#[derive(Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    pub fn set<T: Serialize>(&mut self, path: &str, value: Option<T>) -> &mut Self {
        let Some(value) = value else { return self };
        let value = serde_json::to_value(value).expect("flag values serialize");
        let mut keys = path.split('.').peekable();
        let mut node = &mut self.0;
        while let Some(k) = keys.next() {
            if keys.peek().is_none() {
                node.insert(k.to_string(), value);
                break;
            }
            node = node
                .entry(k)
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("override paths do not collide");
        }
        self
    }
}

/// Build a run configuration from its defaults, an optional JSON file and the flags.
pub fn resolve<T>(file: Option<&Path>, flags: Overrides) -> Result<T, Failure>
where
    T: Default + Serialize + DeserializeOwned,
{
    let mut value = serde_json::to_value(T::default()).expect("defaults serialize");
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        let layer: Value =
            serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        // Parse the file on its own first so unknown keys are reported against it.
        serde_json::from_value::<T>(layer.clone())
            .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        merge(&mut value, layer);
    }
    merge(&mut value, Value::Object(flags.0));
    serde_json::from_value(value).map_err(|e| Failure::Usage(format!("invalid flag value: {e}")))
}

/// Print the configuration a run will use.
pub fn announce<T: Serialize>(command: &str, config: &T) {
    let json = serde_json::to_string(config).expect("configs serialize");
    println!("{command} config: {json}");
}

pub fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Failure> {
    value.as_deref().ok_or_else(|| Failure::Usage(format!("missing required --{flag}")))
}
