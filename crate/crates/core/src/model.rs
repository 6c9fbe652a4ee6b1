//! The full network and its ablation variants.

use std::fmt;
use std::str::FromStr;

use pansharp_tensor::{Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fam::{check_pan_scale, Fam, FamOutput, SCALE};
use crate::params::{Bound, ParamStore};
use crate::psm::Psm;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Feature alignment and both loss families.
    #[default]
    Full,
    /// Spectral shift-invariant terms removed from the objective.
    NoSis,
    /// Raw MS goes straight into the sharpening stage.
    NoFam,
    /// Alignment applied to MS pixels instead of learned features.
    Pam,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoSis, Variant::NoFam, Variant::Pam];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSis => "no_sis",
            Variant::NoFam => "no_fam",
            Variant::Pam => "pam",
        }
    }

    pub fn has_fam(self) -> bool {
        self != Variant::NoFam
    }

    pub fn uses_sis(self) -> bool {
        self != Variant::NoSis
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}; expected full, no_sis, no_fam or pam")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Width of the MS feature extractor.
    pub ms_features: usize,
    pub align_width: usize,
    pub psm_width: usize,
    pub psm_post_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Full,
            ms_features: 16,
            align_width: 32,
            psm_width: 32,
            psm_post_width: 8,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let widths = [self.ms_features, self.align_width, self.psm_width, self.psm_post_width];
        if widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    config: ModelConfig,
    params: ParamStore,
    fam: Option<Fam>,
    psm: Psm,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    pub fam: Option<FamOutput>,
    pub pan_s2c: Var,
    pub ps: Var,
}

/// Inference results, clamped to `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Sharpened {
    pub ps: Tensor,
    pub aligned_ms: Option<Tensor>,
    pub pwopm: Option<Tensor>,
}

impl Network {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let fam = match config.variant {
            Variant::NoFam => None,
            Variant::Pam => Some(Fam::new(&mut params, config.align_width, None, &mut rng)?),
            Variant::Full | Variant::NoSis => Some(Fam::new(
                &mut params,
                config.align_width,
                Some(config.ms_features),
                &mut rng,
            )?),
        };
        let psm = Psm::new(&mut params, config.psm_width, config.psm_post_width, &mut rng)?;
        Ok(Network {
            config,
            params,
            fam,
            psm,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn fam(&self) -> Option<&Fam> {
        self.fam.as_ref()
    }

    pub fn psm(&self) -> &Psm {
        &self.psm
    }

    /// Record the forward graph. `ms` is `[b, H, W, 3]`, `pan` is `[b, 4H, 4W, 1]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, ms: Var, pan: Var) -> Result<ForwardOutput> {
        let (fam, pan_s2c, psm_in) = match &self.fam {
            Some(fam) => {
                let out = fam.forward(tape, p, ms, pan)?;
                (Some(out), out.pan_s2c, out.aligned_ms)
            }
            None => {
                check_pan_scale(tape, ms, pan)?;
                (None, tape.space_to_channel(pan, SCALE)?, ms)
            }
        };
        let ps = self.psm.forward(tape, p, psm_in, pan_s2c, pan)?;
        Ok(ForwardOutput { fam, pan_s2c, ps })
    }

    pub fn sharpen(&self, ms: &Tensor, pan: &Tensor) -> Result<Sharpened> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let msv = tape.constant(ms.clone());
        let panv = tape.constant(pan.clone());
        let out = self.forward(&mut tape, &p, msv, panv)?;
        Ok(Sharpened {
            ps: tape.value(out.ps).clamp(0.0, 1.0),
            aligned_ms: out.fam.map(|f| tape.value(f.aligned_ms).clamp(0.0, 1.0)),
            pwopm: out.fam.map(|f| tape.value(f.pwopm).clone()),
        })
    }
}
