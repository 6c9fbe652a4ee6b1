use std::path::Path;

use pansharp_tensor::{Tape, Tensor, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::sipr::{BitDepth, SiprRaster};
use crate::data::{random_crop_pair, Dataset};
use crate::error::{Error, Result};
use crate::losses::{total_loss, LossBreakdown};
use crate::model::Network;
use crate::trainer::adamw::{AdamW, OptimizerState};
use crate::trainer::checkpoint::Checkpoint;
use crate::trainer::config::TrainConfig;
use crate::trainer::log::LossLog;

/// Stream separation between weight initialisation and batch sampling.
const SAMPLER_STREAM: u64 = 0x5eed_ba7c;

/// One mini-batch of co-registered crops.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub ms: Tensor,
    pub pan: Tensor,
}

impl Batch {
    /// Write each item as SIPR rasters under `dir`; used for diagnostics.
    pub fn dump(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for b in 0..self.ms.shape().batch() {
            for (kind, t) in [("ms", &self.ms), ("pan", &self.pan)] {
                let item = t.batch_item(b);
                // Non-finite samples clamp to the range ends.
                let item = item.map(|v| if v.is_nan() { 0.0 } else { v });
                let path = dir.join(format!("{stem}_{b}_{kind}.sipr"));
                SiprRaster::from_tensor(&item, BitDepth::Sixteen)
                    .map_err(|e| Error::format(&path, e.to_string()))?
                    .write(&path)?;
            }
        }
        Ok(())
    }
}

pub struct Trainer {
    config: TrainConfig,
    network: Network,
    optimizer: AdamW,
    state: OptimizerState,
    rng: ChaCha8Rng,
    iteration: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let network = Network::new(config.model.clone(), config.seed)?;
        let state = OptimizerState::new(network.params());
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ SAMPLER_STREAM);
        Ok(Trainer {
            config,
            network,
            optimizer: AdamW::default(),
            state,
            rng,
            iteration: 0,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        ckpt.config.validate()?;
        let mut network = Network::new(ckpt.config.model.clone(), ckpt.config.seed)?;
        network.params_mut().load_from(&ckpt.params)?;
        Ok(Trainer {
            config: ckpt.config,
            network,
            optimizer: AdamW::default(),
            state: ckpt.optimizer,
            rng: ckpt.rng,
            iteration: ckpt.iteration,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            iteration: self.iteration,
            params: self.network.params().clone(),
            optimizer: self.state.clone(),
            rng: self.rng.clone(),
        }
    }

    pub fn sample_batch(&mut self, data: &Dataset) -> Result<Batch> {
        if data.is_empty() {
            return Err(Error::Config("empty dataset".into()));
        }
        let mut ms = Vec::with_capacity(self.config.batch);
        let mut pan = Vec::with_capacity(self.config.batch);
        for _ in 0..self.config.batch {
            let scene = &data.scenes[self.rng.gen_range(0..data.len())];
            let (crop, _) = random_crop_pair(scene, self.config.crop, &mut self.rng)?;
            ms.push(crop.ms);
            pan.push(crop.pan);
        }
        Ok(Batch {
            ms: Tensor::stack(&ms)?,
            pan: Tensor::stack(&pan)?,
        })
    }

    /// Loss and parameter gradients for one batch at the current parameters.
    pub fn loss_and_grads(&self, batch: &Batch) -> Result<(LossBreakdown, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let p = self.network.params().bind(&mut tape, true);
        let ms = tape.constant(batch.ms.clone());
        let pan = tape.constant(batch.pan.clone());
        let out = self.network.forward(&mut tape, &p, ms, pan)?;
        let terms = total_loss(&mut tape, &out, ms, pan, self.config.variant().uses_sis(), &self.config.loss)?;
        let mut grads = tape.backward(terms.total)?;
        let grads = p
            .vars()
            .iter()
            .map(|&v| grads.take(v).expect("every parameter is a leaf"))
            .collect::<Vec<_>>();
        Ok((terms.breakdown, grads))
    }

    /// Run one optimisation step. A non-finite value anywhere in the step
    /// writes the batch under `dump_dir` and fails with [`Error::NonFiniteLoss`].
    pub fn step(&mut self, data: &Dataset, dump_dir: &Path) -> Result<LossBreakdown> {
        let batch = self.sample_batch(data)?;
        let iter = self.iteration + 1;
        let non_finite = |batch: &Batch| -> Error {
            let stem = format!("nonfinite_iter{iter}");
            match batch.dump(dump_dir, &stem) {
                Ok(()) => Error::NonFiniteLoss {
                    iter,
                    dump: dump_dir.join(stem),
                },
                Err(e) => e,
            }
        };
        let (losses, grads) = match self.loss_and_grads(&batch) {
            Ok(v) => v,
            Err(Error::Tensor(TensorError::NonFinite { .. })) => return Err(non_finite(&batch)),
            Err(e) => return Err(e),
        };
        if !losses.l_total.is_finite() || grads.iter().any(|g| !g.all_finite()) {
            return Err(non_finite(&batch));
        }
        let (lr, wd) = self.config.schedule(self.iteration);
        self.optimizer.step(self.network.params_mut(), &grads, &mut self.state, lr, wd)?;
        self.iteration = iter;
        Ok(losses)
    }

    /// Train until `until` iterations have completed, logging every step.
    /// `on_step` sees each iteration number and its losses.
    pub fn run(
        &mut self,
        data: &Dataset,
        until: u64,
        log: &mut LossLog,
        dump_dir: &Path,
        mut on_step: impl FnMut(u64, &LossBreakdown),
    ) -> Result<()> {
        while self.iteration < until {
            let losses = match self.step(data, dump_dir) {
                Ok(l) => l,
                Err(e) => {
                    log.flush()?;
                    return Err(e);
                }
            };
            log.record(self.iteration, &losses)?;
            if self.iteration.is_multiple_of(self.config.log_flush_every) {
                log.flush()?;
            }
            on_step(self.iteration, &losses);
        }
        log.flush()
    }
}
