use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pansharp_core::data::{generate_dataset, load_scene, Dataset, Manifest, SiprRaster};
use pansharp_core::evaluate::{compare, evaluate_scene, Protocol};
use pansharp_core::fam::argmax_offsets;
use pansharp_core::gradcheck::{self, Module};
use pansharp_core::metrics::{aggregate, MetricsReport};
use pansharp_core::trainer::{Checkpoint, LossLog, Trainer};
use pansharp_core::Network;
use pansharp_tensor::gradcheck::GradCheckConfig;

use crate::config::{required, EvalRun, ExportRun, GenDataRun, GradcheckRun, ProtocolChoice, SharpenRun, TrainRun};
use crate::failure::Failure;
use crate::ppm;

type Outcome = Result<(), Failure>;

fn data_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Outcome {
    std::fs::write(path, bytes).map_err(|e| data_err(path, e))
}

fn load_network(path: &Path) -> Result<Network, Failure> {
    let ckpt = Checkpoint::load(path)?;
    Ok(Trainer::from_checkpoint(ckpt)?.network().clone())
}

pub fn gen_data(run: &GenDataRun) -> Outcome {
    let out = required(&run.out, "out")?;
    let manifest = generate_dataset(out, run.scenes, run.seed, &run.scene)?;
    println!("wrote {} scenes and manifest.json to {}", manifest.entries.len(), out.display());
    Ok(())
}

fn default_log(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".loss.csv");
    PathBuf::from(s)
}

pub fn train(run: &TrainRun, trainer: Option<Trainer>) -> Outcome {
    let data_path = required(&run.data, "data")?;
    let out = required(&run.out, "out")?;
    if run.checkpoint_every == 0 {
        return Err(Failure::Usage("checkpoint_every must be positive".into()));
    }
    let data = Dataset::load(data_path)?;
    let log_path = run.log.clone().unwrap_or_else(|| default_log(out));
    let (mut trainer, mut log) = match trainer {
        Some(t) => (t, LossLog::append(&log_path)?),
        None => (Trainer::new(run.train.clone())?, LossLog::create(&log_path)?),
    };
    let total = trainer.config().total_iters;
    let dump = out.parent().unwrap_or(Path::new(".")).join("nonfinite");
    while trainer.iteration() < total {
        let until = (trainer.iteration() / run.checkpoint_every + 1) * run.checkpoint_every;
        trainer.run(&data, until.min(total), &mut log, &dump, |iter, l| {
            if iter % 100 == 0 || iter == total {
                eprintln!(
                    "iter {iter:>7}  total {:.6}  sis_fam {:.6}  sis_psm {:.6}  edge_fam {:.6}  edge_psm {:.6}",
                    l.l_total, l.l_sis_fam, l.l_sis_psm, l.l_edge_fam, l.l_edge_psm
                );
            }
        })?;
        trainer.checkpoint().save(out)?;
    }
    println!("checkpoint {} at iteration {total}; loss log {}", out.display(), log_path.display());
    Ok(())
}

/// Resolve the trainer a `train --resume` run continues from.
pub fn resume(run: &mut TrainRun) -> Result<Option<Trainer>, Failure> {
    let Some(path) = &run.resume else { return Ok(None) };
    let ckpt = Checkpoint::load(path)?;
    run.train = ckpt.config.clone();
    Ok(Some(Trainer::from_checkpoint(ckpt)?))
}

fn read_raster(path: &Path, bands: u32) -> Result<SiprRaster, Failure> {
    let r = SiprRaster::read(path)?;
    if r.channels() != bands {
        return Err(data_err(path, format!("expected {bands} band(s), found {}", r.channels())));
    }
    Ok(r)
}

pub fn sharpen(run: &SharpenRun) -> Outcome {
    let net = load_network(required(&run.ckpt, "ckpt")?)?;
    if net.fam().is_none() && (run.dump_aligned_ms.is_some() || run.dump_pwopm_argmax.is_some()) {
        return Err(Failure::Usage(format!("variant {} has no alignment module to dump", net.variant())));
    }
    let pan = read_raster(required(&run.pan, "pan")?, 1)?;
    let ms = read_raster(required(&run.ms, "ms")?, 3)?;
    let depth = ms.depth();
    let result = net.sharpen(&ms.to_tensor(), &pan.to_tensor())?;
    let save = |t: &pansharp_tensor::Tensor, path: &Path| -> Outcome {
        SiprRaster::from_tensor(t, depth).map_err(|e| data_err(path, e))?.write(path)?;
        Ok(())
    };
    let out = required(&run.out, "out")?;
    save(&result.ps, out)?;
    if let (Some(path), Some(aligned)) = (&run.dump_aligned_ms, &result.aligned_ms) {
        save(aligned, path)?;
    }
    if let (Some(path), Some(pwopm)) = (&run.dump_pwopm_argmax, &result.pwopm) {
        argmax_offsets(pwopm)?.to_raster().write(path)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn protocols(choice: ProtocolChoice) -> Vec<Protocol> {
    match choice {
        ProtocolChoice::Misaligned => vec![Protocol::Misaligned],
        ProtocolChoice::Aligned => vec![Protocol::Aligned],
        ProtocolChoice::Both => vec![Protocol::Misaligned, Protocol::Aligned],
    }
}

fn scene_name(entry_path: &str) -> String {
    let stem = Path::new(entry_path).file_stem().and_then(|s| s.to_str()).unwrap_or(entry_path);
    stem.strip_suffix("_ms").unwrap_or(stem).to_string()
}

pub fn eval(run: &EvalRun) -> Outcome {
    let out = required(&run.out, "out")?;
    let direct = run.candidate.is_some() || run.reference.is_some();
    let report = if direct {
        if run.ckpt.is_some() || run.data.is_some() {
            return Err(Failure::Usage("--candidate/--reference cannot be combined with --ckpt/--data".into()));
        }
        let cand_path = required(&run.candidate, "candidate")?;
        let cand = SiprRaster::read(cand_path)?.to_tensor();
        let reference = SiprRaster::read(required(&run.reference, "reference")?)?.to_tensor();
        if cand.shape() != reference.shape() {
            return Err(data_err(cand_path, format!("shape {} differs from reference {}", cand.shape(), reference.shape())));
        }
        let m = compare(&scene_name(&cand_path.to_string_lossy()), "reference", &cand, &reference);
        let agg = aggregate("reference", std::slice::from_ref(&m));
        MetricsReport {
            images: vec![m],
            aggregates: vec![agg],
        }
    } else {
        let net = load_network(required(&run.ckpt, "ckpt")?)?;
        let manifest = Manifest::load(required(&run.data, "data")?)?;
        let protocols = protocols(run.protocol);
        let mut images = Vec::new();
        for entry in &manifest.entries {
            let scene = load_scene(&manifest, entry)?;
            images.extend(evaluate_scene(&net, &scene, &scene_name(&entry.ms_path), &protocols)?);
        }
        let aggregates = protocols
            .iter()
            .map(|p| {
                let rows: Vec<_> = images.iter().filter(|m| m.protocol == p.as_str()).cloned().collect();
                aggregate(p.as_str(), &rows)
            })
            .collect();
        MetricsReport { images, aggregates }
    };
    let jsonl = report.to_jsonl().map_err(|e| data_err(out, e))?;
    write_file(out, jsonl.as_bytes())?;
    let csv = run.csv.clone().unwrap_or_else(|| out.with_extension("csv"));
    write_file(&csv, report.to_csv().as_bytes())?;
    for a in &report.aggregates {
        println!("{}", serde_json::to_string(a).expect("aggregates serialize"));
    }
    Ok(())
}

pub fn gradcheck(run: &GradcheckRun) -> Outcome {
    let module: Module = run.module.parse()?;
    if run.seeds.is_empty() {
        return Err(Failure::Usage("at least one seed is required".into()));
    }
    let mut worst: BTreeMap<String, (f64, bool)> = BTreeMap::new();
    let mut order = Vec::new();
    for &seed in &run.seeds {
        for r in gradcheck::run(module, seed, &GradCheckConfig::default())? {
            let entry = worst.entry(r.name.clone()).or_insert_with(|| {
                order.push(r.name.clone());
                (0.0, true)
            });
            entry.0 = entry.0.max(r.max_rel_error);
            entry.1 &= r.passed();
            if !r.passed() {
                eprintln!(
                    "seed {seed} {}: max rel {:.3e}, checked {}, branch skips {}, worst {:?}",
                    r.name, r.max_rel_error, r.checked, r.branch_skips, r.worst
                );
            }
        }
    }
    let mut failed = 0;
    for name in &order {
        let (err, ok) = worst[name];
        failed += usize::from(!ok);
        println!("{:<44} {:.3e}  {}", name, err, if ok { "ok" } else { "FAIL" });
    }
    let seeds: Vec<String> = run.seeds.iter().map(u64::to_string).collect();
    if failed > 0 {
        return Err(Failure::Verification(format!("{failed} of {} checks failed", order.len())));
    }
    println!("all {} checks passed on seeds {}", order.len(), seeds.join(","));
    Ok(())
}

pub fn export_ppm(run: &ExportRun) -> Outcome {
    let input = required(&run.input, "input")?;
    let out = required(&run.out, "out")?;
    let bytes = ppm::encode(&SiprRaster::read(input)?).map_err(|e| data_err(input, e))?;
    write_file(out, &bytes)?;
    println!("wrote {}", out.display());
    Ok(())
}
