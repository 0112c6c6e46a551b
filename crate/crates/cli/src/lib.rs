//! Subcommand implementations behind the `egonav` binary.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use egonav::diffusion::SamplerConfig;
use egonav::io::{
    dataset_violations, format_report, read_dataset, read_diffusion_checkpoint, read_predictions, read_vae_checkpoint,
    render_bev, write_dataset, write_diffusion_checkpoint, write_png, write_predictions, write_vae_checkpoint,
    PredictionFile, RunConfig,
};
use egonav::metrics::{bench_sampler, BenchReport, CollisionConfig};
use egonav::pipeline::{evaluate, mean_row, sample_records, train_diffusion, train_vae, DiffusionModel, VaeModel};
use egonav::scene::build_dataset;
use egonav::{Error, Result};

pub const BEV_SIZE_PX: u32 = 512;

/// Parses `"3,5-8,12"` into ascending unique ids.
pub fn parse_records(list: &str) -> Result<Vec<u32>> {
    let mut ids = std::collections::BTreeSet::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || Error::Config(format!("invalid record selector {part:?}"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                ids.extend(a..=b);
            }
            None => {
                ids.insert(part.parse().map_err(|_| bad())?);
            }
        }
    }
    if ids.is_empty() {
        return Err(Error::Config("empty record selection".into()));
    }
    Ok(ids.into_iter().collect())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn load_vae(path: &Path) -> Result<VaeModel> {
    if !path.exists() {
        return Err(Error::Path(format!("VAE checkpoint {} not found; run `train --stage vae` first", path.display())));
    }
    Ok(read_vae_checkpoint(path)?.0)
}

fn load_diffusion(path: &Path) -> Result<DiffusionModel> {
    if !path.exists() {
        return Err(Error::Path(format!(
            "diffusion checkpoint {} not found; run `train --stage diffusion` first",
            path.display()
        )));
    }
    Ok(read_diffusion_checkpoint(path)?.0)
}

/// Builds, writes and validates the dataset; returns a printable summary.
pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<String> {
    let ds = build_dataset(&cfg.scene_specs()?, &cfg.dataset_config()?)?;
    ensure_parent(out)?;
    write_dataset(out, &ds)?;
    let violations = dataset_violations(&read_dataset(out)?);
    if let Some(first) = violations.first() {
        return Err(Error::Format(format!("{} invariant violations, first: {first}", violations.len())));
    }
    let mut s = format!("{} records ({} walks skipped) -> {}\n", ds.records.len(), ds.skipped_walks, out.display());
    for (template, n) in ds.template_counts() {
        writeln!(s, "  {template}: {n}").expect("string write");
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Vae,
    Diffusion,
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vae" => Ok(Stage::Vae),
            "diffusion" => Ok(Stage::Diffusion),
            other => Err(Error::Config(format!("unknown stage {other:?}"))),
        }
    }
}

/// Trains one stage. With `resume`, continues from the checkpoint at `out` when it exists.
pub fn cmd_train(cfg: &RunConfig, stage: Stage, out: &Path, resume: bool) -> Result<String> {
    let ds = read_dataset(&cfg.paths.dataset)?;
    let echo = cfg.to_toml();
    ensure_parent(out)?;
    match stage {
        Stage::Vae => {
            let prior = if resume && out.exists() { Some(read_vae_checkpoint(out)?.0) } else { None };
            let from = prior.as_ref().map_or(0, |m| m.step);
            let m = train_vae(&ds, &cfg.vae_config(), prior)?;
            write_vae_checkpoint(out, &m, &echo)?;
            Ok(format!("vae trained steps {from}..{} -> {}\n", m.step, out.display()))
        }
        Stage::Diffusion => {
            let vae = load_vae(&cfg.paths.vae)?;
            let prior = if resume && out.exists() { Some(read_diffusion_checkpoint(out)?.0) } else { None };
            let from = prior.as_ref().map_or(0, |m| m.step);
            let m = train_diffusion(&ds, &vae, &cfg.diffusion_config()?, prior)?;
            write_diffusion_checkpoint(out, &m, &echo)?;
            Ok(format!("diffusion trained steps {from}..{} -> {}\n", m.step, out.display()))
        }
    }
}

/// Samples the selected records (all when `records` is `None`).
pub fn cmd_sample(cfg: &RunConfig, sampler: &SamplerConfig, records: Option<&[u32]>, out: &Path, decode: bool) -> Result<String> {
    let ds = read_dataset(&cfg.paths.dataset)?;
    let vae = load_vae(&cfg.paths.vae)?;
    let diff = load_diffusion(&cfg.paths.diffusion)?;
    let all: Vec<u32> = (0..ds.records.len() as u32).collect();
    let ids = records.unwrap_or(&all);
    let preds = sample_records(&ds, ids, &diff, &vae, sampler, decode)?;
    ensure_parent(out)?;
    let echo = format!("{}\n[resolved_sampler]\n# {sampler:?}\n", cfg.to_toml());
    write_predictions(out, &PredictionFile { config_echo: echo, records: preds })?;
    Ok(format!("{} records x {} samples -> {}\n", ids.len(), sampler.batch, out.display()))
}

/// Writes the CSV report and returns it.
pub fn cmd_eval(predictions: &Path, dataset: &Path, out: &Path) -> Result<String> {
    let preds = read_predictions(predictions)?;
    let ds = read_dataset(dataset)?;
    let rows = evaluate(&preds.records, &ds, &CollisionConfig::default())?;
    let csv = format_report(&rows, &mean_row(&rows)?);
    ensure_parent(out)?;
    egonav::io::atomic_write(out, csv.as_bytes())?;
    Ok(csv)
}

/// Times the configured sampler against full DDPM on the first record's condition.
pub fn cmd_bench(cfg: &RunConfig, sampler: &SamplerConfig, trials: usize) -> Result<BenchReport> {
    let ds = read_dataset(&cfg.paths.dataset)?;
    let vae = load_vae(&cfg.paths.vae)?;
    let diff = load_diffusion(&cfg.paths.diffusion)?;
    let record = ds.records.first().ok_or_else(|| Error::Domain("dataset has no records".into()))?;
    let vm = egonav::pipeline::encode_means(&vae.vae, &vae.params, &[&record.vm])?.row(0).to_vec();
    let cond = diff.condition(record, &vm)?;
    let cond = egonav::ndarray::Array2::from_shape_vec((1, cond.len()), cond).expect("row vector");
    let model = egonav::diffusion::DenoiserModel { net: &diff.net, params: &diff.params };
    bench_sampler(&model, &cond, (egonav::geom::HORIZON, diff.net.cfg.feature_width()), &diff.schedule(), sampler, trials)
}

/// Renders one record, with its predicted samples when a prediction file is given.
pub fn cmd_render(dataset: &Path, record: u32, predictions: Option<&Path>, out: &Path) -> Result<String> {
    let ds = read_dataset(dataset)?;
    let rec = ds
        .records
        .get(record as usize)
        .ok_or_else(|| Error::Index(format!("record {record} not in a dataset of {}", ds.records.len())))?;
    let samples = match predictions {
        Some(p) => {
            let file = read_predictions(p)?;
            let by_id: BTreeMap<u32, _> = file.records.into_iter().map(|r| (r.record_id, r.samples)).collect();
            by_id.get(&record).cloned().ok_or_else(|| Error::Index(format!("no predictions for record {record}")))?
        }
        None => Vec::new(),
    };
    ensure_parent(out)?;
    write_png(out, &render_bev(rec, &samples, BEV_SIZE_PX))?;
    Ok(format!("record {record} with {} samples -> {}\n", samples.len(), out.display()))
}
