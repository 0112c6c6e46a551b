use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::features::{condition_vector, encode_records, raw_sequence};
use super::Conditioning;
use crate::diffusion::{diffusion_train_step, make_schedule, NoiseSchedule};
use crate::error::{Error, Result};
use crate::geom::{Panorama, HORIZON, POSE_DIM};
use crate::memory::DEFAULT_MAX_RANGE_M;
use crate::nn::{
    adam_step, clip_grad_norm, vae_forward_backward, semantic_targets, AdamConfig, AdamState, Denoiser, DenoiserConfig,
    NormStats, ParamStore, Vae, VaeConfig, VaeLossWeights, VaeNoise, LATENT_DIM,
};
use crate::scene::{mix_seed, Dataset, DatasetRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct VaeTrainConfig {
    pub hidden: usize,
    pub use_semantic: bool,
    pub max_range_m: f64,
    pub steps: u64,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub log_every: u64,
    pub weights: VaeLossWeights,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            use_semantic: true,
            max_range_m: DEFAULT_MAX_RANGE_M,
            steps: 2000,
            batch: 32,
            lr: 1e-3,
            seed: 0,
            log_every: 100,
            weights: VaeLossWeights::default(),
        }
    }
}

/// Trained (or in-training) VAE with optimizer state; the unit stored in a VAE checkpoint.
#[derive(Debug, Clone)]
pub struct VaeModel {
    pub vae: Vae,
    pub params: ParamStore,
    pub adam: AdamState,
    pub step: u64,
}

impl VaeModel {
    pub fn new(cfg: VaeConfig, seed: u64) -> Self {
        let mut params = ParamStore::new();
        let vae = Vae::new(cfg, &mut params, "vae", &mut ChaCha8Rng::seed_from_u64(seed));
        let adam = AdamState::new(params.len());
        Self { vae, params, adam, step: 0 }
    }

    /// Rebinds loaded parameters to a freshly built network of the same layout.
    pub fn from_parts(cfg: VaeConfig, params: ParamStore, adam: AdamState, step: u64) -> Result<Self> {
        let fresh = Self::new(cfg, 0);
        if !fresh.params.same_layout(&params) || adam.m.len() != params.len() {
            return Err(Error::Format("VAE parameters do not match the stored configuration".into()));
        }
        Ok(Self { vae: fresh.vae, params, adam, step })
    }
}

/// Every panorama the VAE trains on: current and future visual memories.
pub fn vae_panoramas(ds: &Dataset) -> Vec<&Panorama> {
    ds.records.iter().flat_map(|r| std::iter::once(&r.vm).chain(&r.future_vm)).collect()
}

/// Trains until `cfg.steps` total steps. Each step draws from its own seeded stream,
/// so a resumed run matches an uninterrupted one.
pub fn train_vae(ds: &Dataset, cfg: &VaeTrainConfig, resume: Option<VaeModel>) -> Result<VaeModel> {
    let panos = vae_panoramas(ds);
    if panos.is_empty() {
        return Err(Error::Domain("no panoramas to train the VAE on".into()));
    }
    if cfg.batch == 0 {
        return Err(Error::Config("VAE batch must be at least 1".into()));
    }
    let vcfg = VaeConfig {
        hidden: cfg.hidden,
        use_semantic: cfg.use_semantic,
        max_range_m: cfg.max_range_m,
        ..VaeConfig::new(ds.pano_width, ds.pano_height)
    };
    let mut model = match resume {
        Some(m) if m.vae.cfg == vcfg => m,
        Some(m) => {
            return Err(Error::Config(format!("checkpoint VAE config {:?} differs from {vcfg:?}", m.vae.cfg)));
        }
        None => VaeModel::new(vcfg, cfg.seed),
    };
    let adam_cfg = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut running = 0.0;
    while model.step < cfg.steps {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, model.step, 0x7661]));
        let batch: Vec<&Panorama> = (0..cfg.batch).map(|_| panos[rng.gen_range(0..panos.len())]).collect();
        let x = model.vae.batch_input(&batch)?;
        let classes = semantic_targets(&batch);
        let noise = VaeNoise::sample(cfg.batch, vcfg.latent, &mut rng);
        model.params.zero_grad();
        let parts = vae_forward_backward(&model.vae, &mut model.params, &x, &classes, &noise, &cfg.weights, true);
        if !parts.total.is_finite() {
            return Err(Error::NonFinite(format!("VAE loss {parts:?} at step {}", model.step)));
        }
        adam_step(&mut model.params, &mut model.adam, &adam_cfg)?;
        model.step += 1;
        running += parts.total;
        if cfg.log_every > 0 && model.step % cfg.log_every == 0 {
            log::info!("vae step {} loss {:.5}", model.step, running / cfg.log_every as f64);
            running = 0.0;
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionTrainConfig {
    pub denoiser: DenoiserConfig,
    pub conditioning: Conditioning,
    pub beta_start: f64,
    pub beta_end: f64,
    pub steps: u64,
    pub batch: usize,
    pub lr: f64,
    /// Probability of zeroing a sample's whole condition during training.
    pub cond_dropout: f64,
    pub grad_clip: f64,
    pub seed: u64,
    pub log_every: u64,
}

impl Default for DiffusionTrainConfig {
    fn default() -> Self {
        Self {
            denoiser: DenoiserConfig::default(),
            conditioning: Conditioning::Full,
            beta_start: 1e-4,
            beta_end: 0.02,
            steps: 3000,
            batch: 32,
            lr: 1e-3,
            cond_dropout: 0.1,
            grad_clip: 1.0,
            seed: 0,
            log_every: 100,
        }
    }
}

/// Denoiser, normalization and optimizer state; the unit stored in a diffusion checkpoint.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    pub net: Denoiser,
    pub conditioning: Conditioning,
    pub beta_start: f64,
    pub beta_end: f64,
    pub future_vm_stride: usize,
    pub seq_norm: NormStats,
    pub past_norm: NormStats,
    pub params: ParamStore,
    pub adam: AdamState,
    pub step: u64,
}

impl DiffusionModel {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        cfg: DenoiserConfig,
        conditioning: Conditioning,
        betas: (f64, f64),
        future_vm_stride: usize,
        norms: (NormStats, NormStats),
        params: Option<ParamStore>,
        adam: Option<AdamState>,
        step: u64,
        seed: u64,
    ) -> Result<Self> {
        let mut fresh = ParamStore::new();
        let net = Denoiser::new(cfg, &mut fresh, "unet", &mut ChaCha8Rng::seed_from_u64(seed))?;
        let params = match params {
            Some(p) if p.same_layout(&fresh) => p,
            Some(_) => return Err(Error::Format("denoiser parameters do not match the stored configuration".into())),
            None => fresh,
        };
        let adam = adam.unwrap_or_else(|| AdamState::new(params.len()));
        if adam.m.len() != params.len() {
            return Err(Error::Format("optimizer state does not match the parameters".into()));
        }
        let (seq_norm, past_norm) = norms;
        if seq_norm.width() != cfg.feature_width() || past_norm.width() != cfg.pose_dim {
            return Err(Error::Shape("normalization widths do not match the denoiser".into()));
        }
        make_schedule(cfg.timesteps, betas.0, betas.1)?;
        Ok(Self {
            net,
            conditioning,
            beta_start: betas.0,
            beta_end: betas.1,
            future_vm_stride,
            seq_norm,
            past_norm,
            params,
            adam,
            step,
        })
    }

    pub fn schedule(&self) -> NoiseSchedule {
        make_schedule(self.net.cfg.timesteps, self.beta_start, self.beta_end).expect("validated at construction")
    }

    pub fn condition(&self, record: &DatasetRecord, vm_latent: &[f64]) -> Result<Vec<f64>> {
        condition_vector(record, vm_latent, &self.past_norm, &self.seq_norm, self.net.cfg.past_len, self.conditioning)
    }
}

/// Normalized training tensors: `seqs` is `[N·L, F]`, `conds` is `[N, C]`.
#[derive(Debug, Clone)]
pub struct DiffusionData {
    pub seqs: Array2<f64>,
    pub conds: Array2<f64>,
    pub seq_norm: NormStats,
    pub past_norm: NormStats,
}

impl DiffusionData {
    pub fn len(&self) -> usize {
        self.conds.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.conds.nrows() == 0
    }
}

/// Encodes every record with the frozen VAE and normalizes. Normalization is
/// fitted here unless `norms` are supplied.
pub fn prepare_diffusion_data(
    ds: &Dataset,
    vae: &VaeModel,
    cfg: &DenoiserConfig,
    conditioning: Conditioning,
    norms: Option<(NormStats, NormStats)>,
) -> Result<DiffusionData> {
    if cfg.seq_len != HORIZON || cfg.pose_dim != POSE_DIM || cfg.past_len > HORIZON {
        return Err(Error::Config(format!("denoiser config {cfg:?} does not fit {HORIZON}-step records")));
    }
    if cfg.latent_dim != vae.vae.cfg.latent {
        return Err(Error::Config(format!(
            "denoiser latent {} differs from the VAE latent {}",
            cfg.latent_dim, vae.vae.cfg.latent
        )));
    }
    if ds.records.is_empty() {
        return Err(Error::Domain("no records to train on".into()));
    }
    let refs: Vec<&DatasetRecord> = ds.records.iter().collect();
    let enc = encode_records(&vae.vae, &vae.params, &refs)?;
    let raw: Vec<Array2<f64>> = refs
        .iter()
        .zip(&enc)
        .map(|(r, e)| raw_sequence(r, e, ds.future_vm_stride, conditioning))
        .collect::<Result<_>>()?;
    let (seq_norm, past_norm) = match norms {
        Some(n) => n,
        None => {
            let width = cfg.feature_width();
            let seq_norm = NormStats::fit(width, raw.iter().flat_map(|s| s.as_slice().expect("standard").chunks(width)))?;
            let past: Vec<[f64; POSE_DIM]> = refs.iter().flat_map(|r| r.past.features()).collect();
            let past_norm = NormStats::fit(POSE_DIM, past.iter().map(|f| f.as_slice()))?;
            (seq_norm, past_norm)
        }
    };
    let mut seqs = Array2::zeros((refs.len() * HORIZON, cfg.feature_width()));
    let mut conds = Array2::zeros((refs.len(), cfg.cond_width()));
    for (i, (r, (s, e))) in refs.iter().zip(raw.iter().zip(&enc)).enumerate() {
        let mut s = s.clone();
        seq_norm.normalize(s.as_slice_mut().expect("standard"));
        seqs.slice_mut(ndarray::s![i * HORIZON..(i + 1) * HORIZON, ..]).assign(&s);
        let c = condition_vector(r, &e.vm, &past_norm, &seq_norm, cfg.past_len, conditioning)?;
        conds.row_mut(i).assign(&ndarray::ArrayView1::from(&c));
    }
    Ok(DiffusionData { seqs, conds, seq_norm, past_norm })
}

/// Trains the denoiser against a frozen VAE until `cfg.steps` total steps.
pub fn train_diffusion(
    ds: &Dataset,
    vae: &VaeModel,
    cfg: &DiffusionTrainConfig,
    resume: Option<DiffusionModel>,
) -> Result<DiffusionModel> {
    if cfg.batch == 0 || !(0.0..1.0).contains(&cfg.cond_dropout) {
        return Err(Error::Config("diffusion batch must be ≥ 1 and dropout in [0, 1)".into()));
    }
    if cfg.denoiser.latent_dim != LATENT_DIM {
        log::warn!("denoiser latent width {} differs from the default {LATENT_DIM}", cfg.denoiser.latent_dim);
    }
    let norms = resume.as_ref().map(|m| (m.seq_norm.clone(), m.past_norm.clone()));
    let data = prepare_diffusion_data(ds, vae, &cfg.denoiser, cfg.conditioning, norms)?;
    let mut model = match resume {
        Some(m) => {
            if m.net.cfg != cfg.denoiser || m.conditioning != cfg.conditioning {
                return Err(Error::Config("checkpoint model config differs from the run config".into()));
            }
            m
        }
        None => DiffusionModel::from_parts(
            cfg.denoiser,
            cfg.conditioning,
            (cfg.beta_start, cfg.beta_end),
            ds.future_vm_stride,
            (data.seq_norm.clone(), data.past_norm.clone()),
            None,
            None,
            0,
            cfg.seed,
        )?,
    };
    let sched = model.schedule();
    let adam_cfg = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let (l, f, dc) = (HORIZON, cfg.denoiser.feature_width(), cfg.denoiser.cond_width());
    let mut x0 = Array2::zeros((cfg.batch * l, f));
    let mut cond = Array2::zeros((cfg.batch, dc));
    let mut running = 0.0;
    while model.step < cfg.steps {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, model.step, 0x6466]));
        for b in 0..cfg.batch {
            let i = rng.gen_range(0..data.len());
            x0.slice_mut(ndarray::s![b * l..(b + 1) * l, ..])
                .assign(&data.seqs.slice(ndarray::s![i * l..(i + 1) * l, ..]));
            if rng.gen_bool(cfg.cond_dropout) {
                cond.row_mut(b).fill(0.0);
            } else {
                cond.row_mut(b).assign(&data.conds.row(i));
            }
        }
        model.params.zero_grad();
        let loss = diffusion_train_step(&model.net, &mut model.params, &x0, &cond, &sched, &mut rng)?;
        if cfg.grad_clip > 0.0 {
            clip_grad_norm(&mut model.params, cfg.grad_clip);
        }
        adam_step(&mut model.params, &mut model.adam, &adam_cfg)?;
        model.step += 1;
        running += loss;
        if cfg.log_every > 0 && model.step % cfg.log_every == 0 {
            log::info!("diffusion step {} loss {:.5}", model.step, running / cfg.log_every as f64);
            running = 0.0;
        }
    }
    Ok(model)
}
