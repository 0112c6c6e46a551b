//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any criterion fails.

use std::collections::BTreeSet;
use std::time::Instant;

use egonav::diffusion::*;
use egonav::geom::*;
use egonav::io::{encode_dataset, encode_diffusion_checkpoint, encode_png, encode_predictions, encode_vae_checkpoint, render_bev, PredictionFile};
use egonav::memory::{Frame, MemoryBuffer};
use egonav::metrics::*;
use egonav::nalgebra::Vector3;
use egonav::ndarray::Array2;
use egonav::nn::*;
use egonav::pipeline::*;
use egonav::scene::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

// Sampler oracle.
const ORACLE_MEAN: f64 = 3.0;
const ORACLE_VAR: f64 = 0.25;
const ORACLE_SAMPLES: usize = 10_000;
const ORACLE_MEAN_TOL: f64 = 0.05;
const ORACLE_VAR_REL_TOL: f64 = 0.10;
// Hybrid efficiency.
const EXPECTED_CALL_RATIO: f64 = 1000.0 / 30.0;
const MIN_SPEEDUP: f64 = 20.0;
const BENCH_TRIALS: usize = 3;
// Gradient checks.
const GRAD_STEP: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
// Mode coverage.
const MIN_FORK_RECORDS: usize = 2000;
const MIN_BRANCH_FRACTION: f64 = 0.20;
const HELD_OUT: usize = 20;
const MIN_SPLIT_RECORDS: usize = 15;
const SAMPLES_PER_RECORD: usize = 15;
// Collision metric.
const RANDOM_PAIRS: usize = 100;
const MIN_CLEAN_GT_FRACTION: f64 = 0.95;
// Visual memory.
const MIN_COVERAGE_RATIO: f64 = 2.5;
// Ablations.
const MAX_MARKOVIAN_DEGRADATION: f64 = 1.5;

// Fork testbed.
const TRAIN_SCENES: u64 = 150;
const TRAIN_STRIDE: usize = 40;
const HELD_OUT_STRIDE: usize = 10;
const HELD_OUT_SCENE_BASE: u64 = 1000;
const HELD_OUT_SCENES: u64 = 30;
const LATERAL_BRANCH_M: f64 = 0.5;
const HELD_OUT_MIN_LATERAL_M: f64 = 1.0;
const VAE_HIDDEN: usize = 128;
const VAE_STEPS: u64 = 1500;
const DENOISER_CHANNELS: usize = 16;
const DENOISER_STEPS: u64 = 3000;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn testbed_dataset_config(stride_steps: usize) -> DatasetConfig {
    DatasetConfig { walks_per_scene: 4, stride_steps, pano_width: 48, pano_height: 16, ..DatasetConfig::default() }
}

fn final_lateral(t: &Trajectory) -> f64 {
    t.poses.last().expect("non-empty future").position.y
}

struct Testbed {
    train: Dataset,
    held: Dataset,
    held_ids: Vec<u32>,
    vae: VaeModel,
    vae_no_semantic: VaeModel,
    full: DiffusionModel,
    no_visual: DiffusionModel,
    markovian: DiffusionModel,
    no_semantic: DiffusionModel,
}

impl Testbed {
    fn build() -> Testbed {
        let cfg = testbed_dataset_config(TRAIN_STRIDE);
        let specs: Vec<SceneSpec> = (0..TRAIN_SCENES).map(|s| SceneSpec::new(Template::TFork, s)).collect();
        let train = build_dataset(&specs, &cfg).expect("fork training set");
        let hspecs: Vec<SceneSpec> =
            (HELD_OUT_SCENE_BASE..HELD_OUT_SCENE_BASE + HELD_OUT_SCENES).map(|s| SceneSpec::new(Template::TFork, s)).collect();
        let held = build_dataset(&hspecs, &DatasetConfig { walks_per_scene: 1, seed: 99, ..testbed_dataset_config(HELD_OUT_STRIDE) }).expect("held-out set");
        // Earliest window per scene whose future commits to a branch; the past is still in the stem.
        let mut held_ids = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, r) in held.records.iter().enumerate() {
            if final_lateral(&r.future).abs() > HELD_OUT_MIN_LATERAL_M && seen.insert(r.scene_id.clone()) {
                held_ids.push(i as u32);
            }
        }
        held_ids.truncate(HELD_OUT);

        let t = Instant::now();
        let vcfg = VaeTrainConfig { hidden: VAE_HIDDEN, steps: VAE_STEPS, log_every: 0, ..VaeTrainConfig::default() };
        let vae = train_vae(&train, &vcfg, None).expect("vae");
        let vae_no_semantic = train_vae(&train, &VaeTrainConfig { use_semantic: false, ..vcfg }, None).expect("vae w/o semantics");
        let dcfg = |conditioning| DiffusionTrainConfig {
            denoiser: DenoiserConfig { base_channels: DENOISER_CHANNELS, ..DenoiserConfig::default() },
            conditioning,
            steps: DENOISER_STEPS,
            log_every: 0,
            ..DiffusionTrainConfig::default()
        };
        let full = train_diffusion(&train, &vae, &dcfg(Conditioning::Full), None).expect("full model");
        let no_visual = train_diffusion(&train, &vae, &dcfg(Conditioning::NoVisual), None).expect("no-visual model");
        let markovian = train_diffusion(&train, &vae, &dcfg(Conditioning::Markovian), None).expect("markovian model");
        let no_semantic = train_diffusion(&train, &vae_no_semantic, &dcfg(Conditioning::Full), None).expect("no-semantic model");
        println!("testbed: {} training records, {} held out, trained in {:.0} s", train.records.len(), held_ids.len(), t.elapsed().as_secs_f64());
        Testbed { train, held, held_ids, vae, vae_no_semantic, full, no_visual, markovian, no_semantic }
    }

    fn evaluate(&self, diff: &DiffusionModel, vae: &VaeModel) -> (Vec<RecordPrediction>, EvalRow) {
        let sampler = SamplerConfig { batch: SAMPLES_PER_RECORD, ..SamplerConfig::default() };
        let preds = sample_records(&self.held, &self.held_ids, diff, vae, &sampler, false).expect("sampling");
        let rows = evaluate(&preds, &self.held, &CollisionConfig::default()).expect("evaluation");
        let mean = mean_row(&rows).expect("non-empty");
        (preds, mean)
    }
}

fn sampler_oracle() -> Outcome {
    let sched = default_schedule();
    let oracle = GaussianOracle { mu: vec![ORACLE_MEAN], var: vec![ORACLE_VAR], sched: &sched };
    let cond = Array2::zeros((1, 1));
    // 100 samples of 100 independent scalars each.
    let shape = (ORACLE_SAMPLES / 100, 1);
    let mut pass = true;
    let mut detail = Vec::new();
    for cfg in [
        SamplerConfig::ddpm(100, 11),
        SamplerConfig::ddim(50, 100, 12),
        SamplerConfig { batch: 100, seed: 13, ..SamplerConfig::default() },
    ] {
        let out = hybrid_sample(&oracle, &cond, shape, &sched, &cfg).expect("oracle sampling");
        let xs: Vec<f64> = out.samples.iter().flat_map(|s| s.iter().copied()).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let ok = xs.len() == ORACLE_SAMPLES
            && (mean - ORACLE_MEAN).abs() <= ORACLE_MEAN_TOL
            && (var / ORACLE_VAR - 1.0).abs() <= ORACLE_VAR_REL_TOL;
        pass &= ok;
        detail.push(format!("{}: mean {mean:.4} var {var:.4}", cfg.mode));
    }
    outcome("sampler oracle N(3, 0.25): DDPM, DDIM(50), hybrid(20+10)", pass, detail.join("; "))
}

fn hybrid_efficiency(bed: &Testbed) -> Outcome {
    let sched = bed.full.schedule();
    let steps = sched.steps();
    let hybrid = SamplerConfig { batch: SAMPLES_PER_RECORD, ..SamplerConfig::default() };
    let calls = |cfg: &SamplerConfig| reverse_plan(cfg, steps).expect("valid plan").len();
    let ratio = calls(&SamplerConfig::ddpm(1, 0)) as f64 / calls(&hybrid) as f64;
    let record = &bed.held.records[bed.held_ids[0] as usize];
    let vm = encode_means(&bed.vae.vae, &bed.vae.params, &[&record.vm]).expect("encode").row(0).to_vec();
    let cond = bed.full.condition(record, &vm).expect("condition");
    let cond = Array2::from_shape_vec((1, cond.len()), cond).expect("row");
    let model = DenoiserModel { net: &bed.full.net, params: &bed.full.params };
    let report = bench_sampler(&model, &cond, (HORIZON, bed.full.net.cfg.feature_width()), &sched, &hybrid, BENCH_TRIALS)
        .expect("benchmark");
    let pass = ratio == EXPECTED_CALL_RATIO && report.call_ratio() == EXPECTED_CALL_RATIO && report.speedup() >= MIN_SPEEDUP;
    outcome(
        "hybrid efficiency: 1000/30 call ratio, wall-clock speedup >= 20x",
        pass,
        format!("call ratio {ratio:.4}, speedup {:.1}x ({:.3} s vs {:.3} s)", report.speedup(), report.fast_seconds, report.ddpm_seconds),
    )
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    // VAE loss on a miniature panorama autoencoder.
    let mut ps = ParamStore::new();
    let vcfg = VaeConfig { hidden: 6, latent: 3, ..VaeConfig::new(4, 8) };
    let vae = Vae::new(vcfg, &mut ps, "vae", &mut rng);
    for v in ps.values.iter_mut() {
        *v = 0.3 * rng.sample::<f64, _>(StandardNormal);
    }
    let panos: Vec<Panorama> = (0..3)
        .map(|_| {
            let mut p = Panorama::empty(4, 8);
            for i in 0..p.len() {
                if rng.gen_bool(0.7) {
                    let class = SemanticClass::ALL[rng.gen_range(1..NUM_CLASSES)];
                    p.semantic[i] = class;
                    p.depth[i] = rng.gen_range(0.5..8.0);
                    p.color[i] = class.palette();
                }
            }
            p
        })
        .collect();
    let refs: Vec<&Panorama> = panos.iter().collect();
    let x = vae.batch_input(&refs).expect("input");
    let classes = semantic_targets(&refs);
    let noise = VaeNoise::sample(3, 3, &mut rng);
    let w = VaeLossWeights::default();
    ps.zero_grad();
    vae_forward_backward(&vae, &mut ps, &x, &classes, &noise, &w, true);
    let analytic = ps.grads.clone();
    let vae_err = grad_check(
        &mut ps.clone(),
        &analytic,
        |p| vae_forward_backward(&vae, &mut p.clone(), &x, &classes, &noise, &w, false).total,
        400,
        GRAD_STEP,
        &mut rng,
    );

    // Denoiser on a miniature sequence.
    let dcfg = DenoiserConfig {
        seq_len: 8,
        pose_dim: 2,
        latent_dim: 2,
        past_len: 3,
        base_channels: 8,
        heads: 2,
        time_dim: 8,
        emb_dim: 8,
        timesteps: 50,
    };
    let mut ps = ParamStore::new();
    let net = Denoiser::new(dcfg, &mut ps, "d", &mut rng).expect("mini denoiser");
    for v in ps.values.iter_mut() {
        *v += 0.3 * rng.sample::<f64, _>(StandardNormal);
    }
    let randn = |rng: &mut ChaCha8Rng, r: usize, c: usize| Array2::from_shape_fn((r, c), |_| rng.sample::<f64, _>(StandardNormal));
    let x = randn(&mut rng, 2 * dcfg.seq_len, dcfg.feature_width());
    let cond = randn(&mut rng, 2, dcfg.cond_width());
    let upstream = randn(&mut rng, x.nrows(), x.ncols());
    let t = [4usize, 37];
    let (_, cache) = net.forward(&ps, &x, &t, &cond).expect("forward");
    ps.zero_grad();
    net.backward(&mut ps, &cache, &upstream);
    let analytic = ps.grads.clone();
    let den_err = grad_check(
        &mut ps,
        &analytic,
        |p| (&net.forward(p, &x, &t, &cond).expect("forward").0 * &upstream).sum(),
        400,
        GRAD_STEP,
        &mut rng,
    );
    outcome(
        "gradient checks: VAE loss and denoiser, float64, h = 1e-5",
        vae_err <= GRAD_REL_TOL && den_err <= GRAD_REL_TOL,
        format!("max relative error VAE {vae_err:.2e}, denoiser {den_err:.2e}"),
    )
}

fn mode_coverage(bed: &Testbed, full: &(Vec<RecordPrediction>, EvalRow)) -> Outcome {
    let lateral: Vec<f64> = bed.train.records.iter().map(|r| final_lateral(&r.future)).collect();
    let n = lateral.len() as f64;
    let left = lateral.iter().filter(|y| **y > LATERAL_BRANCH_M).count() as f64 / n;
    let right = lateral.iter().filter(|y| **y < -LATERAL_BRANCH_M).count() as f64 / n;
    let (preds, mean) = full;
    let split = preds
        .iter()
        .filter(|p| {
            let positive = p.samples.iter().filter(|s| final_lateral(s) > 0.0).count();
            positive > 0 && positive < p.samples.len()
        })
        .count();
    let pass = bed.train.records.len() >= MIN_FORK_RECORDS
        && left >= MIN_BRANCH_FRACTION
        && right >= MIN_BRANCH_FRACTION
        && preds.len() == HELD_OUT
        && split >= MIN_SPLIT_RECORDS
        && mean.best_of_n < mean.best_of_1;
    outcome(
        "mode coverage: both branches in >= 15/20 held-out fork records, best_of_15 < best_of_1",
        pass,
        format!(
            "{} records (left {:.0}%, right {:.0}%), split {split}/{}, best_of_1 {:.3}, best_of_15 {:.3}",
            bed.train.records.len(),
            100.0 * left,
            100.0 * right,
            preds.len(),
            mean.best_of_1,
            mean.best_of_n
        ),
    )
}

fn random_pair(rng: &mut ChaCha8Rng) -> (Trajectory, PointCloud) {
    let points = (0..rng.gen_range(200..1500))
        .map(|_| CloudPoint {
            position: Vector3::new(rng.gen_range(-1.0..5.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.8..2.0)),
            color: [0, 0, 0],
            semantic: SemanticClass::ALL[rng.gen_range(0..NUM_CLASSES)],
        })
        .collect();
    let heading: f64 = rng.gen_range(-0.5..0.5);
    let speed = rng.gen_range(0.6..1.4);
    let poses = (0..HORIZON)
        .map(|k| {
            let d = speed * k as f64 * STEP_S;
            Pose6D::from_yaw(k as f64 * STEP_S, Vector3::new(d * heading.cos(), d * heading.sin(), 1.4), heading)
        })
        .collect();
    (Trajectory::new(poses, FrameTag::Ego), PointCloud { points })
}

fn collision_oracle() -> Outcome {
    let cfg = CollisionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut agree = 0;
    for _ in 0..RANDOM_PAIRS {
        let (traj, cloud) = random_pair(&mut rng);
        if collision_free_score(&traj, &cloud, &cfg).expect("score") == brute_force_collision_score(&traj, &cloud, &cfg).expect("score") {
            agree += 1;
        }
    }
    // Ground-truth walks against the scene surfaces they were simulated in.
    let (mut clean, mut total) = (0, 0);
    for template in Template::ALL {
        for seed in 0..4 {
            let scene = generate_scene(&SceneSpec::new(template, seed)).expect("scene");
            let surface = sample_surface_cloud(&scene, 0.05);
            for w in 0..2 {
                let walk = simulate_walker(&scene, scene.start, &scene.exits, &WalkerPrefs::default(), mix_seed(&[seed, w, 0x636f]))
                    .expect("walk");
                for s in (0..walk.len().saturating_sub(HORIZON)).step_by(25) {
                    let window = walk.slice(s, s + HORIZON);
                    total += 1;
                    if collision_free_score(&window, &surface, &cfg).expect("score") == HORIZON - 1 {
                        clean += 1;
                    }
                }
            }
        }
    }
    let fraction = clean as f64 / total as f64;
    outcome(
        "collision metric: k-d tree equals brute force, ground truth scores n-1",
        agree == RANDOM_PAIRS && fraction >= MIN_CLEAN_GT_FRACTION,
        format!("{agree}/{RANDOM_PAIRS} pairs agree, {clean}/{total} ground-truth windows clean ({:.1}%)", 100.0 * fraction),
    )
}

fn visual_memory_coverage() -> Outcome {
    let cfg = testbed_dataset_config(HELD_OUT_STRIDE);
    let scene = generate_scene(&SceneSpec::new(Template::TFork, 7)).expect("scene");
    let walk = simulate_walker(&scene, scene.start, &scene.exits, &cfg.walker, 7).expect("walk");
    let frame_at = |pose: &Pose6D| {
        let (depth, color, semantic) = render_frame(&scene, pose, &cfg.intrinsics);
        Frame { pose: *pose, intrinsics: cfg.intrinsics, depth, color, semantic }
    };
    let mut buffer = MemoryBuffer::new(cfg.memory);
    let mut worst = f64::INFINITY;
    let mut checked = 0;
    for (k, pose) in walk.poses.iter().enumerate() {
        buffer.keyframe_update(&frame_at(pose), pose.t_s).expect("keyframe");
        // Once a full 5 s of history exists, compare every second.
        if k >= HORIZON && k % 20 == 0 {
            let vm = buffer.build_visual_memory(pose, &DEFAULT_GRAVITY, cfg.max_range_m, cfg.pano_width, cfg.pano_height).expect("vm");
            let mut single = MemoryBuffer::new(cfg.memory);
            single.insert(&frame_at(pose), pose.t_s).expect("frame");
            let one = single.build_visual_memory(pose, &DEFAULT_GRAVITY, cfg.max_range_m, cfg.pano_width, cfg.pano_height).expect("vm");
            worst = worst.min(vm.coverage() as f64 / one.coverage().max(1) as f64);
            checked += 1;
        }
    }
    outcome(
        "visual memory covers >= 2.5x the latest single frame",
        checked > 0 && worst >= MIN_COVERAGE_RATIO,
        format!("minimum ratio {worst:.2} over {checked} points of a {}-step traversal", walk.len()),
    )
}

fn ablations(bed: &Testbed, full: &EvalRow) -> Outcome {
    let (_, no_sem) = bed.evaluate(&bed.no_semantic, &bed.vae_no_semantic);
    let (_, no_vis) = bed.evaluate(&bed.no_visual, &bed.vae);
    let (_, markov) = bed.evaluate(&bed.markovian, &bed.vae);
    let pass = no_sem.collision <= full.collision
        && no_vis.collision <= full.collision
        && markov.best_of_n <= MAX_MARKOVIAN_DEGRADATION * full.best_of_n;
    outcome(
        "ablations: no-semantic and no-visual do not improve collision, markovian best_of_15 <= 1.5x",
        pass,
        format!(
            "collision full {:.2}, no-semantic {:.2}, no-visual {:.2}; best_of_15 full {:.3}, markovian {:.3}",
            full.collision, no_sem.collision, no_vis.collision, full.best_of_n, markov.best_of_n
        ),
    )
}

fn determinism() -> Outcome {
    let cfg = DatasetConfig { walks_per_scene: 1, stride_steps: 50, pano_width: 48, pano_height: 16, future_vm_stride: 50, ..DatasetConfig::default() };
    let specs = [SceneSpec::new(Template::YFork, 4), SceneSpec::new(Template::Stairwell, 2)];
    let run = || {
        let ds = build_dataset(&specs, &cfg).expect("dataset");
        let vcfg = VaeTrainConfig { hidden: 16, steps: 5, batch: 4, log_every: 0, ..VaeTrainConfig::default() };
        let vae = train_vae(&ds, &vcfg, None).expect("vae");
        let dcfg = DiffusionTrainConfig {
            denoiser: DenoiserConfig { base_channels: 8, heads: 2, time_dim: 8, emb_dim: 16, timesteps: 50, ..DenoiserConfig::default() },
            steps: 3,
            batch: 2,
            log_every: 0,
            ..DiffusionTrainConfig::default()
        };
        let diff = train_diffusion(&ds, &vae, &dcfg, None).expect("diffusion");
        let sampler = SamplerConfig { ddim_steps: 5, ddpm_tail_steps: 3, batch: 3, seed: 17, ..SamplerConfig::default() };
        let preds = sample_records(&ds, &[0, 1], &diff, &vae, &sampler, true).expect("samples");
        let png = encode_png(&render_bev(&ds.records[0], &preds[0].samples, 256)).expect("png");
        [
            encode_dataset(&ds),
            [encode_vae_checkpoint(&vae, ""), encode_diffusion_checkpoint(&diff, "")].concat(),
            encode_predictions(&PredictionFile { config_echo: String::new(), records: preds }),
            png,
        ]
    };
    let (a, b) = (run(), run());
    let names = ["dataset", "training", "sampling", "rendering"];
    let differing: Vec<&str> = names.iter().zip(a.iter().zip(&b)).filter(|(_, (x, y))| x != y).map(|(n, _)| *n).collect();
    outcome(
        "determinism: dataset, training, sampling and rendering are bitwise reproducible",
        differing.is_empty(),
        if differing.is_empty() { "all byte streams identical".into() } else { format!("differs: {}", differing.join(", ")) },
    )
}

fn main() {
    let started = Instant::now();
    let mut results = vec![sampler_oracle(), gradient_checks(), collision_oracle(), visual_memory_coverage(), determinism()];
    let bed = Testbed::build();
    let full = bed.evaluate(&bed.full, &bed.vae);
    results.push(hybrid_efficiency(&bed));
    results.push(mode_coverage(&bed, &full));
    results.push(ablations(&bed, &full.1));

    println!("\nacceptance ({:.0} s)", started.elapsed().as_secs_f64());
    for r in &results {
        println!("{} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
