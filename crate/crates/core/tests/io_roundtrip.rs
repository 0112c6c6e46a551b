use egonav::diffusion::SamplerConfig;
use egonav::geom::{FrameTag, Pose6D, Trajectory, STEP_S};
use egonav::io::*;
use egonav::metrics::CollisionConfig;
use egonav::nalgebra::Vector3;
use egonav::nn::DenoiserConfig;
use egonav::pipeline::*;
use egonav::scene::*;
use egonav::Error;

fn small_cfg() -> DatasetConfig {
    DatasetConfig { walks_per_scene: 1, stride_steps: 50, pano_width: 48, pano_height: 16, future_vm_stride: 50, ..DatasetConfig::default() }
}

fn straight_walk(n: usize, offset: f64) -> Trajectory {
    let poses = (0..n)
        .map(|k| Pose6D::from_yaw(k as f64 * STEP_S, Vector3::new(0.5 + 0.04 * k as f64, offset, 1.4), 0.0))
        .collect();
    Trajectory::new(poses, FrameTag::World)
}

/// Two scenes with five 300-step walks each, sliced at stride 50.
fn synthetic_dataset() -> Dataset {
    let cfg = small_cfg();
    let mut records = Vec::new();
    for seed in 0..2 {
        let scene = generate_scene(&SceneSpec::new(Template::Corridor, seed)).unwrap();
        for w in 0..5 {
            let walk = straight_walk(300, 0.1 * w as f64 - 0.2);
            records.extend(records_from_walk(&scene, &walk, w, &cfg).unwrap());
        }
    }
    Dataset { records, pano_width: 48, pano_height: 16, future_vm_stride: 50, skipped_walks: 0 }
}

#[test]
fn dataset_file_round_trip_and_validation() {
    let ds = synthetic_dataset();
    assert_eq!(ds.records.len(), 30);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds.bin");
    write_dataset(&path, &ds).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), ds);
    let (n, violations) = validate_dataset_file(&path).unwrap();
    assert_eq!((n, violations.len()), (30, 0));

    let mut broken = ds.clone();
    broken.records[3].future.poses[40].t_s += 0.01;
    broken.records[7].past.poses.pop();
    let v = dataset_violations(&broken);
    assert!(v.iter().any(|m| m.contains("record 3")), "{v:?}");
    assert!(v.iter().any(|m| m.contains("record 7")), "{v:?}");
}

#[test]
fn dataset_header_is_checked() {
    let bytes = encode_dataset(&Dataset { records: vec![], pano_width: 4, pano_height: 2, future_vm_stride: 0, skipped_walks: 0 });
    assert_eq!(&bytes[..8], DATASET_MAGIC);
    let mut wrong_version = bytes.clone();
    wrong_version[8] = 9;
    let err = decode_dataset(&wrong_version).unwrap_err();
    assert!(err.to_string().contains("version"), "{err}");
    let mut wrong_magic = bytes.clone();
    wrong_magic[0] = b'X';
    assert!(decode_dataset(&wrong_magic).unwrap_err().to_string().contains("magic"));
    assert!(decode_dataset(&bytes[..bytes.len() - 1]).is_err());
}

fn tiny_dataset() -> Dataset {
    build_dataset(&[SceneSpec::new(Template::Corridor, 3)], &small_cfg()).unwrap()
}

fn tiny_vae_cfg(steps: u64) -> VaeTrainConfig {
    VaeTrainConfig { hidden: 16, steps, batch: 4, log_every: 0, ..VaeTrainConfig::default() }
}

fn tiny_diffusion_cfg(steps: u64) -> DiffusionTrainConfig {
    DiffusionTrainConfig {
        denoiser: DenoiserConfig { base_channels: 8, heads: 2, time_dim: 8, emb_dim: 16, timesteps: 50, ..DenoiserConfig::default() },
        steps,
        batch: 2,
        log_every: 0,
        ..DiffusionTrainConfig::default()
    }
}

#[test]
fn vae_resume_matches_uninterrupted_training() {
    let ds = tiny_dataset();
    let straight = train_vae(&ds, &tiny_vae_cfg(6), None).unwrap();
    let half = train_vae(&ds, &tiny_vae_cfg(3), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vae.ckpt");
    write_vae_checkpoint(&path, &half, "echo").unwrap();
    let (loaded, echo) = read_vae_checkpoint(&path).unwrap();
    assert_eq!(echo, "echo");
    assert_eq!(loaded.step, 3);
    let resumed = train_vae(&ds, &tiny_vae_cfg(6), Some(loaded)).unwrap();
    assert_eq!(encode_vae_checkpoint(&resumed, ""), encode_vae_checkpoint(&straight, ""));

    let other = VaeTrainConfig { hidden: 8, ..tiny_vae_cfg(6) };
    assert!(matches!(train_vae(&ds, &other, Some(half)), Err(Error::Config(_))));
}

#[test]
fn diffusion_resume_matches_uninterrupted_training() {
    let ds = tiny_dataset();
    let vae = train_vae(&ds, &tiny_vae_cfg(2), None).unwrap();
    let straight = train_diffusion(&ds, &vae, &tiny_diffusion_cfg(4), None).unwrap();
    let half = train_diffusion(&ds, &vae, &tiny_diffusion_cfg(2), None).unwrap();
    let bytes = encode_diffusion_checkpoint(&half, "cfg");
    assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
    let (loaded, _) = decode_diffusion_checkpoint(&bytes).unwrap();
    let resumed = train_diffusion(&ds, &vae, &tiny_diffusion_cfg(4), Some(loaded)).unwrap();
    assert_eq!(encode_diffusion_checkpoint(&resumed, ""), encode_diffusion_checkpoint(&straight, ""));
    // A VAE checkpoint is not a diffusion checkpoint.
    assert!(decode_diffusion_checkpoint(&encode_vae_checkpoint(&vae, "")).is_err());
}

#[test]
fn predictions_round_trip_and_report() {
    let ds = tiny_dataset();
    let vae = train_vae(&ds, &tiny_vae_cfg(2), None).unwrap();
    let diff = train_diffusion(&ds, &vae, &tiny_diffusion_cfg(2), None).unwrap();
    let sampler = SamplerConfig { ddim_steps: 5, ddpm_tail_steps: 3, batch: 3, ..SamplerConfig::default() };
    let preds = sample_records(&ds, &[0, 1], &diff, &vae, &sampler, true).unwrap();
    assert_eq!(preds[0].samples.len(), 3);
    assert_eq!(preds[0].calls_per_sample, 8);
    let file = PredictionFile { config_echo: "x = 1".into(), records: preds.clone() };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pred.bin");
    write_predictions(&path, &file).unwrap();
    assert_eq!(read_predictions(&path).unwrap(), file);

    let again = sample_records(&ds, &[0, 1], &diff, &vae, &sampler, true).unwrap();
    assert_eq!(again, preds);
    assert!(matches!(sample_records(&ds, &[99], &diff, &vae, &sampler, false), Err(Error::Index(_))));

    let rows = evaluate(&preds, &ds, &CollisionConfig::default()).unwrap();
    let csv = format_report(&rows, &mean_row(&rows).unwrap());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], REPORT_HEADER);
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("mean,"));
}

#[test]
fn bev_render_is_deterministic_and_framed() {
    let ds = synthetic_dataset();
    let rec = &ds.records[4];
    let samples = vec![rec.future.clone(), rec.future.clone()];
    let a = encode_png(&render_bev(rec, &samples, 256)).unwrap();
    let b = encode_png(&render_bev(rec, &samples, 256)).unwrap();
    assert_eq!(a, b);
    let img = render_bev(rec, &samples, 256);
    assert_eq!(img.dimensions(), (256, 256));
    let vp = Viewport::fit(&[&rec.past, &rec.future], 256);
    for p in rec.past.poses.iter().chain(&rec.future.poses) {
        assert!(vp.contains(vp.to_pixel(&p.position)));
    }
    let colors: Vec<_> = (0..15).map(|i| sample_color(i, 15)).collect();
    assert!(!colors.contains(&PAST_COLOR) && !colors.contains(&TRUTH_COLOR));
}
