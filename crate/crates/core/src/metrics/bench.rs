use std::time::Instant;

use ndarray::Array2;

use crate::diffusion::{hybrid_sample, CountingModel, EpsModel, NoiseSchedule, SamplerConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub batch: usize,
    pub trials: usize,
    pub fast_calls: usize,
    pub ddpm_calls: usize,
    /// Median wall-clock seconds per batch.
    pub fast_seconds: f64,
    pub ddpm_seconds: f64,
}

impl BenchReport {
    pub fn call_ratio(&self) -> f64 {
        self.ddpm_calls as f64 / self.fast_calls as f64
    }

    pub fn speedup(&self) -> f64 {
        self.ddpm_seconds / self.fast_seconds
    }

    pub fn samples_per_second(&self) -> f64 {
        self.batch as f64 / self.fast_seconds
    }

    pub fn calls_per_second(&self) -> f64 {
        self.fast_calls as f64 / self.fast_seconds
    }

    pub const CSV_HEADER: &'static str =
        "batch,trials,fast_calls,ddpm_calls,call_ratio,fast_seconds,ddpm_seconds,speedup,samples_per_s,calls_per_s";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.4},{:.6},{:.6},{:.3},{:.3},{:.3}",
            self.batch,
            self.trials,
            self.fast_calls,
            self.ddpm_calls,
            self.call_ratio(),
            self.fast_seconds,
            self.ddpm_seconds,
            self.speedup(),
            self.samples_per_second(),
            self.calls_per_second()
        )
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

/// Times `cfg` against full-length DDPM on the same model, condition and batch.
///
/// One untimed warm-up run of `cfg` precedes the measurements.
pub fn bench_sampler<M: EpsModel>(
    model: &M,
    cond: &Array2<f64>,
    shape: (usize, usize),
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
    trials: usize,
) -> Result<BenchReport> {
    if trials == 0 {
        return Err(Error::Config("benchmark needs at least one trial".into()));
    }
    let ddpm = SamplerConfig::ddpm(cfg.batch, cfg.seed);
    hybrid_sample(model, cond, shape, sched, cfg)?;
    let run = |c: &SamplerConfig| -> Result<(usize, f64)> {
        let counter = CountingModel::new(model);
        let start = Instant::now();
        hybrid_sample(&counter, cond, shape, sched, c)?;
        Ok((counter.calls.get(), start.elapsed().as_secs_f64()))
    };
    let mut fast = Vec::with_capacity(trials);
    let mut slow = Vec::with_capacity(trials);
    let (mut fast_calls, mut ddpm_calls) = (0, 0);
    for _ in 0..trials {
        let (c, s) = run(cfg)?;
        fast_calls = c;
        fast.push(s);
        let (c, s) = run(&ddpm)?;
        ddpm_calls = c;
        slow.push(s);
    }
    Ok(BenchReport {
        batch: cfg.batch,
        trials,
        fast_calls,
        ddpm_calls,
        fast_seconds: median(fast),
        ddpm_seconds: median(slow),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{default_schedule, GaussianOracle};

    #[test]
    fn call_accounting() {
        let s = default_schedule();
        let oracle = GaussianOracle { mu: vec![0.0], var: vec![1.0], sched: &s };
        let cond = Array2::zeros((1, 1));
        let cfg = SamplerConfig { batch: 2, ..SamplerConfig::default() };
        let r = bench_sampler(&oracle, &cond, (4, 1), &s, &cfg, 1).unwrap();
        assert_eq!((r.fast_calls, r.ddpm_calls), (30, 1000));
        assert!((r.call_ratio() - 1000.0 / 30.0).abs() < 1e-12);
        let r4 = bench_sampler(&oracle, &cond, (4, 1), &s, &SamplerConfig { batch: 4, ..cfg }, 1).unwrap();
        assert_eq!(r4.fast_calls, 30);
        assert_eq!(BenchReport::CSV_HEADER.split(',').count(), r.csv_row().split(',').count());
    }
}
