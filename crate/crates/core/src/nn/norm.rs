use crate::error::{Error, Result};

pub const MIN_STD: f64 = 1e-8;

/// Per-channel affine normalization fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(width: usize) -> Self {
        Self { mean: vec![0.0; width], std: vec![1.0; width] }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// Population mean and standard deviation per channel, std clamped to [`MIN_STD`].
    pub fn fit<'a>(width: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = vec![0.0; width];
        let mut sq = vec![0.0; width];
        for row in rows {
            if row.len() != width {
                return Err(Error::Shape(format!("row of width {} for stats of width {width}", row.len())));
            }
            n += 1;
            for (c, &v) in row.iter().enumerate() {
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        if n == 0 {
            return Err(Error::Domain("cannot fit normalization on zero rows".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n as f64 - m * m).max(0.0).sqrt().max(MIN_STD))
            .collect();
        Ok(Self { mean, std })
    }

    /// Normalizes rows laid out back to back, `width` values each.
    pub fn normalize(&self, data: &mut [f64]) {
        let w = self.width();
        for (i, v) in data.iter_mut().enumerate() {
            let c = i % w;
            *v = (*v - self.mean[c]) / self.std[c];
        }
    }

    pub fn denormalize(&self, data: &mut [f64]) {
        let w = self.width();
        for (i, v) in data.iter_mut().enumerate() {
            let c = i % w;
            *v = *v * self.std[c] + self.mean[c];
        }
    }
}
