use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::scalar::Real;

/// Running per-feature mean and variance; inputs are standardized and
/// clipped to `±clip`. Statistics are kept in `f64` whatever the scalar type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
    pub clip: f64,
    pub eps: f64,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 0.0,
            clip: 5.0,
            eps: 1e-8,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Merges the moments of a row-major batch (Chan's parallel update).
    pub fn update<T: Real>(&mut self, rows: &[T]) -> Result<()> {
        let d = self.dim();
        if rows.is_empty() {
            return Ok(());
        }
        check_len("normalizer batch", rows.len() / d * d, rows.len())?;
        let n = (rows.len() / d) as f64;
        let mut bm = vec![0.0; d];
        for r in rows.chunks_exact(d) {
            bm.iter_mut().zip(r).for_each(|(m, x)| *m += x.as_f64());
        }
        bm.iter_mut().for_each(|m| *m /= n);
        let mut bv = vec![0.0; d];
        for r in rows.chunks_exact(d) {
            for j in 0..d {
                let e = r[j].as_f64() - bm[j];
                bv[j] += e * e;
            }
        }
        bv.iter_mut().for_each(|v| *v /= n);
        let total = self.count + n;
        for j in 0..d {
            let delta = bm[j] - self.mean[j];
            let m2 = self.var[j] * self.count + bv[j] * n + delta * delta * self.count * n / total;
            self.mean[j] += delta * n / total;
            self.var[j] = m2 / total;
        }
        self.count = total;
        Ok(())
    }

    /// Standardized copy of a row-major batch.
    pub fn normalize<T: Real>(&self, rows: &[T]) -> Vec<T> {
        let d = self.dim();
        rows.iter()
            .enumerate()
            .map(|(i, &x)| {
                let j = i % d;
                let z = (x.as_f64() - self.mean[j]) / (self.var[j] + self.eps).sqrt();
                T::of(z.clamp(-self.clip, self.clip))
            })
            .collect()
    }

    /// Inverse of [`normalize`](Self::normalize) for one-dimensional data,
    /// without clipping.
    pub fn denormalize<T: Real>(&self, xs: &mut [T]) {
        let (m, s) = (self.mean[0], (self.var[0] + self.eps).sqrt());
        xs.iter_mut().for_each(|x| *x = T::of(x.as_f64() * s + m));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batched_updates_match_pooled_moments() {
        let data: Vec<f64> = (0..60).map(|i| ((i * 37) % 23) as f64 * 0.7 - 3.0).collect();
        let mut n = RunningNorm::new(3);
        n.update(&data[..21]).unwrap();
        n.update(&data[21..]).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = data.iter().skip(j).step_by(3).copied().collect();
            let m = col.iter().sum::<f64>() / 20.0;
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 20.0;
            assert!((n.mean[j] - m).abs() < 1e-12 && (n.var[j] - v).abs() < 1e-12);
        }
        assert_eq!(n.count, 20.0);
    }

    #[test]
    fn round_trip_and_clip() {
        let mut n = RunningNorm::new(1);
        n.update(&[1.0, 3.0, 5.0, 7.0]).unwrap();
        let z = n.normalize(&[4.0f64, 100.0]);
        assert!(z[0].abs() < 1e-12);
        assert_eq!(z[1], 5.0);
        let mut back = vec![z[0], 1.0];
        n.denormalize(&mut back);
        assert!((back[0] - 4.0).abs() < 1e-12);
        assert!((back[1] - (4.0 + 5f64.sqrt())).abs() < 1e-7);
        assert!(n.update(&[1.0f64, 2.0]).is_ok());
        assert!(RunningNorm::new(2).update(&[1.0f64, 2.0, 3.0]).is_err());
    }
}
