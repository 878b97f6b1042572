//! Gaussian kernel density estimate and line-sampled density statistics.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{RecourseError, Result};
use crate::types::{squared_distance, Bandwidth, LineSampling, PointMatrix};

/// Anything that assigns a non-negative density to a point.
pub trait Density {
    fn density_at(&self, x: &[f64]) -> f64;

    /// Densities at the `q + 1` line samples between `a` and `b`.
    fn line_profile(&self, a: &[f64], b: &[f64], q: usize, sampling: LineSampling) -> Vec<f64> {
        line_samples(a, b, q, sampling)
            .iter()
            .map(|p| self.density_at(p))
            .collect()
    }
}

/// Isotropic Gaussian KDE over the training points.
#[derive(Debug, Clone)]
pub struct DensityModel {
    centers: Arc<PointMatrix>,
    bandwidth: f64,
    inv_two_h2: f64,
    normalization: f64,
}

/// Scott's rule in standardized space.
pub fn scott_bandwidth(n: usize, d: usize) -> f64 {
    (n as f64).powf(-1.0 / (d as f64 + 4.0))
}

impl DensityModel {
    pub fn fit(centers: Arc<PointMatrix>, bandwidth: Bandwidth) -> Result<Self> {
        let n = centers.n();
        let d = centers.dim();
        if n == 0 {
            return Err(RecourseError::Empty("density needs at least one center"));
        }
        let h = match bandwidth {
            Bandwidth::Auto => scott_bandwidth(n, d),
            Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
            Bandwidth::Fixed(h) => return Err(RecourseError::InvalidBandwidth(h)),
        };
        let normalization = 1.0 / (n as f64 * h.powi(d as i32) * (2.0 * PI).powf(d as f64 / 2.0));
        Ok(Self {
            centers,
            bandwidth: h,
            inv_two_h2: 1.0 / (2.0 * h * h),
            normalization,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn centers(&self) -> &Arc<PointMatrix> {
        &self.centers
    }

    pub fn dim(&self) -> usize {
        self.centers.dim()
    }

    /// The given quantile of `{density_at(p)}` over `points`, linearly
    /// interpolated between order statistics.
    pub fn quantile_threshold(&self, points: &PointMatrix, quantile: f64) -> Result<f64> {
        let mut densities: Vec<f64> = points.rows().map(|p| self.density_at(p)).collect();
        densities.sort_by(f64::total_cmp);
        quantile_of_sorted(&densities, quantile)
    }
}

impl Density for DensityModel {
    fn density_at(&self, x: &[f64]) -> f64 {
        let sum: f64 = self
            .centers
            .rows()
            .map(|c| (-squared_distance(x, c) * self.inv_two_h2).exp())
            .sum();
        self.normalization * sum
    }

    /// Samples sit at `a + iδ(b − a)`, so each center's kernel values along
    /// the line follow `k_{i+1} = k_i r_i`, `r_{i+1} = r_i s` with a shared
    /// `s`. Two exponentials per center instead of `q + 1`.
    fn line_profile(&self, a: &[f64], b: &[f64], q: usize, sampling: LineSampling) -> Vec<f64> {
        let m = q + 1;
        let step = match sampling {
            LineSampling::Interpolated => 1.0 / (q + 1) as f64,
            LineSampling::EndpointInclusive => 1.0 / q as f64,
        };
        let u: Vec<f64> = b.iter().zip(a).map(|(y, x)| y - x).collect();
        let len2: f64 = u.iter().map(|v| v * v).sum();
        let k = self.inv_two_h2;
        let shared = (-2.0 * k * step * step * len2).exp();
        let mut sums = vec![0.0; m];
        let samples = line_samples(a, b, q, sampling);
        for c in self.centers.rows() {
            let mut w2 = 0.0;
            let mut wu = 0.0;
            for j in 0..a.len() {
                let w = a[j] - c[j];
                w2 += w * w;
                wu += w * u[j];
            }
            let e0 = -k * w2;
            let e_ratio = -k * (2.0 * step * wu + step * step * len2);
            if e0 < -700.0 || e_ratio.abs() > 300.0 {
                for (s, p) in sums.iter_mut().zip(&samples) {
                    *s += (-squared_distance(p, c) * k).exp();
                }
                continue;
            }
            let mut term = e0.exp();
            let mut ratio = e_ratio.exp();
            for s in sums.iter_mut() {
                *s += term;
                term *= ratio;
                ratio *= shared;
            }
        }
        sums.iter_mut().for_each(|s| *s *= self.normalization);
        sums
    }
}

/// Quantile of an ascending slice (linear interpolation).
pub fn quantile_of_sorted(sorted: &[f64], quantile: f64) -> Result<f64> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(RecourseError::InvalidQuantile(quantile));
    }
    if sorted.is_empty() {
        return Err(RecourseError::Empty("no densities to take a quantile of"));
    }
    let pos = quantile * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// The `q + 1` sample points used for line statistics between `a` and `b`.
pub fn line_samples(a: &[f64], b: &[f64], q: usize, sampling: LineSampling) -> Vec<Vec<f64>> {
    (0..=q)
        .map(|i| {
            let (wa, wb) = match sampling {
                LineSampling::Interpolated => {
                    let denom = (q + 1) as f64;
                    ((q - i + 1) as f64 / denom, i as f64 / denom)
                }
                LineSampling::EndpointInclusive => {
                    let denom = q as f64;
                    ((q - i) as f64 / denom, i as f64 / denom)
                }
            };
            a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect()
        })
        .collect()
}

fn line_densities<D: Density + ?Sized>(
    model: &D,
    a: &[f64],
    b: &[f64],
    q: usize,
    sampling: LineSampling,
) -> Result<Vec<f64>> {
    if q < 2 {
        return Err(RecourseError::InvalidConfig(format!(
            "line samples must be >= 2, got {q}"
        )));
    }
    if a == b {
        return Ok(vec![model.density_at(a)]);
    }
    Ok(model.line_profile(a, b, q, sampling))
}

/// Mean density over the line samples (`D_ij`).
pub fn line_average_density<D: Density + ?Sized>(
    model: &D,
    a: &[f64],
    b: &[f64],
    q: usize,
    sampling: LineSampling,
) -> Result<f64> {
    let ds = line_densities(model, a, b, q, sampling)?;
    Ok(ds.iter().sum::<f64>() / ds.len() as f64)
}

/// Minimum density over the line samples.
pub fn line_min_density<D: Density + ?Sized>(
    model: &D,
    a: &[f64],
    b: &[f64],
    q: usize,
    sampling: LineSampling,
) -> Result<f64> {
    let ds = line_densities(model, a, b, q, sampling)?;
    Ok(ds.into_iter().fold(f64::INFINITY, f64::min))
}

/// Mean and minimum in one pass over the samples.
pub fn line_stats<D: Density + ?Sized>(
    model: &D,
    a: &[f64],
    b: &[f64],
    q: usize,
    sampling: LineSampling,
) -> Result<(f64, f64)> {
    let ds = line_densities(model, a, b, q, sampling)?;
    let mean = ds.iter().sum::<f64>() / ds.len() as f64;
    let min = ds.into_iter().fold(f64::INFINITY, f64::min);
    Ok((mean, min))
}
