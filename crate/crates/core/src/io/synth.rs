//! Seeded synthetic datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{RecourseError, Result};

/// Two interleaving half circles. Class 0 gets `⌈n/2⌉` points on the upper
/// arc centred at the origin; class 1 the lower arc shifted to `(1, 0.5)`.
pub fn generate_two_moons(n: usize, noise: f64, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    if n < 2 {
        return Err(RecourseError::InvalidConfig(format!("two moons needs n >= 2, got {n}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(RecourseError::InvalidConfig(format!("noise must be non-negative, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise).map_err(|e| RecourseError::InvalidConfig(e.to_string()))?;
    let n_upper = n.div_ceil(2);
    let n_lower = n - n_upper;
    let arc = |i: usize, m: usize| {
        if m <= 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (m - 1) as f64
        }
    };
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n_upper {
        let t = arc(i, n_upper);
        points.push(vec![t.cos(), t.sin()]);
        labels.push(0);
    }
    for i in 0..n_lower {
        let t = arc(i, n_lower);
        points.push(vec![1.0 - t.cos(), 0.5 - t.sin()]);
        labels.push(1);
    }
    for p in &mut points {
        for v in p.iter_mut() {
            *v += jitter.sample(&mut rng);
        }
    }
    Ok((points, labels))
}

/// Isotropic Gaussian blobs, one per centre, labelled `i % 2`.
pub fn generate_blobs(n: usize, centers: &[Vec<f64>], std_dev: f64, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    if centers.len() < 2 {
        return Err(RecourseError::InvalidConfig("blobs need at least two centres".into()));
    }
    let dim = centers[0].len();
    if dim == 0 || centers.iter().any(|c| c.len() != dim) {
        return Err(RecourseError::InvalidConfig("blob centres must share a positive dimension".into()));
    }
    let normal = Normal::new(0.0, std_dev).map_err(|e| RecourseError::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % centers.len();
        points.push(centers[c].iter().map(|&m| m + normal.sample(&mut rng)).collect());
        labels.push((c % 2) as u8);
    }
    Ok((points, labels))
}

/// Uniform points in `[lo, hi]^dim`, for tests and benchmarks.
pub fn uniform_points(n: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(lo..hi)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moons_shape_and_balance() {
        let (x, y) = generate_two_moons(1001, 0.15, 3).unwrap();
        assert_eq!(x.len(), 1001);
        assert_eq!(y.iter().filter(|&&l| l == 0).count(), 501);
        assert!(x.iter().all(|p| p.len() == 2));
    }

    #[test]
    fn noiseless_moons_lie_on_arcs() {
        let (x, y) = generate_two_moons(20, 0.0, 0).unwrap();
        for (p, l) in x.iter().zip(&y) {
            let (cx, cy) = if *l == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
            let r = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt();
            assert!((r - 1.0).abs() < 1e-12);
            if *l == 0 {
                assert!(p[1] >= -1e-12);
            } else {
                assert!(p[1] <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        assert_eq!(generate_two_moons(50, 0.1, 9).unwrap(), generate_two_moons(50, 0.1, 9).unwrap());
        assert_ne!(generate_two_moons(50, 0.1, 9).unwrap(), generate_two_moons(50, 0.1, 10).unwrap());
    }

    #[test]
    fn blobs_cycle_labels() {
        let (x, y) = generate_blobs(9, &[vec![0.0, 0.0], vec![5.0, 5.0], vec![-5.0, 5.0]], 0.1, 1).unwrap();
        assert_eq!(x.len(), 9);
        assert_eq!(y, vec![0, 1, 0, 0, 1, 0, 0, 1, 0]);
        assert!(generate_two_moons(1, 0.1, 0).is_err());
    }
}
