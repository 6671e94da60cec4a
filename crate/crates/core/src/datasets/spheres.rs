use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Tensor;
use crate::datasets::{DatasetMeta, LabeledDataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Radius bands of the inner ball, middle shell and outer shell.
pub const SHELL_BANDS: [(f64, f64); 3] = [(0.0, 0.5), (1.0, 1.5), (2.0, 2.5)];
/// Inner and outer shells share a class.
pub const SHELL_LABELS: [usize; 3] = [0, 1, 0];

/// Class of a point at distance `radius` from the origin, if it lies in a band.
pub fn sphere_class(radius: f64) -> Option<usize> {
    SHELL_BANDS
        .iter()
        .position(|&(lo, hi)| (lo..=hi).contains(&radius))
        .map(|i| SHELL_LABELS[i])
}

/// `n` points spread evenly over the three shells (point `i` goes to shell `i % 3`),
/// with uniformly random direction and radius uniform within the shell's band.
pub fn generate_spheres_dataset<T: Scalar>(dim: usize, n: usize, seed: u64) -> Result<LabeledDataset<T>> {
    if dim < 2 || n == 0 {
        return Err(Error::InvalidConfig(format!(
            "spheres need dim >= 2 and n > 0, got dim={dim} n={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    let mut dir = vec![0.0f64; dim];
    for i in 0..n {
        let shell = i % 3;
        let norm = loop {
            for d in dir.iter_mut() {
                *d = rng.sample(StandardNormal);
            }
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break norm;
            }
        };
        let (lo, hi) = SHELL_BANDS[shell];
        let radius = rng.random_range(lo..=hi);
        data.extend(dir.iter().map(|v| T::lit(v / norm * radius)));
        labels.push(SHELL_LABELS[shell]);
    }
    let mut params = BTreeMap::new();
    params.insert("dim".into(), dim as f64);
    params.insert("n".into(), n as f64);
    LabeledDataset::new(
        Tensor::from_vec(n, dim, data)?,
        labels,
        2,
        DatasetMeta {
            generator: "spheres".into(),
            seed,
            params,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_inner_class() {
        assert_eq!(sphere_class(0.0), Some(0));
        assert_eq!(sphere_class(1.2), Some(1));
        assert_eq!(sphere_class(2.5), Some(0));
        assert_eq!(sphere_class(0.75), None);
    }

    #[test]
    fn points_lie_in_bands_with_matching_labels() {
        for dim in [2, 3, 10] {
            let d = generate_spheres_dataset::<f64>(dim, 300, 5).unwrap();
            for r in 0..d.len() {
                let radius = d.points.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                // Normalization can push a boundary radius one ulp out of its band.
                let class = sphere_class(radius)
                    .or_else(|| sphere_class(radius - 1e-12))
                    .or_else(|| sphere_class(radius + 1e-12));
                assert_eq!(class, Some(d.labels[r]), "radius {radius}");
            }
        }
    }

    #[test]
    fn even_split_and_two_to_one_ratio() {
        let d = generate_spheres_dataset::<f64>(2, 1000, 1).unwrap();
        let counts = d.class_counts();
        // shells hold 334/333/333 points
        assert_eq!(counts, vec![667, 333]);
        assert!((counts[0] as f64 / counts[1] as f64 - 2.0).abs() < 0.01);
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate_spheres_dataset::<f64>(2, 60, 9).unwrap();
        assert_eq!(a, generate_spheres_dataset::<f64>(2, 60, 9).unwrap());
        assert_ne!(a.points, generate_spheres_dataset::<f64>(2, 60, 10).unwrap().points);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(generate_spheres_dataset::<f64>(1, 10, 0).is_err());
        assert!(generate_spheres_dataset::<f64>(2, 0, 0).is_err());
    }
}
