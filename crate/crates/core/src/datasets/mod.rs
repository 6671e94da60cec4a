//! Synthetic classification tasks: concentric spheres and a damped particle in a
//! three-well potential.

mod io;
mod landscape;
mod spheres;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use io::{read_dataset_csv, read_meta, write_dataset_csv, write_meta};
pub use landscape::{
    generate_energy_landscape_dataset, simulate_particle, simulate_particle_with, LandscapeSampling, ParticleOutcome,
    PotentialSpec, EQUILIBRIUM_TOL, LABEL_HORIZON, LABEL_STEP,
};
pub use spheres::{generate_spheres_dataset, sphere_class, SHELL_BANDS, SHELL_LABELS};

/// Provenance of a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: u64,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// Points `N x D` with integer labels in `[0, classes)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T> {
    pub points: Tensor<T>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub meta: DatasetMeta,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(points: Tensor<T>, labels: Vec<usize>, classes: usize, meta: DatasetMeta) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::InvalidConfig("dataset must not be empty".into()));
        }
        if points.rows() != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "dataset",
                lhs: points.shape(),
                rhs: (labels.len(), 1),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if !points.all_finite() {
            return Err(Error::NonFinite("dataset points".into()));
        }
        Ok(LabeledDataset {
            points,
            labels,
            classes,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        LabeledDataset {
            points: self.points.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            meta: self.meta.clone(),
        }
    }

    pub fn take(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Shuffled train/test split, deterministic in `seed`. The train part holds
    /// `round(fraction * N)` points.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
            return Err(Error::InvalidConfig(format!(
                "train fraction {train_fraction} not in (0, 1)"
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((train_fraction * self.len() as f64).round() as usize).clamp(1, self.len() - 1);
        if self.len() < 2 {
            return Err(Error::InvalidConfig("need at least two points to split".into()));
        }
        Ok((self.subset(&idx[..n_train]), self.subset(&idx[n_train..])))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}
