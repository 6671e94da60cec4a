use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use nodelab::adaption::AdaptionConfig;
use nodelab::datasets::{LandscapeSampling, PotentialSpec};
use nodelab::model::{ModelSpec, TrainConfig};
use nodelab::nn::{MlpSpec, OptimizerSpec};
use nodelab::odesolve::{Method, SolverConfig};

/// One experiment file. Sections a subcommand does not use are ignored by it, but
/// every key must be known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "default_solver")]
    pub solver: SolverConfig,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub adaption: AdaptionConfig,
    #[serde(default)]
    pub grid: GridConfig,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_solver() -> SolverConfig {
    SolverConfig::new(Method::Euler, 64)
}

fn default_optimizer() -> OptimizerSpec {
    OptimizerSpec::adam(3e-3)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Spheres,
    Landscape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Sphere dimension.
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub sampling: Option<LandscapeSampling>,
    /// Existing dataset CSV to train on instead of generating one. Relative paths
    /// are resolved against the config file's directory.
    #[serde(default)]
    pub path: Option<PathBuf>,
}

fn default_n() -> usize {
    1200
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden widths of the vector field; defaults depend on the dataset.
    #[serde(default)]
    pub hidden: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub eval_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            batch_size: 128,
            iterations: 1000,
            train_fraction: 0.8,
            split_seed: 0,
            eval_every: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Training step counts.
    pub steps: Vec<usize>,
    /// Test step sizes as multiples of the training step size.
    pub factors: Vec<f64>,
    pub methods: Vec<Method>,
    pub threshold: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            steps: vec![1, 2, 4, 8, 16, 32, 64, 128, 256],
            factors: nodelab::diagnostics::DEFAULT_FACTORS.to_vec(),
            methods: Method::ALL.to_vec(),
            threshold: nodelab::diagnostics::DEFAULT_DROP_THRESHOLD,
        }
    }
}

/// Parsed config with the text it came from.
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub text: String,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, text, base_dir })
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds list is empty");
        }
        let d = &self.dataset;
        match d.kind {
            DatasetKind::Spheres if d.potential.is_some() || d.sampling.is_some() => {
                bail!("dataset.potential and dataset.sampling apply to the landscape dataset only")
            }
            DatasetKind::Landscape if d.dim.is_some_and(|dim| dim != 2) => {
                bail!("the landscape dataset is two-dimensional")
            }
            _ => {}
        }
        self.solver.validate()?;
        self.adaption.validate()?;
        if self.grid.steps.is_empty() {
            bail!("grid.steps is empty");
        }
        if self.grid.steps.contains(&0) {
            bail!("grid.steps must be positive");
        }
        if self.grid.factors.is_empty() || self.grid.methods.is_empty() {
            bail!("grid.factors and grid.methods must not be empty");
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        match self.dataset.kind {
            DatasetKind::Spheres => 2,
            DatasetKind::Landscape => 3,
        }
    }

    pub fn dim(&self) -> usize {
        self.dataset.dim.unwrap_or(2)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let hidden = self.model.hidden.clone().unwrap_or_else(|| match self.dataset.kind {
            DatasetKind::Spheres => vec![32, 32],
            DatasetKind::Landscape => vec![48, 48],
        });
        let mut dims = vec![self.dim()];
        dims.extend(hidden);
        dims.push(self.dim());
        let spec = ModelSpec {
            vector_field: MlpSpec::new(dims)?,
            classes: self.classes(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.training.batch_size,
            optimizer: self.optimizer,
            iterations: self.training.iterations,
            seed,
            train_fraction: self.training.train_fraction,
            split_seed: self.training.split_seed,
            eval_every: self.training.eval_every,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c: ExperimentConfig = toml::from_str("[dataset]\nkind = \"spheres\"\n").unwrap();
        c.validate().unwrap();
        assert_eq!(c.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.solver, SolverConfig::new(Method::Euler, 64));
        assert_eq!(c.model_spec().unwrap(), ModelSpec::spheres_2d());
        assert_eq!(c.grid.steps.len(), 9);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("typo = 1\n[dataset]\nkind = \"spheres\"\n").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[dataset]\nkind = \"spheres\"\nsize = 3\n").is_err());
        assert!(toml::from_str::<ExperimentConfig>(
            "[dataset]\nkind = \"spheres\"\n[solver]\nmethod = \"euler\"\nsteps = 4\nh = 1\n"
        )
        .is_err());
        assert!(
            toml::from_str::<ExperimentConfig>("[dataset]\nkind = \"landscape\"\n[dataset.potential]\nkk = 1\n")
                .is_err()
        );
    }

    #[test]
    fn landscape_sections_parse() {
        let text = "[dataset]\nkind = \"landscape\"\nn = 600\n[dataset.potential]\nfriction = 0.3\n[dataset.sampling]\nx_range = [-2.5, 2.5]\n";
        let c: ExperimentConfig = toml::from_str(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.dataset.potential.as_ref().unwrap().friction, 0.3);
        assert_eq!(c.dataset.potential.as_ref().unwrap().k, 0.05);
        assert_eq!(c.dataset.sampling.as_ref().unwrap().x_range, (-2.5, 2.5));
        assert_eq!(c.model_spec().unwrap(), ModelSpec::energy_landscape());
    }

    #[test]
    fn empty_grid_rejected() {
        let c: ExperimentConfig = toml::from_str("[dataset]\nkind = \"spheres\"\n[grid]\nsteps = []\n").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn shipped_configs_load() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut seen = 0;
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                let loaded = LoadedConfig::load(&path).unwrap();
                loaded.config.model_spec().unwrap();
                seen += 1;
            }
        }
        assert!(seen >= 2);
    }
}
