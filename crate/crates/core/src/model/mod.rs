//! Neural ODE classifier `logits = classifier(flow_T(x))` and its training loop.

mod checkpoint;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{accuracy, BoundLinear, BoundMlp, Linear, Mlp, MlpSpec};
use crate::odesolve::{flow_values, integrate, integrate_values, SolverConfig, Trajectory};
use crate::scalar::Scalar;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use train::{
    chance_level, evaluate_accuracy, train, trained_successfully, StepOutcome, TrainConfig, TrainLog, TrainRecord,
    Trainer, SUCCESS_MARGIN,
};

/// Architecture of a [`NeuralOdeModel`]: the vector field MLP (input width equals
/// output width equals the data dimension) and the number of classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub vector_field: MlpSpec,
    pub classes: usize,
}

impl ModelSpec {
    pub fn energy_landscape() -> Self {
        ModelSpec {
            vector_field: MlpSpec::energy_landscape(),
            classes: 3,
        }
    }

    pub fn spheres_2d() -> Self {
        ModelSpec {
            vector_field: MlpSpec::spheres_2d(),
            classes: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vector_field.input_dim() != self.vector_field.output_dim() {
            return Err(Error::InvalidConfig(format!(
                "vector field must preserve the state dimension, got {:?}",
                self.vector_field.dims
            )));
        }
        if self.classes < 2 {
            return Err(Error::InvalidConfig("need at least two classes".into()));
        }
        Ok(())
    }
}

/// Vector field, linear classifier and the fixed-step solver that connects them.
/// There is no upstream feature map: the ODE state is the input itself.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralOdeModel<T> {
    pub vector_field: Mlp<T>,
    pub classifier: Linear<T>,
    pub solver: SolverConfig,
}

/// Tape leaves of a model's parameters.
#[derive(Clone, Debug)]
pub struct BoundModel {
    pub vector_field: BoundMlp,
    pub classifier: BoundLinear,
}

impl BoundModel {
    pub fn leaves(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.vector_field.leaves().collect();
        ids.push(self.classifier.weight);
        ids.push(self.classifier.bias);
        ids
    }
}

/// Logits node and forward NFE of a recorded model evaluation.
#[derive(Clone, Copy, Debug)]
pub struct ModelOutput {
    pub logits: NodeId,
    pub nfe: u64,
}

/// Records `classifier(integrate(vector_field, x))` on the tape.
pub fn model_forward<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &BoundModel,
    x: NodeId,
    solver: &SolverConfig,
) -> Result<ModelOutput> {
    let mut field = |t: &mut Tape<T>, z: NodeId| bound.vector_field.forward(t, z);
    let traj = integrate(tape, &mut field, x, solver)?;
    let logits = bound.classifier.forward(tape, traj.last())?;
    Ok(ModelOutput { logits, nfe: traj.nfe })
}

impl<T: Scalar> NeuralOdeModel<T> {
    pub fn new(vector_field: Mlp<T>, classifier: Linear<T>, solver: SolverConfig) -> Result<Self> {
        let dim = vector_field.input_dim();
        if vector_field.output_dim() != dim {
            return Err(Error::InvalidConfig(format!(
                "vector field maps {dim} -> {} dimensions",
                vector_field.output_dim()
            )));
        }
        if classifier.inputs() != dim {
            return Err(Error::InvalidConfig(format!(
                "classifier expects {} inputs, state has {dim}",
                classifier.inputs()
            )));
        }
        solver.validate()?;
        Ok(NeuralOdeModel {
            vector_field,
            classifier,
            solver,
        })
    }

    /// Kaiming-uniform initialization of both blocks, deterministic in `seed`.
    pub fn init(spec: &ModelSpec, solver: SolverConfig, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vector_field = Mlp::init_with_rng(&spec.vector_field, &mut rng);
        let classifier = Linear::kaiming_uniform(spec.vector_field.output_dim(), spec.classes, &mut rng);
        Self::new(vector_field, classifier, solver)
    }

    pub fn dim(&self) -> usize {
        self.vector_field.input_dim()
    }

    pub fn classes(&self) -> usize {
        self.classifier.outputs()
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            vector_field: self.vector_field.spec(),
            classes: self.classes(),
        }
    }

    /// Parameter names in the order of [`Self::params`].
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.vector_field.layers().len() {
            names.push(format!("vector_field.{i}.weight"));
            names.push(format!("vector_field.{i}.bias"));
        }
        names.push("classifier.weight".into());
        names.push("classifier.bias".into());
        names
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out: Vec<&Tensor<T>> = Vec::new();
        for l in self.vector_field.layers() {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.push(&self.classifier.weight);
        out.push(&self.classifier.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = Vec::new();
        for l in self.vector_field.layers_mut() {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.classifier.weight);
        out.push(&mut self.classifier.bias);
        out
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> BoundModel {
        BoundModel {
            vector_field: self.vector_field.bind(tape),
            classifier: self.classifier.bind(tape),
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::ShapeMismatch {
                op: "model input",
                lhs: x.shape(),
                rhs: (x.rows(), self.dim()),
            });
        }
        Ok(())
    }

    /// Tape-free logits under `solver`, with the forward NFE.
    pub fn logits_with(&self, x: &Tensor<T>, solver: &SolverConfig) -> Result<(Tensor<T>, u64)> {
        self.check_input(x)?;
        let (z, nfe) = flow_values(&mut |z: &Tensor<T>| self.vector_field.forward(z), x, solver)?;
        Ok((self.classifier.forward(&z)?, nfe))
    }

    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.logits_with(x, &self.solver)?.0)
    }

    /// All states `z_0 ... z_K` for every row of `x`.
    pub fn trajectories(&self, x: &Tensor<T>, solver: &SolverConfig) -> Result<Trajectory<T>> {
        self.check_input(x)?;
        integrate_values(&mut |z: &Tensor<T>| self.vector_field.forward(z), x, solver)
    }

    pub fn batch_accuracy(&self, x: &Tensor<T>, labels: &[usize], solver: &SolverConfig) -> Result<(f64, u64)> {
        let (logits, nfe) = self.logits_with(x, solver)?;
        Ok((accuracy(&logits, labels), nfe))
    }

    pub fn check_dataset(&self, dataset: &LabeledDataset<T>) -> Result<()> {
        if dataset.dim() != self.dim() || dataset.classes != self.classes() {
            return Err(Error::InvalidConfig(format!(
                "dataset is {}-d with {} classes, model is {}-d with {} classes",
                dataset.dim(),
                dataset.classes,
                self.dim(),
                self.classes()
            )));
        }
        Ok(())
    }
}
