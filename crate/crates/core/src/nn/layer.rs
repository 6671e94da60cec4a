use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Affine map `y = x Wᵀ + b` with `W` stored `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: Tensor::zeros(outputs, inputs),
            bias: Tensor::zeros(1, outputs),
        }
    }

    /// Kaiming-uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero bias.
    pub fn kaiming_uniform<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        let weight = Tensor::from_fn(outputs, inputs, |_, _| T::lit(rng.random_range(-bound..=bound)));
        Linear {
            weight,
            bias: Tensor::zeros(1, outputs),
        }
    }

    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if bias.rows() != 1 || bias.cols() != weight.rows() {
            return Err(Error::ShapeMismatch {
                op: "linear",
                lhs: weight.shape(),
                rhs: bias.shape(),
            });
        }
        Ok(Linear { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.matmul_t(&self.weight)?.add_row(&self.bias)
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> BoundLinear {
        BoundLinear {
            weight: tape.leaf(self.weight.clone()),
            bias: tape.leaf(self.bias.clone()),
        }
    }
}

/// Leaf ids of a [`Linear`] layer placed on a tape.
#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub weight: NodeId,
    pub bias: NodeId,
}

impl BoundLinear {
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, x: NodeId) -> Result<NodeId> {
        let y = tape.matmul_t(x, self.weight)?;
        tape.add_row(y, self.bias)
    }
}

/// Layer widths of an MLP, input first: `[2, 48, 48, 2]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub dims: Vec<usize>,
}

impl MlpSpec {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "an MLP needs at least two positive widths, got {dims:?}"
            )));
        }
        Ok(MlpSpec { dims })
    }

    /// Vector field of the energy-landscape model.
    pub fn energy_landscape() -> Self {
        MlpSpec {
            dims: vec![2, 48, 48, 2],
        }
    }

    /// Vector field of the 2-D sphere model.
    pub fn spheres_2d() -> Self {
        MlpSpec {
            dims: vec![2, 32, 32, 2],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }
}

/// Linear layers with ReLU between them and no activation after the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Linear<T>>,
}

impl<T: Scalar> Mlp<T> {
    pub fn from_layers(layers: Vec<Linear<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::ShapeMismatch {
                    op: "mlp chain",
                    lhs: pair[0].weight.shape(),
                    rhs: pair[1].weight.shape(),
                });
            }
        }
        Ok(Mlp { layers })
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        Mlp {
            layers: spec.dims.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect(),
        }
    }

    /// Kaiming-uniform initialization, deterministic in `seed`.
    pub fn init(spec: &MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(spec, &mut rng)
    }

    pub fn init_with_rng<R: Rng>(spec: &MlpSpec, rng: &mut R) -> Self {
        Mlp {
            layers: spec
                .dims
                .windows(2)
                .map(|w| Linear::kaiming_uniform(w[0], w[1], rng))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Linear<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear<T>] {
        &mut self.layers
    }

    pub fn spec(&self) -> MlpSpec {
        let mut dims = vec![self.layers[0].inputs()];
        dims.extend(self.layers.iter().map(Linear::outputs));
        MlpSpec { dims }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = self.layers[0].forward(x)?;
        for layer in &self.layers[1..] {
            h = layer.forward(&h.relu())?;
        }
        Ok(h)
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> BoundMlp {
        BoundMlp {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }
}

/// An [`Mlp`] whose parameters live on a tape as leaves.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    pub layers: Vec<BoundLinear>,
}

impl BoundMlp {
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, x: NodeId) -> Result<NodeId> {
        let mut h = self.layers[0].forward(tape, x)?;
        for layer in &self.layers[1..] {
            let a = tape.relu(h)?;
            h = layer.forward(tape, a)?;
        }
        Ok(h)
    }

    /// Leaf ids in `(weight, bias)` order per layer.
    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.layers.iter().flat_map(|l| [l.weight, l.bias])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passes_input_through() {
        let mlp = Mlp::from_layers(vec![Linear::new(Tensor::identity(2), Tensor::zeros(1, 2)).unwrap()]).unwrap();
        let x = Tensor::from_rows(&[[1.0, 2.0]]);
        assert_eq!(mlp.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mlp = Mlp::<f64>::zeros(&MlpSpec::new([3, 5, 2]).unwrap());
        let x = Tensor::from_rows(&[[1.0, -2.0, 0.5], [4.0, 4.0, 4.0]]);
        assert_eq!(mlp.forward(&x).unwrap(), Tensor::zeros(2, 2));
    }

    #[test]
    fn energy_landscape_net_shape() {
        let mlp = Mlp::<f64>::init(&MlpSpec::energy_landscape(), 3);
        let x = Tensor::from_fn(7, 2, |r, c| (r as f64 - 3.0) * 0.4 + c as f64);
        let y = mlp.forward(&x).unwrap();
        assert_eq!(y.shape(), (7, 2));
        assert!(y.all_finite());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mlp = Mlp::<f64>::init(&MlpSpec::energy_landscape(), 3);
        assert!(mlp.forward(&Tensor::zeros(4, 3)).is_err());
    }

    #[test]
    fn init_is_deterministic_bounded_and_bias_free() {
        let spec = MlpSpec::energy_landscape();
        let a = Mlp::<f64>::init(&spec, 11);
        let b = Mlp::<f64>::init(&spec, 11);
        assert_eq!(a, b);
        assert_ne!(a, Mlp::<f64>::init(&spec, 12));
        for layer in a.layers() {
            let bound = (6.0 / layer.inputs() as f64).sqrt();
            assert!(layer.weight.data().iter().all(|w| w.abs() <= bound));
            assert!(layer.bias.data().iter().all(|&b| b == 0.0));
        }
        let hidden = &a.layers()[1];
        assert_eq!(hidden.inputs(), 48);
        assert!(hidden.weight.data().iter().all(|w| w.abs() <= 0.3536));
    }

    #[test]
    fn tape_and_plain_forward_agree_bitwise() {
        let mlp = Mlp::<f64>::init(&MlpSpec::spheres_2d(), 5);
        let x = Tensor::from_fn(9, 2, |r, c| ((r * 3 + c) as f64).sin());
        let mut tape = Tape::new();
        let bound = mlp.bind(&mut tape);
        let xi = tape.constant(x.clone());
        let y = bound.forward(&mut tape, xi).unwrap();
        assert_eq!(tape.value(y), &mlp.forward(&x).unwrap());
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new([2]).is_err());
        assert!(MlpSpec::new([2, 0, 2]).is_err());
        let spec = MlpSpec::new([2, 4, 2]).unwrap();
        assert_eq!(Mlp::<f32>::zeros(&spec).spec(), spec);
    }
}
