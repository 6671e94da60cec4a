use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
}

impl OptimizerSpec {
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Adam,
            learning_rate,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Sgd,
            learning_rate,
        }
    }
}

fn check_grads<T: Scalar>(params: &[&mut Tensor<T>], names: &[String], grads: &[Tensor<T>]) -> Result<()> {
    if params.len() != grads.len() || names.len() != grads.len() {
        return Err(Error::InvalidConfig(format!(
            "{} parameters, {} names, {} gradients",
            params.len(),
            names.len(),
            grads.len()
        )));
    }
    for ((p, g), name) in params.iter().zip(grads).zip(names) {
        p.expect_same_shape(g, "optimizer step")?;
        if !g.all_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    Ok(())
}

/// `w <- w - lr * g` for every parameter.
pub fn sgd_step<T: Scalar>(params: &mut [&mut Tensor<T>], names: &[String], grads: &[Tensor<T>], lr: T) -> Result<()> {
    check_grads(params, names, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        p.axpy(-lr, g)?;
    }
    Ok(())
}

/// Adam moments and hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Canonical constants `(0.9, 0.999, 1e-8)`.
    pub fn new(lr: T, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = shapes
            .into_iter()
            .map(|(r, c)| (Tensor::zeros(r, c), Tensor::zeros(r, c)))
            .unzip();
        AdamState {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            m,
            v,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Scalar>(
    state: &mut AdamState<T>,
    params: &mut [&mut Tensor<T>],
    names: &[String],
    grads: &[Tensor<T>],
) -> Result<()> {
    check_grads(params, names, grads)?;
    if state.m.len() != params.len() {
        return Err(Error::InvalidConfig(format!(
            "Adam state tracks {} tensors, got {}",
            state.m.len(),
            params.len()
        )));
    }
    for (p, m) in params.iter().zip(&state.m) {
        p.expect_same_shape(m, "adam state")?;
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let w = p.data_mut();
        let (m, v) = (m.data_mut(), v.data_mut());
        for i in 0..w.len() {
            let gi = g.data()[i];
            m[i] = b1 * m[i] + (T::one() - b1) * gi;
            v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            w[i] -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Optimizer selected by an [`OptimizerSpec`].
#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer<T> {
    Sgd { lr: T },
    Adam(AdamState<T>),
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(spec: &OptimizerSpec, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let lr = T::lit(spec.learning_rate);
        match spec.kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam(AdamState::new(lr, shapes)),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<T>], names: &[String], grads: &[Tensor<T>]) -> Result<()> {
        match self {
            Optimizer::Sgd { lr } => sgd_step(params, names, grads, *lr),
            Optimizer::Adam(state) => adam_step(state, params, names, grads),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn sgd_basic_update() {
        let mut w = Tensor::scalar(1.0);
        sgd_step(&mut [&mut w], &names(1), &[Tensor::scalar(2.0)], 0.1).unwrap();
        assert!((w.item() - 0.8f64).abs() < 1e-15);
        sgd_step(&mut [&mut w], &names(1), &[Tensor::scalar(0.0)], 0.1).unwrap();
        assert!((w.item() - 0.8f64).abs() < 1e-15);
    }

    #[test]
    fn sgd_steps_do_not_compose_when_gradient_depends_on_weights() {
        // f(w) = w^2, g = 2w. Two steps of lr 0.1 from w=1: 1 -> 0.8 -> 0.64.
        // One step with the summed gradients evaluated at the start (2 + 2) gives 0.6.
        let lr = 0.1;
        let mut w = Tensor::scalar(1.0f64);
        for _ in 0..2 {
            let g = Tensor::scalar(2.0 * w.item());
            sgd_step(&mut [&mut w], &names(1), &[g], lr).unwrap();
        }
        let mut once = Tensor::scalar(1.0f64);
        sgd_step(&mut [&mut once], &names(1), &[Tensor::scalar(4.0)], lr).unwrap();
        assert!((w.item() - 0.64).abs() < 1e-12);
        assert!((w.item() - once.item()).abs() > 1e-3);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut w = Tensor::scalar(1.0f64);
        let err = sgd_step(
            &mut [&mut w],
            &["classifier.weight".to_string()],
            &[Tensor::scalar(f64::NAN)],
            0.1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("classifier.weight"));
        let mut state = AdamState::new(0.1, [(1, 1)]);
        assert!(adam_step(&mut state, &mut [&mut w], &names(1), &[Tensor::scalar(f64::INFINITY)]).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        for g in [0.5, -3.0, 0.05] {
            let lr = 1e-3;
            let mut w = Tensor::scalar(2.0f64);
            let mut state = AdamState::new(lr, [(1, 1)]);
            adam_step(&mut state, &mut [&mut w], &names(1), &[Tensor::scalar(g)]).unwrap();
            let delta = w.item() - 2.0;
            assert!((delta.abs() - lr).abs() <= 1e-6 * lr, "g={g} delta={delta}");
            assert_eq!(delta.signum(), -g.signum());
            assert_eq!(state.step, 1);
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point() {
        let mut w = Tensor::from_rows(&[[0.3f64, -0.7]]);
        let before = w.clone();
        let mut state = AdamState::new(1e-2, [(1, 2)]);
        for _ in 0..100 {
            adam_step(&mut state, &mut [&mut w], &names(1), &[Tensor::zeros(1, 2)]).unwrap();
        }
        assert_eq!(w, before);
        assert_eq!(state.step, 100);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut w = Tensor::from_rows(&[[0.3f64, -0.7]]);
            let mut state = AdamState::new(1e-2, [(1, 2)]);
            for i in 0..20 {
                let g = Tensor::from_rows(&[[w.get(0, 0) * i as f64, 1.0 - w.get(0, 1)]]);
                adam_step(&mut state, &mut [&mut w], &names(1), &[g]).unwrap();
            }
            w
        };
        assert_eq!(run(), run());
    }
}
