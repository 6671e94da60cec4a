//! Step-size control during training: start from the Hairer–Wanner initial step,
//! then every few iterations compare the training solver against a higher-order one
//! on the current batch and halve or slowly grow the step.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{NeuralOdeModel, TrainConfig, TrainLog, Trainer};
use crate::odesolve::{csv_err, Method, SolverConfig};
use crate::scalar::Scalar;

/// Intermediate quantities of the Hairer–Wanner starting-step heuristic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepEstimate {
    /// Norm of the initial state.
    pub d0: f64,
    /// Norm of the field at the initial state.
    pub d1: f64,
    /// Difference quotient of the field along the trial Euler step.
    pub d2: f64,
    /// Trial step.
    pub ha: f64,
    /// Order-based step.
    pub hb: f64,
    /// `min(100 ha, hb)`, capped at the horizon.
    pub h0: f64,
}

/// Hairer–Wanner starting step for a method of order `q` on the batch `z0`, capped
/// at `horizon` so that at least one step fits. Norms are root-mean-square over
/// rows of the Euclidean row norm. Uses two evaluations of `field`.
pub fn initial_step_estimate<T, F>(field: &mut F, z0: &Tensor<T>, q: u32, horizon: f64) -> Result<StepEstimate>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> Result<Tensor<T>>,
{
    if q == 0 {
        return Err(Error::InvalidConfig("method order must be at least 1".into()));
    }
    let f0 = field(z0)?;
    if !f0.all_finite() || !z0.all_finite() {
        return Err(Error::NonFinite("vector field at the initial state".into()));
    }
    let d0 = z0.rms_row_norm().to_f64_lossy();
    let d1 = f0.rms_row_norm().to_f64_lossy();
    let ha = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let mut z1 = z0.clone();
    z1.axpy(T::lit(ha), &f0)?;
    let f1 = field(&z1)?;
    if !f1.all_finite() {
        return Err(Error::NonFinite("vector field after the trial step".into()));
    }
    let d2 = f1.sub(&f0)?.rms_row_norm().to_f64_lossy() / ha;
    let dmax = d1.max(d2);
    let hb = if dmax > 1e-15 {
        (0.01 / dmax).powf(1.0 / (q as f64 + 1.0))
    } else {
        (ha * 1e-3).max(1e-6)
    };
    let h0 = (100.0 * ha).min(hb).min(horizon);
    Ok(StepEstimate { d0, d1, d2, ha, hb, h0 })
}

/// The starting step `h0` of [`initial_step_estimate`].
pub fn initial_step_size<T, F>(field: &mut F, z0: &Tensor<T>, q: u32, horizon: f64) -> Result<f64>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> Result<Tensor<T>>,
{
    Ok(initial_step_estimate(field, z0, q, horizon)?.h0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptionConfig {
    /// Iterations between checks.
    pub period: usize,
    pub shrink: f64,
    pub grow: f64,
    /// Shrink when the accuracy gap strictly exceeds this.
    pub threshold: f64,
    /// Reference solver; must have higher order than the training solver.
    pub test_method: Method,
    /// Upper bound on the step count; finer steps are clamped with a warning.
    pub max_steps: usize,
}

impl Default for AdaptionConfig {
    fn default() -> Self {
        AdaptionConfig {
            period: 50,
            shrink: 0.5,
            grow: 1.1,
            threshold: 0.1,
            test_method: Method::Midpoint,
            max_steps: 1024,
        }
    }
}

impl AdaptionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.period == 0 || self.max_steps == 0 {
            return Err(Error::InvalidConfig(
                "adaption period and step cap must be positive".into(),
            ));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.grow > 1.0 && self.grow.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < shrink < 1 < grow, got shrink {} grow {}",
                self.shrink, self.grow
            )));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold must be non-negative, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Shrink,
    Grow,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Shrink => "shrink",
            Action::Grow => "grow",
        })
    }
}

/// One controller decision; `h` and `steps` are the values after it.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptionRecord {
    pub iteration: usize,
    pub h: f64,
    pub steps: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub action: Action,
    pub cumulative_nfe: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptionState {
    pub initial_h: f64,
    pub h: f64,
    pub horizon: f64,
    pub config: AdaptionConfig,
    pub history: Vec<AdaptionRecord>,
}

impl AdaptionState {
    pub fn new(h0: f64, horizon: f64, config: AdaptionConfig) -> Result<Self> {
        config.validate()?;
        if !(h0 > 0.0 && h0.is_finite()) {
            return Err(Error::InvalidConfig(format!("initial step must be positive, got {h0}")));
        }
        Ok(AdaptionState {
            initial_h: h0,
            h: h0,
            horizon,
            config,
            history: Vec::new(),
        })
    }

    /// `max(1, round(T / h))`, clamped to the configured cap.
    pub fn steps(&self) -> usize {
        steps_for(self.h, self.horizon, self.config.max_steps)
    }

    pub fn shrink_count(&self) -> usize {
        self.history.iter().filter(|r| r.action == Action::Shrink).count()
    }

    /// `h0 * shrink^a * grow^b` for the recorded action counts.
    pub fn predicted_h(&self) -> f64 {
        let a = self.shrink_count();
        let b = self.history.len() - a;
        self.initial_h * self.config.shrink.powi(a as i32) * self.config.grow.powi(b as i32)
    }

    /// Step sizes obtained by replaying the recorded actions from `initial_h`.
    pub fn replay(&self) -> Vec<f64> {
        let mut h = self.initial_h;
        self.history
            .iter()
            .map(|r| {
                h *= match r.action {
                    Action::Shrink => self.config.shrink,
                    Action::Grow => self.config.grow,
                };
                h
            })
            .collect()
    }

    /// Writes `iteration,h,K,train_acc,test_acc,action,cumulative_nfe`.
    pub fn write_history_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "iteration",
            "h",
            "K",
            "train_acc",
            "test_acc",
            "action",
            "cumulative_nfe",
        ])
        .map_err(csv_err)?;
        for r in &self.history {
            w.write_record([
                r.iteration.to_string(),
                r.h.to_string(),
                r.steps.to_string(),
                r.train_acc.to_string(),
                r.test_acc.to_string(),
                r.action.to_string(),
                r.cumulative_nfe.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("adaption history", e))
    }
}

fn steps_for(h: f64, horizon: f64, cap: usize) -> usize {
    let raw = (horizon / h).round();
    if raw > cap as f64 {
        log::warn!("step size {h} needs {raw} steps; clamped to {cap}");
        return cap;
    }
    (raw as usize).max(1)
}

/// Shrinks `h` when `|train_acc - test_acc|` strictly exceeds the threshold and grows
/// it otherwise. `iteration` and `cumulative_nfe` are only recorded.
pub fn adapt_step(
    state: &AdaptionState,
    iteration: usize,
    train_acc: f64,
    test_acc: f64,
    cumulative_nfe: u64,
) -> AdaptionState {
    debug_assert!((0.0..=1.0).contains(&train_acc) && (0.0..=1.0).contains(&test_acc));
    let action = if (train_acc - test_acc).abs() > state.config.threshold {
        Action::Shrink
    } else {
        Action::Grow
    };
    let mut next = state.clone();
    next.h *= match action {
        Action::Shrink => next.config.shrink,
        Action::Grow => next.config.grow,
    };
    let steps = next.steps();
    next.history.push(AdaptionRecord {
        iteration,
        h: next.h,
        steps,
        train_acc,
        test_acc,
        action,
        cumulative_nfe,
    });
    next
}

/// Trained model, its log, and the controller's final state.
#[derive(Clone, Debug)]
pub struct AdaptionOutcome<T> {
    pub model: NeuralOdeModel<T>,
    pub log: TrainLog,
    pub state: AdaptionState,
}

/// Trains `model` while adapting its step count. The model's solver method and
/// horizon are kept; its step count is replaced by the Hairer–Wanner start, computed
/// on the first batch. NFE includes the two start evaluations and every check.
pub fn train_with_adaption<T: Scalar>(
    model: NeuralOdeModel<T>,
    dataset: &LabeledDataset<T>,
    train: &TrainConfig,
    adaption: &AdaptionConfig,
) -> Result<AdaptionOutcome<T>> {
    adaption.validate()?;
    let method = model.solver.method;
    if adaption.test_method.order() <= method.order() {
        return Err(Error::InvalidConfig(format!(
            "test method {} must have higher order than training method {method}",
            adaption.test_method
        )));
    }
    let horizon = model.solver.horizon;
    let mut trainer = Trainer::new(model, dataset, train.clone())?;
    let mut batch = Some(trainer.next_batch());
    let h0 = {
        let x = &batch.as_ref().unwrap().0;
        let vf = &trainer.model.vector_field;
        initial_step_size(&mut |z: &Tensor<T>| vf.forward(z), x, method.order(), horizon)?
    };
    trainer.add_nfe(2);
    let mut state = AdaptionState::new(h0, horizon, adaption.clone())?;
    trainer.model.solver.steps = state.steps();

    for it in 0..train.iterations {
        let (x, labels) = batch.take().unwrap_or_else(|| trainer.next_batch());
        if it > 0 && it % adaption.period == 0 {
            let solver = trainer.model.solver;
            let reference = SolverConfig {
                method: adaption.test_method,
                ..solver
            };
            let (train_acc, n1) = trainer.model.batch_accuracy(&x, &labels, &solver)?;
            let (test_acc, n2) = trainer.model.batch_accuracy(&x, &labels, &reference)?;
            trainer.add_nfe(n1 + n2);
            state = adapt_step(&state, it, train_acc, test_acc, trainer.nfe());
            trainer.model.solver.steps = state.steps();
        }
        trainer.step(&x, &labels)?;
    }
    let (model, log) = trainer.finish();
    Ok(AdaptionOutcome { model, log, state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::generate_spheres_dataset;
    use crate::model::ModelSpec;
    use crate::nn::OptimizerSpec;
    use proptest::prelude::*;

    fn identity(z: &Tensor<f64>) -> Result<Tensor<f64>> {
        Ok(z.clone())
    }

    #[test]
    fn worked_example_identity_field() {
        let z0 = Tensor::from_rows(&[[1.0, 0.0]]);
        let est = initial_step_estimate(&mut identity, &z0, 1, 1.0).unwrap();
        assert_eq!((est.d0, est.d1, est.ha), (1.0, 1.0, 0.01));
        assert!((est.d2 - 1.0).abs() < 1e-12);
        assert!((est.hb - 0.1).abs() < 1e-12);
        assert!((est.h0 - 0.1).abs() < 1e-12, "{est:?}");
    }

    #[test]
    fn constant_field_uses_d1_only() {
        let z0 = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        let mut constant = |z: &Tensor<f64>| Ok(Tensor::full(z.rows(), 2, 0.5));
        // d0 = 1, d1 = 0.5 * sqrt(2), d2 = 0.
        let d1 = 0.5f64 * 2f64.sqrt();
        let ha = 0.01 / d1;
        let hb = (0.01 / d1).powf(1.0 / 3.0);
        let est = initial_step_estimate(&mut constant, &z0, 2, 10.0).unwrap();
        assert_eq!(est.d2, 0.0);
        assert!((est.h0 - (100.0 * ha).min(hb)).abs() < 1e-12);
    }

    #[test]
    fn tiny_inputs_use_fallback_trial_step() {
        let z0 = Tensor::from_rows(&[[0.0, 0.0]]);
        let mut zero = |z: &Tensor<f64>| Ok(Tensor::zeros(z.rows(), 2));
        // ha = 1e-6 and hb = max(1e-6, ha * 1e-3) = 1e-6.
        assert_eq!(initial_step_size(&mut zero, &z0, 1, 1.0).unwrap(), 1e-6);
    }

    #[test]
    fn capped_at_horizon() {
        let z0 = Tensor::from_rows(&[[1.0, 0.0]]);
        let mut small = |z: &Tensor<f64>| Ok(z.scale(1e-9).add(&Tensor::full(z.rows(), 2, 1e-3)).unwrap());
        assert_eq!(initial_step_size(&mut small, &z0, 4, 0.25).unwrap(), 0.25);
    }

    #[test]
    fn non_finite_field_rejected() {
        let z0 = Tensor::from_rows(&[[1.0, 0.0]]);
        let mut bad = |z: &Tensor<f64>| Ok(Tensor::full(z.rows(), 2, f64::NAN));
        assert!(initial_step_size(&mut bad, &z0, 1, 1.0).is_err());
        assert!(initial_step_size(&mut identity, &z0, 0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn trial_step_is_scale_invariant(c in 1e-2f64..1e2, x in 0.5f64..3.0, y in -3.0f64..3.0) {
            // Scaling the state and the field outputs by c leaves d0 / d1 unchanged.
            let z0 = Tensor::from_rows(&[[x, y]]);
            let f = |z: &Tensor<f64>| z.map(|v| v.sin() + 0.3 * v);
            let base = initial_step_estimate(&mut |z: &Tensor<f64>| Ok(f(z)), &z0, 1, 1.0).unwrap();
            let mut scaled_field = |z: &Tensor<f64>| Ok(f(&z.scale(1.0 / c)).scale(c));
            let scaled = initial_step_estimate(&mut scaled_field, &z0.scale(c), 1, 1.0).unwrap();
            prop_assert!((base.ha - scaled.ha).abs() <= 1e-12 * base.ha);
        }

        #[test]
        fn history_decomposes_and_replays(h0 in 1e-3f64..1.0, accs in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 0..40)) {
            let mut state = AdaptionState::new(h0, 1.0, AdaptionConfig::default()).unwrap();
            for (i, (a, b)) in accs.iter().enumerate() {
                state = adapt_step(&state, 50 * (i + 1), *a, *b, 0);
                prop_assert!(state.steps() >= 1 && state.steps() <= 1024);
            }
            prop_assert_eq!(state.history.len(), accs.len());
            prop_assert!((state.h - state.predicted_h()).abs() <= 1e-12 * state.h);
            let replayed = state.replay();
            prop_assert!(replayed.iter().zip(&state.history).all(|(h, r)| h.to_bits() == r.h.to_bits()));
        }
    }

    #[test]
    fn branch_table() {
        let s = AdaptionState::new(0.1, 1.0, AdaptionConfig::default()).unwrap();
        let shrink = adapt_step(&s, 50, 0.90, 0.60, 0);
        assert_eq!(shrink.h, 0.05);
        assert_eq!(shrink.history[0].action, Action::Shrink);
        let grow = adapt_step(&s, 50, 0.90, 0.88, 0);
        assert!((grow.h - 0.11).abs() < 1e-15);
        assert_eq!(grow.history[0].action, Action::Grow);
        // A gap of exactly the threshold grows. 0.75 - 0.5 is exact in binary.
        let exact = AdaptionState::new(
            0.1,
            1.0,
            AdaptionConfig {
                threshold: 0.25,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(adapt_step(&exact, 50, 0.75, 0.5, 0).history[0].action, Action::Grow);
        let edge = adapt_step(&s, 50, 0.90, 0.80, 0);
        assert_eq!(edge.history[0].action, Action::Grow);
        assert_eq!(s.history.len(), 0);
    }

    #[test]
    fn steps_round_and_clamp() {
        let cfg = AdaptionConfig {
            max_steps: 100,
            ..Default::default()
        };
        let s = |h: f64| AdaptionState::new(h, 1.0, cfg.clone()).unwrap().steps();
        assert_eq!(s(0.3), 3);
        assert_eq!(s(0.4), 3);
        assert_eq!(s(5.0), 1);
        assert_eq!(s(1e-4), 100);
    }

    #[test]
    fn config_validation() {
        assert!(AdaptionConfig {
            shrink: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AdaptionConfig {
            grow: 0.9,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AdaptionConfig {
            period: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AdaptionState::new(0.0, 1.0, AdaptionConfig::default()).is_err());
    }

    #[test]
    fn history_csv_layout() {
        let s = AdaptionState::new(0.5, 1.0, AdaptionConfig::default()).unwrap();
        let s = adapt_step(&s, 50, 1.0, 0.5, 123);
        let mut buf = Vec::new();
        s.write_history_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iteration,h,K,train_acc,test_acc,action,cumulative_nfe\n50,0.25,4,1,0.5,shrink,123\n"
        );
    }

    #[test]
    fn nfe_accounting_and_test_method_order() {
        let data = generate_spheres_dataset(2, 300, 4).unwrap();
        let model =
            NeuralOdeModel::<f64>::init(&ModelSpec::spheres_2d(), SolverConfig::new(Method::Euler, 1), 2).unwrap();
        let cfg = TrainConfig::new(OptimizerSpec::adam(1e-2), 32, 120, 0);
        let adapt = AdaptionConfig {
            period: 20,
            ..Default::default()
        };
        let out = train_with_adaption(model.clone(), &data, &cfg, &adapt).unwrap();
        assert_eq!(out.state.history.len(), 5);
        let per_iteration: u64 = out.log.records.iter().map(|r| r.steps as u64).sum();
        let checks: u64 = out
            .state
            .history
            .iter()
            .map(|r| {
                let before = out.log.records[r.iteration - 1].steps as u64;
                before * 3
            })
            .sum();
        assert_eq!(out.log.total_nfe(), 2 + per_iteration + checks);
        for r in &out.state.history {
            assert_eq!(out.log.records[r.iteration].steps, r.steps);
        }
        let again = train_with_adaption(model.clone(), &data, &cfg, &adapt).unwrap();
        assert_eq!(again.model, out.model);
        assert_eq!(again.state, out.state);

        let bad = AdaptionConfig {
            test_method: Method::Euler,
            ..Default::default()
        };
        assert!(train_with_adaption(model, &data, &cfg, &bad).is_err());
    }
}
