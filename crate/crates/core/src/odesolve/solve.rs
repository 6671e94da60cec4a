use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::odesolve::{ButcherTableau, Method};
use crate::scalar::Scalar;

/// Autonomous vector field evaluated on a tape.
pub trait TapeField<T: Scalar> {
    fn eval(&mut self, tape: &mut Tape<T>, z: NodeId) -> Result<NodeId>;
}

impl<T: Scalar, F> TapeField<T> for F
where
    F: FnMut(&mut Tape<T>, NodeId) -> Result<NodeId>,
{
    fn eval(&mut self, tape: &mut Tape<T>, z: NodeId) -> Result<NodeId> {
        self(tape, z)
    }
}

/// Fixed-step solver settings: `steps` steps of size `horizon / steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    pub steps: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

fn default_horizon() -> f64 {
    1.0
}

impl SolverConfig {
    pub fn new(method: Method, steps: usize) -> Self {
        SolverConfig {
            method,
            steps,
            horizon: 1.0,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("solver needs at least one step".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Vector-field evaluations for one integration.
    pub fn nfe(&self) -> u64 {
        (self.method.stages() * self.steps) as u64
    }
}

fn linear_combination<T: Scalar>(
    tape: &mut Tape<T>,
    base: NodeId,
    coeffs: &[T],
    ks: &[NodeId],
    h: T,
) -> Result<NodeId> {
    let mut acc: Option<NodeId> = None;
    for (&a, &k) in coeffs.iter().zip(ks) {
        if a == T::zero() {
            continue;
        }
        let term = tape.scale(k, h * a)?;
        acc = Some(match acc {
            None => term,
            Some(prev) => tape.add(prev, term)?,
        });
    }
    match acc {
        None => Ok(base),
        Some(delta) => tape.add(base, delta),
    }
}

/// One explicit Runge–Kutta step recorded on the tape. Adds the stage count to `nfe`.
pub fn rk_step<T: Scalar, F: TapeField<T>>(
    tape: &mut Tape<T>,
    tableau: &ButcherTableau<T>,
    field: &mut F,
    z: NodeId,
    h: T,
    nfe: &mut u64,
) -> Result<NodeId> {
    let mut ks: Vec<NodeId> = Vec::with_capacity(tableau.stages());
    for (stage, row) in tableau.a.iter().enumerate() {
        let zi = linear_combination(tape, z, row, &ks, h)?;
        let k = field.eval(tape, zi)?;
        *nfe += 1;
        if !tape.value(k).all_finite() {
            return Err(Error::NonFiniteStage { stage });
        }
        ks.push(k);
    }
    linear_combination(tape, z, &tableau.b, &ks, h)
}

/// Node ids of the states `z_0 ... z_K` of a tape integration.
#[derive(Clone, Debug)]
pub struct TapeTrajectory {
    pub states: Vec<NodeId>,
    pub nfe: u64,
}

impl TapeTrajectory {
    pub fn last(&self) -> NodeId {
        *self.states.last().expect("trajectory holds z_0")
    }

    pub fn values<T: Scalar>(&self, tape: &Tape<T>) -> Trajectory<T> {
        Trajectory {
            states: self.states.iter().map(|&id| tape.value(id).clone()).collect(),
            nfe: self.nfe,
        }
    }
}

/// Differentiable integration over `config.steps` steps of size `T/K`.
pub fn integrate<T: Scalar, F: TapeField<T>>(
    tape: &mut Tape<T>,
    field: &mut F,
    z0: NodeId,
    config: &SolverConfig,
) -> Result<TapeTrajectory> {
    config.validate()?;
    let tableau = config.method.tableau::<T>();
    let h = T::lit(config.step_size());
    let mut nfe = 0;
    let mut states = Vec::with_capacity(config.steps + 1);
    states.push(z0);
    let mut z = z0;
    for _ in 0..config.steps {
        z = rk_step(tape, &tableau, field, z, h, &mut nfe)?;
        states.push(z);
    }
    Ok(TapeTrajectory { states, nfe })
}

/// States `z_0 ... z_K` (each `batch x dim`) of a plain integration.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub states: Vec<Tensor<T>>,
    pub nfe: u64,
}

impl<T: Scalar> Trajectory<T> {
    pub fn last(&self) -> &Tensor<T> {
        self.states.last().expect("trajectory holds z_0")
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }
}

fn linear_combination_values<T: Scalar>(base: &Tensor<T>, coeffs: &[T], ks: &[Tensor<T>], h: T) -> Result<Tensor<T>> {
    let mut acc: Option<Tensor<T>> = None;
    for (&a, k) in coeffs.iter().zip(ks) {
        if a == T::zero() {
            continue;
        }
        let term = k.scale(h * a);
        acc = Some(match acc {
            None => term,
            Some(prev) => prev.add(&term)?,
        });
    }
    match acc {
        None => Ok(base.clone()),
        Some(delta) => base.add(&delta),
    }
}

/// Tape-free twin of [`rk_step`]; performs the same floating point operations in the
/// same order, so results agree bit-for-bit.
pub fn rk_step_values<T, F>(
    tableau: &ButcherTableau<T>,
    field: &mut F,
    z: &Tensor<T>,
    h: T,
    nfe: &mut u64,
) -> Result<Tensor<T>>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> Result<Tensor<T>>,
{
    let mut ks: Vec<Tensor<T>> = Vec::with_capacity(tableau.stages());
    for (stage, row) in tableau.a.iter().enumerate() {
        let zi = linear_combination_values(z, row, &ks, h)?;
        let k = field(&zi)?;
        *nfe += 1;
        if !k.all_finite() {
            return Err(Error::NonFiniteStage { stage });
        }
        ks.push(k);
    }
    linear_combination_values(z, &tableau.b, &ks, h)
}

/// Integrates without a tape, keeping every intermediate state.
pub fn integrate_values<T, F>(field: &mut F, z0: &Tensor<T>, config: &SolverConfig) -> Result<Trajectory<T>>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> Result<Tensor<T>>,
{
    config.validate()?;
    let tableau = config.method.tableau::<T>();
    let h = T::lit(config.step_size());
    let mut nfe = 0;
    let mut states = Vec::with_capacity(config.steps + 1);
    states.push(z0.clone());
    for _ in 0..config.steps {
        let next = rk_step_values(&tableau, field, states.last().unwrap(), h, &mut nfe)?;
        states.push(next);
    }
    Ok(Trajectory { states, nfe })
}

/// Integrates without a tape and returns only `z_K` together with the NFE.
pub fn flow_values<T, F>(field: &mut F, z0: &Tensor<T>, config: &SolverConfig) -> Result<(Tensor<T>, u64)>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> Result<Tensor<T>>,
{
    config.validate()?;
    let tableau = config.method.tableau::<T>();
    let h = T::lit(config.step_size());
    let mut nfe = 0;
    let mut z = z0.clone();
    for _ in 0..config.steps {
        z = rk_step_values(&tableau, field, &z, h, &mut nfe)?;
    }
    Ok((z, nfe))
}
