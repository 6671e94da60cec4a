use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::datasets::{DatasetMeta, LabeledDataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Step of the ground-truth RK4 integration used for labeling.
pub const LABEL_STEP: f64 = 1e-3;
/// Simulated time after which an unsettled particle is flagged.
pub const LABEL_HORIZON: f64 = 200.0;
/// Equilibrium requires both `|v|` and `|force|` below this.
pub const EQUILIBRIUM_TOL: f64 = 1e-4;
/// Initial conditions this close to an unstable equilibrium are resampled.
const SEPARATRIX_EXCLUSION: f64 = 1e-3;

/// Three-well potential `V(x) = k * prod_i (x - m_i)^2` with linear friction.
///
/// With the default minima `(-2, 0, 2)` this is `k x^2 (x^2 - 4)^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSpec {
    pub k: f64,
    pub minima: [f64; 3],
    pub friction: f64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec {
            k: 0.05,
            minima: [-2.0, 0.0, 2.0],
            friction: 0.5,
        }
    }
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.minima;
        if !(self.k > 0.0) || !(self.friction > 0.0) || !(a < b && b < c) {
            return Err(Error::InvalidConfig(format!("invalid potential {self:?}")));
        }
        Ok(())
    }

    /// `P(x) = prod_i (x - m_i)`, so `V = k P^2`.
    fn poly(&self, x: f64) -> f64 {
        self.minima.iter().map(|m| x - m).product()
    }

    fn poly_derivative(&self, x: f64) -> f64 {
        let [a, b, c] = self.minima;
        (x - b) * (x - c) + (x - a) * (x - c) + (x - a) * (x - b)
    }

    pub fn potential(&self, x: f64) -> f64 {
        let p = self.poly(x);
        self.k * p * p
    }

    /// `-dV/dx`
    pub fn force(&self, x: f64) -> f64 {
        -2.0 * self.k * self.poly(x) * self.poly_derivative(x)
    }

    /// Local maxima between the wells (roots of `P'`).
    pub fn maxima(&self) -> [f64; 2] {
        let [a, b, c] = self.minima;
        let (qa, qb, qc) = (3.0, -2.0 * (a + b + c), a * b + a * c + b * c);
        let disc = (qb * qb - 4.0 * qa * qc).sqrt();
        [(-qb - disc) / (2.0 * qa), (-qb + disc) / (2.0 * qa)]
    }

    /// Right-hand side of `dx/dt = v, dv/dt = -V'(x) - friction * v`.
    pub fn true_field(&self, x: f64, v: f64) -> [f64; 2] {
        [v, self.force(x) - self.friction * v]
    }

    pub fn energy(&self, x: f64, v: f64) -> f64 {
        self.potential(x) + 0.5 * v * v
    }

    pub fn nearest_minimum(&self, x: f64) -> usize {
        let mut best = 0;
        for i in 1..3 {
            if (x - self.minima[i]).abs() < (x - self.minima[best]).abs() {
                best = i;
            }
        }
        best
    }
}

/// Final state of a labeling run.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleOutcome {
    pub label: usize,
    pub x: f64,
    pub v: f64,
    pub time: f64,
    /// `false` when the horizon was hit before equilibrium; such samples are excluded.
    pub settled: bool,
}

fn rk4(spec: &PotentialSpec, x: f64, v: f64, h: f64) -> (f64, f64) {
    let f = |x: f64, v: f64| spec.true_field(x, v);
    let k1 = f(x, v);
    let k2 = f(x + 0.5 * h * k1[0], v + 0.5 * h * k1[1]);
    let k3 = f(x + 0.5 * h * k2[0], v + 0.5 * h * k2[1]);
    let k4 = f(x + h * k3[0], v + h * k3[1]);
    (
        x + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        v + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    )
}

/// Integrates the particle with RK4 at step `h` until equilibrium or
/// [`LABEL_HORIZON`], calling `observe(t, x, v)` on every state including the first.
pub fn simulate_particle_with(
    spec: &PotentialSpec,
    x0: f64,
    v0: f64,
    h: f64,
    mut observe: impl FnMut(f64, f64, f64),
) -> Result<ParticleOutcome> {
    spec.validate()?;
    if !x0.is_finite() || !v0.is_finite() {
        return Err(Error::NonFinite(format!("initial state ({x0}, {v0})")));
    }
    let max_steps = (LABEL_HORIZON / h).ceil() as usize;
    let (mut x, mut v) = (x0, v0);
    let mut step = 0usize;
    observe(0.0, x, v);
    let settled = loop {
        if v.abs() < EQUILIBRIUM_TOL && spec.force(x).abs() < EQUILIBRIUM_TOL {
            break true;
        }
        if step >= max_steps {
            break false;
        }
        (x, v) = rk4(spec, x, v, h);
        step += 1;
        observe(step as f64 * h, x, v);
    };
    Ok(ParticleOutcome {
        label: spec.nearest_minimum(x),
        x,
        v,
        time: step as f64 * h,
        settled,
    })
}

/// Labels `(x0, v0)` by the well the damped particle comes to rest in.
pub fn simulate_particle(spec: &PotentialSpec, x0: f64, v0: f64) -> Result<ParticleOutcome> {
    simulate_particle_with(spec, x0, v0, LABEL_STEP, |_, _, _| {})
}

/// Sampling box for initial position and velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeSampling {
    pub x_range: (f64, f64),
    pub v_range: (f64, f64),
}

impl Default for LandscapeSampling {
    fn default() -> Self {
        LandscapeSampling {
            x_range: (-3.0, 3.0),
            v_range: (-3.0, 3.0),
        }
    }
}

/// `n` initial conditions drawn uniformly from the sampling box, labeled by
/// [`simulate_particle`]. Sample `i` draws from its own ChaCha stream `i` of `seed`,
/// so the result does not depend on generation order. Unsettled samples and samples
/// next to an unstable equilibrium are redrawn, with a total budget of `10 n` draws.
pub fn generate_energy_landscape_dataset<T: Scalar>(
    spec: &PotentialSpec,
    n: usize,
    seed: u64,
    sampling: &LandscapeSampling,
) -> Result<LabeledDataset<T>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("dataset size must be positive".into()));
    }
    let budget = 10 * n;
    let mut attempts = 0usize;
    let maxima = spec.maxima();
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        loop {
            if attempts >= budget {
                return Err(Error::ResamplingExhausted { attempts });
            }
            attempts += 1;
            let x0 = rng.random_range(sampling.x_range.0..=sampling.x_range.1);
            let v0 = rng.random_range(sampling.v_range.0..=sampling.v_range.1);
            if maxima.iter().any(|&m| (x0 - m).hypot(v0) < SEPARATRIX_EXCLUSION) {
                continue;
            }
            let outcome = simulate_particle(spec, x0, v0)?;
            if !outcome.settled {
                continue;
            }
            data.push(T::lit(x0));
            data.push(T::lit(v0));
            labels.push(outcome.label);
            break;
        }
    }
    let mut params = BTreeMap::new();
    params.insert("n".into(), n as f64);
    params.insert("k".into(), spec.k);
    params.insert("friction".into(), spec.friction);
    for (i, m) in spec.minima.iter().enumerate() {
        params.insert(format!("minimum_{i}"), *m);
    }
    params.insert("x_min".into(), sampling.x_range.0);
    params.insert("x_max".into(), sampling.x_range.1);
    params.insert("v_min".into(), sampling.v_range.0);
    params.insert("v_max".into(), sampling.v_range.1);
    LabeledDataset::new(
        Tensor::from_vec(n, 2, data)?,
        labels,
        3,
        DatasetMeta {
            generator: "energy_landscape".into(),
            seed,
            params,
        },
    )
}
