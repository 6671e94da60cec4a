use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::odesolve::{flow_values, Method, SolverConfig};
use crate::scalar::Scalar;

/// Steps used for the reference solution.
pub const REFERENCE_STEPS: usize = 1 << 16;

/// Empirical convergence order of `method` on an autonomous field.
///
/// Errors are measured in the max norm against a classical RK4 solution with
/// [`REFERENCE_STEPS`] steps; the result is the least-squares slope of
/// `log(error)` against `log(h)`.
pub fn convergence_order_estimate<T, F>(
    method: Method,
    mut field: F,
    z0: &Tensor<T>,
    horizon: f64,
    steps: &[usize],
) -> Result<f64>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> Result<Tensor<T>>,
{
    if steps.len() < 3 {
        return Err(Error::InvalidConfig("need at least three step counts".into()));
    }
    if steps.windows(2).any(|w| w[0] >= w[1]) || steps[0] == 0 {
        return Err(Error::InvalidConfig(
            "step counts must be positive and strictly increasing".into(),
        ));
    }
    let reference_config = SolverConfig::new(Method::Rk4, REFERENCE_STEPS).with_horizon(horizon);
    let (reference, _) = flow_values(&mut field, z0, &reference_config)?;

    let mut points = Vec::with_capacity(steps.len());
    for &k in steps {
        let config = SolverConfig::new(method, k).with_horizon(horizon);
        let (z, _) = flow_values(&mut field, z0, &config)?;
        let err = z.max_abs_diff(&reference).to_f64_lossy();
        if !(err > 0.0) {
            return Err(Error::Degenerate(format!(
                "zero error at K={k}; the field is integrated exactly"
            )));
        }
        points.push((config.step_size().ln(), err.ln()));
    }
    Ok(least_squares_slope(&points))
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
