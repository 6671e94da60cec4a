use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Result of comparing tape gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Max over all coordinates of `|analytic - numeric| / max(1, |numeric|)`.
    pub max_rel_error: f64,
    /// `(parameter index, flat coordinate)` where the max was attained.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

fn eval<T, F>(f: &F, params: &[Tensor<T>]) -> Result<(Tape<T>, Vec<NodeId>, NodeId)>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[NodeId]) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = f(&mut tape, &ids)?;
    Ok((tape, ids, loss))
}

/// Checks the gradient of the scalar function `f` at `params`.
///
/// `f` records its computation on the supplied tape, reading the parameters from the
/// given leaf ids, and returns the `1 x 1` loss node. It is re-run for every probe, so
/// it must be deterministic.
pub fn gradient_check<T, F>(f: F, params: &[Tensor<T>], eps: T) -> Result<GradCheck>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[NodeId]) -> Result<NodeId>,
{
    if !(eps > T::zero()) {
        return Err(Error::InvalidConfig("gradient_check eps must be positive".into()));
    }
    let (tape, ids, loss) = eval(&f, params)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor<T>> = ids.iter().map(|&id| grads.wrt(id)).collect();

    let two_eps = eps + eps;
    let mut probe = params.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for (p, param) in params.iter().enumerate() {
        for i in 0..param.len() {
            let orig = param.data()[i];
            probe[p].data_mut()[i] = orig + eps;
            let (t_plus, _, l_plus) = eval(&f, &probe)?;
            probe[p].data_mut()[i] = orig - eps;
            let (t_minus, _, l_minus) = eval(&f, &probe)?;
            probe[p].data_mut()[i] = orig;

            let numeric = (t_plus.value(l_plus).item() - t_minus.value(l_minus).item()) / two_eps;
            let exact = analytic[p].data()[i];
            if !numeric.is_finite() || !exact.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient check at parameter {p}, coordinate {i}"
                )));
            }
            let err = ((exact - numeric).abs() / numeric.abs().max(T::one())).to_f64_lossy();
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((p, i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_up_to_roundoff() {
        let r = gradient_check(|tape, p| tape.mul(p[0], p[0]), &[Tensor::scalar(3.0f64)], 1e-6).unwrap();
        assert!(r.max_rel_error <= 1e-7, "{r:?}");
    }

    #[test]
    fn kink_of_abs_is_reported() {
        let r = gradient_check(|tape, p| tape.abs(p[0]), &[Tensor::scalar(0.0f64)], 1e-6).unwrap();
        assert!(r.max_rel_error >= 0.5, "{r:?}");
        assert_eq!(r.worst, Some((0, 0)));
    }

    #[test]
    fn non_finite_probe_reports_coordinate() {
        let err = gradient_check(
            |tape, p| {
                let l = tape.log(p[0])?;
                tape.sum(l)
            },
            &[Tensor::from_rows(&[[1.0f64, 1e-7]])],
            1e-6,
        )
        .unwrap_err();
        assert!(err.to_string().contains("coordinate 1"), "{err}");
    }

    #[test]
    fn rejects_nonpositive_eps() {
        assert!(gradient_check(|tape, p| tape.sum(p[0]), &[Tensor::scalar(1.0f64)], 0.0).is_err());
    }
}
