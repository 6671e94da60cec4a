use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_labels(classes: usize, rows: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::ShapeMismatch {
            op: "softmax_cross_entropy",
            lhs: (rows, classes),
            rhs: (labels.len(), 1),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Mean over the batch of `-log softmax(logits)[label]`, recorded on the tape.
pub fn softmax_cross_entropy<T: Scalar>(tape: &mut Tape<T>, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
    let (rows, classes) = tape.value(logits).shape();
    check_labels(classes, rows, labels)?;
    let w = -T::one() / T::from_usize_lossy(rows.max(1));
    let mut pick = Tensor::zeros(rows, classes);
    for (r, &l) in labels.iter().enumerate() {
        pick.set(r, l, w);
    }
    let pick = tape.constant(pick);
    let logp = tape.log_softmax(logits)?;
    let weighted = tape.mul(logp, pick)?;
    tape.sum(weighted)
}

/// Same loss as [`softmax_cross_entropy`] without recording anything.
pub fn softmax_cross_entropy_value<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<T> {
    let (rows, classes) = logits.shape();
    check_labels(classes, rows, labels)?;
    let logp = logits.log_softmax_rows();
    let total: T = labels.iter().enumerate().map(|(r, &l)| logp.get(r, l)).sum();
    Ok(-total / T::from_usize_lossy(rows.max(1)))
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = logits.argmax_rows().iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}
