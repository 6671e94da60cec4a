use std::io::Write;

use crate::autodiff::Tensor;
use crate::datasets::PotentialSpec;
use crate::error::{Error, Result};
use crate::model::NeuralOdeModel;
use crate::odesolve::csv_err;
use crate::scalar::Scalar;

/// Regular `nx x nv` grid over the phase-space box, endpoints included.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    pub x_range: (f64, f64),
    pub v_range: (f64, f64),
    pub nx: usize,
    pub nv: usize,
}

impl Default for PhaseGrid {
    fn default() -> Self {
        PhaseGrid {
            x_range: (-3.0, 3.0),
            v_range: (-3.0, 3.0),
            nx: 25,
            nv: 25,
        }
    }
}

impl PhaseGrid {
    pub fn points(&self) -> Vec<[f64; 2]> {
        let axis = |(lo, hi): (f64, f64), n: usize, i: usize| {
            if n == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(self.nx * self.nv);
        for i in 0..self.nx {
            for j in 0..self.nv {
                out.push([axis(self.x_range, self.nx, i), axis(self.v_range, self.nv, j)]);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub x: f64,
    pub v: f64,
    pub learned: [f64; 2],
    pub truth: [f64; 2],
    /// Angle between the two vectors in degrees; `None` where either vanishes.
    pub angle_deg: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldComparison {
    pub samples: Vec<FieldSample>,
    /// Mean over samples with a defined angle.
    pub mean_angle_deg: f64,
}

impl FieldComparison {
    /// Writes `x,v,learned_dx,learned_dv,true_dx,true_dv,angle_deg`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "v", "learned_dx", "learned_dv", "true_dx", "true_dv", "angle_deg"])
            .map_err(csv_err)?;
        for s in &self.samples {
            w.write_record([
                s.x.to_string(),
                s.v.to_string(),
                s.learned[0].to_string(),
                s.learned[1].to_string(),
                s.truth[0].to_string(),
                s.truth[1].to_string(),
                s.angle_deg.map_or(String::new(), |a| a.to_string()),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("field csv", e))
    }
}

/// Angle between two planar vectors in degrees, or `None` if either is zero.
pub fn angle_between(a: [f64; 2], b: [f64; 2]) -> Option<f64> {
    if a == [0.0, 0.0] || b == [0.0, 0.0] {
        return None;
    }
    let cross = a[0] * b[1] - a[1] * b[0];
    let dot = a[0] * b[0] + a[1] * b[1];
    Some(cross.abs().atan2(dot).to_degrees())
}

/// Evaluates the learned vector field next to the damped-particle field on `grid`.
/// Descriptive only: the learned field need not match for good accuracy.
pub fn compare_to_true_field<T: Scalar>(
    model: &NeuralOdeModel<T>,
    potential: &PotentialSpec,
    grid: &PhaseGrid,
) -> Result<FieldComparison> {
    if model.dim() != 2 {
        return Err(Error::NonPlanar(model.dim()));
    }
    let points = grid.points();
    let input = Tensor::from_fn(points.len(), 2, |r, c| T::lit(points[r][c]));
    let learned = model.vector_field.forward(&input)?;
    let mut total = 0.0;
    let mut counted = 0usize;
    let samples: Vec<FieldSample> = points
        .iter()
        .enumerate()
        .map(|(r, &[x, v])| {
            let learned = [learned.get(r, 0).to_f64_lossy(), learned.get(r, 1).to_f64_lossy()];
            let truth = potential.true_field(x, v);
            let angle_deg = angle_between(learned, truth);
            if let Some(a) = angle_deg {
                total += a;
                counted += 1;
            }
            FieldSample {
                x,
                v,
                learned,
                truth,
                angle_deg,
            }
        })
        .collect();
    Ok(FieldComparison {
        samples,
        mean_angle_deg: if counted == 0 { 0.0 } else { total / counted as f64 },
    })
}
