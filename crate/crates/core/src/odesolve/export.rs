use std::io::Write;

use crate::error::Result;
use crate::odesolve::Trajectory;
use crate::scalar::Scalar;

/// Writes `sample_id,step_k,t,z_0,...` rows, one per sample and step.
pub fn write_trajectory_csv<T: Scalar, W: Write>(traj: &Trajectory<T>, step_size: f64, out: W) -> Result<()> {
    let dim = traj.states[0].cols();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sample_id".to_string(), "step_k".into(), "t".into()];
    header.extend((0..dim).map(|d| format!("z_{d}")));
    w.write_record(&header).map_err(csv_err)?;
    for sample in 0..traj.states[0].rows() {
        for (k, state) in traj.states.iter().enumerate() {
            let mut rec = vec![sample.to_string(), k.to_string(), (k as f64 * step_size).to_string()];
            rec.extend(state.row(sample).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| crate::error::Error::io("trajectory csv", e))?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::parse("csv", e.to_string())
}
