//! Model checkpoints: the solver line, the vector field in the MLP weight format,
//! and the classifier layer.
//!
//! ```text
//! nodelab-checkpoint 1
//! solver euler 64 1
//! vector_field
//! nodelab-mlp 1
//! ...
//! end
//! classifier
//! weight 0 <classes> <dim>
//! ...
//! bias 0 1 <classes>
//! ...
//! end
//! ```

use std::fmt::Write as _;

use crate::error::Result;
use crate::model::NeuralOdeModel;
use crate::nn::io::{read_mlp_from, write_mlp, write_tensor, TextReader, FORMAT_VERSION};
use crate::nn::Linear;
use crate::odesolve::{Method, SolverConfig};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &str = "nodelab-checkpoint";

pub fn write_checkpoint<T: Scalar>(model: &NeuralOdeModel<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_MAGIC} {FORMAT_VERSION}");
    let s = &model.solver;
    let _ = writeln!(out, "solver {} {} {}", s.method, s.steps, s.horizon);
    out.push_str("vector_field\n");
    out.push_str(&write_mlp(&model.vector_field));
    out.push_str("classifier\n");
    write_tensor(&mut out, "weight", 0, &model.classifier.weight);
    write_tensor(&mut out, "bias", 0, &model.classifier.bias);
    out.push_str("end\n");
    out
}

pub fn read_checkpoint<T: Scalar>(text: &str) -> Result<NeuralOdeModel<T>> {
    let mut r = TextReader::new(text, "checkpoint");
    let header = r.keyed(CHECKPOINT_MAGIC)?;
    let version: u32 = r.parse(header.first().copied().unwrap_or(""))?;
    if version != FORMAT_VERSION {
        return Err(r.err(format!("unsupported checkpoint version {version}")));
    }
    let solver = r.keyed("solver")?;
    if solver.len() != 3 {
        return Err(r.err("solver line needs method, steps, horizon"));
    }
    let method: Method = solver[0].parse()?;
    let config = SolverConfig::new(method, r.parse(solver[1])?).with_horizon(r.parse(solver[2])?);
    r.keyed("vector_field")?;
    let vector_field = read_mlp_from(&mut r)?;
    r.keyed("classifier")?;
    let weight = r.tensor("weight", 0)?;
    let bias = r.tensor("bias", 0)?;
    r.keyed("end")?;
    NeuralOdeModel::new(vector_field, Linear::new(weight, bias)?, config)
}
