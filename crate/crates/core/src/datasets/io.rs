use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::datasets::{DatasetMeta, LabeledDataset};
use crate::error::{Error, Result};
use crate::odesolve::csv_err;
use crate::scalar::Scalar;

/// Writes `x_0,...,x_{D-1},label` with a header row.
pub fn write_dataset_csv<T: Scalar, W: Write>(dataset: &LabeledDataset<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..dataset.dim()).map(|d| format!("x_{d}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(csv_err)?;
    for (r, label) in dataset.labels.iter().enumerate() {
        let mut rec: Vec<String> = dataset.points.row(r).iter().map(|v| v.to_string()).collect();
        rec.push(label.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("dataset csv", e))
}

/// Reads a dataset CSV. `classes` defaults to one more than the largest label.
pub fn read_dataset_csv<T: Scalar, R: Read>(
    input: R,
    classes: Option<usize>,
    meta: DatasetMeta,
) -> Result<LabeledDataset<T>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let dim = header.len().saturating_sub(1);
    let expected: Vec<String> = (0..dim)
        .map(|d| format!("x_{d}"))
        .chain(["label".to_string()])
        .collect();
    if dim == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::parse("dataset csv", format!("unexpected header {header:?}")));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str| Error::parse("dataset csv", format!("row {}: bad {what}", line + 1));
        for field in rec.iter().take(dim) {
            data.push(field.trim().parse::<T>().map_err(|_| bad("coordinate"))?);
        }
        labels.push(rec[dim].trim().parse::<usize>().map_err(|_| bad("label"))?);
    }
    let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    LabeledDataset::new(Tensor::from_vec(labels.len(), dim, data)?, labels, classes, meta)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaFile {
    generator: String,
    seed: u64,
    classes: usize,
    dim: usize,
    n: usize,
    #[serde(default)]
    params: std::collections::BTreeMap<String, f64>,
}

/// Companion key-value metadata (TOML).
pub fn write_meta<T: Scalar>(dataset: &LabeledDataset<T>) -> String {
    let file = MetaFile {
        generator: dataset.meta.generator.clone(),
        seed: dataset.meta.seed,
        classes: dataset.classes,
        dim: dataset.dim(),
        n: dataset.len(),
        params: dataset.meta.params.clone(),
    };
    toml::to_string(&file).expect("metadata serializes")
}

/// Parses metadata written by [`write_meta`]; returns it with the class count.
pub fn read_meta(text: &str) -> Result<(DatasetMeta, usize)> {
    let file: MetaFile = toml::from_str(text).map_err(|e| Error::parse("dataset metadata", e.to_string()))?;
    Ok((
        DatasetMeta {
            generator: file.generator,
            seed: file.seed,
            params: file.params,
        },
        file.classes,
    ))
}
