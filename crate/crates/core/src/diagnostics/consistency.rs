use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{evaluate_accuracy, NeuralOdeModel};
use crate::odesolve::{csv_err, Method, SolverConfig};
use crate::scalar::Scalar;

/// Multiples of the training step size probed by default.
pub const DEFAULT_FACTORS: [f64; 5] = [0.5, 0.75, 1.0, 1.5, 2.0];

/// Accuracy drop above which a model counts as solver-locked.
pub const DEFAULT_DROP_THRESHOLD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    OdeLike,
    SolverLocked,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::OdeLike => "ode-like",
            Verdict::SolverLocked => "solver-locked",
        })
    }
}

/// One test solver evaluated on a trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub solver: SolverConfig,
    pub factor: f64,
    pub accuracy: f64,
    /// Whether the test solver has equal or smaller numerical error than training.
    pub flagged: bool,
    /// `baseline - accuracy`.
    pub drop: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub train_solver: SolverConfig,
    pub baseline: f64,
    pub cells: Vec<GridCell>,
    pub threshold: f64,
    /// Largest `|drop|` over flagged cells; zero if none are flagged.
    pub max_drop: f64,
    pub verdict: Verdict,
}

/// Steps that scale the training step size by `factor`, at least one.
pub fn scaled_steps(steps: usize, factor: f64) -> usize {
    ((steps as f64 / factor).round() as usize).max(1)
}

/// Higher order, or the same order with a strictly smaller step.
pub fn is_finer(test: &SolverConfig, train: &SolverConfig) -> bool {
    let (q_test, q_train) = (test.method.order(), train.method.order());
    q_test > q_train || (q_test == q_train && test.step_size() < train.step_size())
}

impl ConsistencyReport {
    /// Derives flags, drops, and the verdict from raw `(solver, factor, accuracy)` cells.
    pub fn from_accuracies(
        train_solver: SolverConfig,
        baseline: f64,
        cells: impl IntoIterator<Item = (SolverConfig, f64, f64)>,
        threshold: f64,
    ) -> Self {
        let cells: Vec<GridCell> = cells
            .into_iter()
            .map(|(solver, factor, accuracy)| GridCell {
                flagged: is_finer(&solver, &train_solver),
                drop: baseline - accuracy,
                solver,
                factor,
                accuracy,
            })
            .collect();
        let max_drop = cells
            .iter()
            .filter(|c| c.flagged)
            .map(|c| c.drop.abs())
            .fold(0.0, f64::max);
        ConsistencyReport {
            train_solver,
            baseline,
            cells,
            threshold,
            max_drop,
            verdict: if max_drop > threshold {
                Verdict::SolverLocked
            } else {
                Verdict::OdeLike
            },
        }
    }

    /// Largest drop among flagged cells using `method`.
    pub fn max_drop_for(&self, method: Method) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.flagged && c.solver.method == method)
            .map(|c| c.drop.abs())
            .fold(0.0, f64::max)
    }
}

/// Re-evaluates `model` under every `(method, round(K / factor))` combination.
pub fn solver_grid_eval<T: Scalar>(
    model: &NeuralOdeModel<T>,
    dataset: &LabeledDataset<T>,
    factors: &[f64],
    methods: &[Method],
    threshold: f64,
) -> Result<ConsistencyReport> {
    if factors.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
        return Err(Error::InvalidConfig(format!(
            "step factors must be positive, got {factors:?}"
        )));
    }
    let train = model.solver;
    let baseline = evaluate_accuracy(model, dataset, None)?;
    let mut cells = Vec::with_capacity(factors.len() * methods.len());
    for &method in methods {
        for &factor in factors {
            let solver = SolverConfig {
                method,
                steps: scaled_steps(train.steps, factor),
                horizon: train.horizon,
            };
            let accuracy = if solver == train {
                baseline
            } else {
                evaluate_accuracy(model, dataset, Some(&solver))?
            };
            cells.push((solver, factor, accuracy));
        }
    }
    Ok(ConsistencyReport::from_accuracies(train, baseline, cells, threshold))
}

/// Column names of the consistency CSV.
pub const CONSISTENCY_HEADER: [&str; 8] = [
    "train_solver",
    "train_K",
    "test_solver",
    "test_K",
    "factor",
    "accuracy",
    "flagged",
    "drop",
];

impl ConsistencyReport {
    /// The eight CSV fields of every cell, in [`CONSISTENCY_HEADER`] order.
    pub fn csv_rows(&self) -> Vec<[String; 8]> {
        self.cells
            .iter()
            .map(|c| {
                [
                    self.train_solver.method.to_string(),
                    self.train_solver.steps.to_string(),
                    c.solver.method.to_string(),
                    c.solver.steps.to_string(),
                    c.factor.to_string(),
                    c.accuracy.to_string(),
                    c.flagged.to_string(),
                    c.drop.to_string(),
                ]
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CONSISTENCY_HEADER).map_err(csv_err)?;
        for row in self.csv_rows() {
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("consistency csv", e))
    }

    /// Rebuilds a report from [`Self::write_csv`] output. The baseline is the
    /// accuracy of the cell that repeats the training solver; flags and the verdict
    /// are recomputed rather than trusted.
    pub fn read_csv<R: Read>(input: R, horizon: f64, threshold: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(csv_err)?.clone();
        if header.iter().ne(CONSISTENCY_HEADER) {
            return Err(Error::parse("consistency csv", format!("unexpected header {header:?}")));
        }
        let mut train: Option<SolverConfig> = None;
        let mut raw = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let field = |i: usize| rec.get(i).unwrap_or_default();
            let bad = |what: &str| Error::parse("consistency csv", format!("row {}: bad {what}", line + 1));
            let this_train = SolverConfig {
                method: field(0).parse().map_err(|_| bad("train_solver"))?,
                steps: field(1).parse().map_err(|_| bad("train_K"))?,
                horizon,
            };
            match train {
                None => train = Some(this_train),
                Some(t) if t != this_train => return Err(bad("train solver (mixed grids)")),
                _ => {}
            }
            let solver = SolverConfig {
                method: field(2).parse().map_err(|_| bad("test_solver"))?,
                steps: field(3).parse().map_err(|_| bad("test_K"))?,
                horizon,
            };
            let factor: f64 = field(4).parse().map_err(|_| bad("factor"))?;
            let accuracy: f64 = field(5).parse().map_err(|_| bad("accuracy"))?;
            raw.push((solver, factor, accuracy));
        }
        let train = train.ok_or_else(|| Error::parse("consistency csv", "no cells"))?;
        let baseline = raw
            .iter()
            .find(|(s, _, _)| *s == train)
            .map(|c| c.2)
            .ok_or_else(|| Error::parse("consistency csv", "grid lacks the training solver cell"))?;
        Ok(Self::from_accuracies(train, baseline, raw, threshold))
    }
}
