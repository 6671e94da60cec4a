use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{model_forward, write_checkpoint, NeuralOdeModel};
use crate::nn::{accuracy, softmax_cross_entropy, Optimizer, OptimizerSpec};
use crate::odesolve::{csv_err, SolverConfig};
use crate::scalar::Scalar;

/// Rows per chunk when evaluating without a tape.
const EVAL_CHUNK: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: OptimizerSpec,
    pub iterations: usize,
    /// Seeds minibatch order.
    pub seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Seeds the train/test split; kept fixed across training seeds.
    #[serde(default)]
    pub split_seed: u64,
    /// Full train/test accuracies are logged every this many iterations and after the
    /// last one. Zero logs only after the last iteration.
    #[serde(default)]
    pub eval_every: usize,
}

fn default_train_fraction() -> f64 {
    0.8
}

impl TrainConfig {
    pub fn new(optimizer: OptimizerSpec, batch_size: usize, iterations: usize, seed: u64) -> Self {
        TrainConfig {
            batch_size,
            optimizer,
            iterations,
            seed,
            train_fraction: default_train_fraction(),
            split_seed: 0,
            eval_every: 0,
        }
    }

    pub fn split<T: Scalar>(&self, dataset: &LabeledDataset<T>) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
        dataset.split(self.train_fraction, self.split_seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    pub loss: f64,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub step_size: f64,
    pub steps: usize,
    pub cumulative_nfe: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn final_train_accuracy(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.train_acc)
    }

    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.test_acc)
    }

    pub fn total_nfe(&self) -> u64 {
        self.records.last().map_or(0, |r| r.cumulative_nfe)
    }

    /// Mean vector-field evaluations per training iteration.
    pub fn mean_nfe_per_iteration(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.total_nfe() as f64 / self.records.len() as f64
    }

    /// Writes `iteration,loss,train_acc,test_acc,step_size,cumulative_nfe`; missing
    /// accuracies are left empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "iteration",
            "loss",
            "train_acc",
            "test_acc",
            "step_size",
            "cumulative_nfe",
        ])
        .map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |a| a.to_string());
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                r.loss.to_string(),
                opt(r.train_acc),
                opt(r.test_acc),
                r.step_size.to_string(),
                r.cumulative_nfe.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("train log", e))
    }
}

/// Fraction of correctly classified points, under `solver` or the model's own.
pub fn evaluate_accuracy<T: Scalar>(
    model: &NeuralOdeModel<T>,
    dataset: &LabeledDataset<T>,
    solver: Option<&SolverConfig>,
) -> Result<f64> {
    let solver = solver.unwrap_or(&model.solver);
    let mut hits = 0usize;
    let mut start = 0;
    while start < dataset.len() {
        let end = (start + EVAL_CHUNK).min(dataset.len());
        let idx: Vec<usize> = (start..end).collect();
        let (logits, _) = model.logits_with(&dataset.points.select_rows(&idx), solver)?;
        hits += logits
            .argmax_rows()
            .iter()
            .zip(&dataset.labels[start..end])
            .filter(|(p, l)| p == l)
            .count();
        start = end;
    }
    Ok(hits as f64 / dataset.len().max(1) as f64)
}

/// Margin over chance a run's final train accuracy must exceed to count as trained.
pub const SUCCESS_MARGIN: f64 = 0.15;

/// Accuracy of always predicting the most frequent class.
pub fn chance_level<T: Scalar>(dataset: &LabeledDataset<T>) -> f64 {
    let counts = dataset.class_counts();
    *counts.iter().max().unwrap_or(&0) as f64 / dataset.len().max(1) as f64
}

/// Whether a run beat chance by [`SUCCESS_MARGIN`]; failed runs are reported but
/// left out of aggregates.
pub fn trained_successfully<T: Scalar>(train_acc: f64, train_set: &LabeledDataset<T>) -> bool {
    train_acc > chance_level(train_set) + SUCCESS_MARGIN
}

/// Minibatch training state shared by fixed-step training and step adaption.
pub struct Trainer<T> {
    pub model: NeuralOdeModel<T>,
    pub train_set: LabeledDataset<T>,
    pub test_set: LabeledDataset<T>,
    pub config: TrainConfig,
    pub log: TrainLog,
    optimizer: Optimizer<T>,
    names: Vec<String>,
    last_good: NeuralOdeModel<T>,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    nfe: u64,
    iteration: usize,
}

/// Loss and same-batch accuracy of one optimization step.
#[derive(Clone, Copy, Debug)]
pub struct StepOutcome {
    pub loss: f64,
    pub batch_accuracy: f64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: NeuralOdeModel<T>, dataset: &LabeledDataset<T>, config: TrainConfig) -> Result<Self> {
        model.check_dataset(dataset)?;
        let (train_set, test_set) = config.split(dataset)?;
        if config.batch_size == 0 || config.batch_size > train_set.len() {
            return Err(Error::InvalidConfig(format!(
                "batch size {} must be in 1..={}",
                config.batch_size,
                train_set.len()
            )));
        }
        let optimizer = Optimizer::new(&config.optimizer, model.params().iter().map(|p| p.shape()));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let order: Vec<usize> = (0..train_set.len()).collect();
        Ok(Trainer {
            names: model.param_names(),
            last_good: model.clone(),
            model,
            train_set,
            test_set,
            config,
            log: TrainLog::default(),
            optimizer,
            rng,
            cursor: order.len(),
            order,
            nfe: 0,
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn nfe(&self) -> u64 {
        self.nfe
    }

    /// Counts vector-field evaluations spent outside [`Self::step`].
    pub fn add_nfe(&mut self, n: u64) {
        self.nfe += n;
    }

    /// Next minibatch, reshuffling at each epoch boundary.
    pub fn next_batch(&mut self) -> (Tensor<T>, Vec<usize>) {
        let b = self.config.batch_size;
        if self.cursor + b > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let idx = &self.order[self.cursor..self.cursor + b];
        self.cursor += b;
        let x = self.train_set.points.select_rows(idx);
        let labels = idx.iter().map(|&i| self.train_set.labels[i]).collect();
        (x, labels)
    }

    /// One gradient step on the batch with the model's current solver.
    pub fn step(&mut self, x: &Tensor<T>, labels: &[usize]) -> Result<StepOutcome> {
        let mut tape = Tape::new();
        let bound = self.model.bind(&mut tape);
        let xi = tape.constant(x.clone());
        let out = match model_forward(&mut tape, &bound, xi, &self.model.solver) {
            Ok(out) => out,
            Err(Error::NonFinite(_) | Error::NonFiniteStage { .. }) => return Err(self.diverged()),
            Err(e) => return Err(e),
        };
        let loss = softmax_cross_entropy(&mut tape, out.logits, labels)?;
        let loss_value = tape.value(loss).item();
        let batch_accuracy = accuracy(tape.value(out.logits), labels);
        self.nfe += out.nfe;

        if !loss_value.is_finite() {
            return Err(self.diverged());
        }
        let grads = tape.backward(loss)?;
        let grads: Vec<Tensor<T>> = bound.leaves().into_iter().map(|id| grads.wrt(id)).collect();
        let names = &self.names;
        let mut params = self.model.params_mut();
        if self.optimizer.step(&mut params, names, &grads).is_err() {
            return Err(self.diverged());
        }
        self.last_good = self.model.clone();
        self.iteration += 1;

        let eval_now = self.iteration == self.config.iterations
            || (self.config.eval_every > 0 && self.iteration.is_multiple_of(self.config.eval_every));
        let (train_acc, test_acc) = if eval_now {
            (
                Some(evaluate_accuracy(&self.model, &self.train_set, None)?),
                Some(evaluate_accuracy(&self.model, &self.test_set, None)?),
            )
        } else {
            (None, None)
        };
        self.log.records.push(TrainRecord {
            iteration: self.iteration,
            loss: loss_value.to_f64_lossy(),
            train_acc,
            test_acc,
            step_size: self.model.solver.step_size(),
            steps: self.model.solver.steps,
            cumulative_nfe: self.nfe,
        });
        Ok(StepOutcome {
            loss: loss_value.to_f64_lossy(),
            batch_accuracy,
        })
    }

    fn diverged(&self) -> Error {
        Error::Diverged {
            iteration: self.iteration + 1,
            checkpoint: write_checkpoint(&self.last_good),
        }
    }

    pub fn finish(self) -> (NeuralOdeModel<T>, TrainLog) {
        (self.model, self.log)
    }
}

/// Minibatch training of the softmax cross-entropy loss, backpropagating through
/// every solver step. Deterministic in `config` (and the model's initialization).
pub fn train<T: Scalar>(
    model: NeuralOdeModel<T>,
    dataset: &LabeledDataset<T>,
    config: &TrainConfig,
) -> Result<(NeuralOdeModel<T>, TrainLog)> {
    let mut trainer = Trainer::new(model, dataset, config.clone())?;
    for _ in 0..config.iterations {
        let (x, labels) = trainer.next_batch();
        trainer.step(&x, &labels)?;
    }
    Ok(trainer.finish())
}
