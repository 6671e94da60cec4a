use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nodelab::adaption::{train_with_adaption, AdaptionState};
use nodelab::datasets::{
    generate_energy_landscape_dataset, generate_spheres_dataset, read_dataset_csv, read_meta, write_dataset_csv,
    write_meta, DatasetMeta,
};
use nodelab::diagnostics::{solver_grid_eval, ConsistencyReport, Verdict, CONSISTENCY_HEADER};
use nodelab::model::{train, trained_successfully, write_checkpoint, TrainLog};
use nodelab::odesolve::{Method, SolverConfig};
use nodelab::{LabeledDataset, NeuralOdeModel};

use crate::config::{DatasetKind, ExperimentConfig};
use crate::output::OutputDir;
use crate::report::{summarize, write_report_csv, ReportRow};

/// One line of `summary.csv`, shared by `train`, `grid`, and `report`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: DatasetKind,
    pub seed: u64,
    pub train_solver: Method,
    /// Final step count (varies during adaptive runs).
    pub train_k: usize,
    pub adaptive: bool,
    pub train_acc: f64,
    pub test_acc: f64,
    pub mean_nfe: f64,
    pub max_drop: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    pub excluded: bool,
}

pub fn build_dataset(config: &ExperimentConfig, base_dir: &Path) -> Result<LabeledDataset> {
    let d = &config.dataset;
    if let Some(path) = &d.path {
        let path = base_dir.join(path);
        if !path.is_file() {
            bail!(
                "dataset file {} does not exist; run `nodelab generate` first",
                path.display()
            );
        }
        let meta_path = meta_path_for(&path);
        let meta = if meta_path.is_file() {
            let text = std::fs::read_to_string(&meta_path)?;
            read_meta(&text)
                .with_context(|| format!("reading {}", meta_path.display()))?
                .0
        } else {
            DatasetMeta {
                generator: "file".into(),
                seed: 0,
                params: Default::default(),
            }
        };
        let file = std::fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let data = read_dataset_csv(std::io::BufReader::new(file), Some(config.classes()), meta)
            .with_context(|| format!("reading {}", path.display()))?;
        return Ok(data);
    }
    let data = match d.kind {
        DatasetKind::Spheres => generate_spheres_dataset(config.dim(), d.n, d.seed)?,
        DatasetKind::Landscape => generate_energy_landscape_dataset(
            &d.potential.clone().unwrap_or_default(),
            d.n,
            d.seed,
            &d.sampling.clone().unwrap_or_default(),
        )?,
    };
    Ok(data)
}

fn meta_path_for(csv: &Path) -> PathBuf {
    csv.with_extension("meta.toml")
}

pub fn cmd_generate(config: &ExperimentConfig, out: &mut OutputDir) -> Result<Vec<String>> {
    let mut config = config.clone();
    config.dataset.path = None;
    let data = build_dataset(&config, Path::new("."))?;
    out.write_with("dataset.csv", |buf| write_dataset_csv(&data, buf))?;
    out.write("dataset.meta.toml", write_meta(&data).as_bytes())?;
    log::info!("wrote {} points in {} classes", data.len(), data.classes);
    Ok(Vec::new())
}

struct RunOutput {
    model: NeuralOdeModel,
    log: TrainLog,
    adaption: Option<AdaptionState>,
    report: ConsistencyReport,
    summary: RunSummary,
}

fn run_one(
    config: &ExperimentConfig,
    data: &LabeledDataset,
    solver: SolverConfig,
    seed: u64,
    adapt: bool,
) -> Result<RunOutput> {
    let spec = config.model_spec()?;
    let model = NeuralOdeModel::init(&spec, solver, seed)?;
    let train_config = config.train_config(seed);
    let (model, log, adaption) = if adapt {
        let out = train_with_adaption(model, data, &train_config, &config.adaption)?;
        (out.model, out.log, Some(out.state))
    } else {
        let (model, log) = train(model, data, &train_config)?;
        (model, log, None)
    };
    let (train_set, test_set) = train_config.split(data)?;
    let train_acc = log.final_train_accuracy().unwrap_or(0.0);
    let test_acc = log.final_test_accuracy().unwrap_or(0.0);
    let g = &config.grid;
    let report = solver_grid_eval(&model, &test_set, &g.factors, &g.methods, g.threshold)?;
    let summary = RunSummary {
        dataset: config.dataset.kind,
        seed,
        train_solver: model.solver.method,
        train_k: model.solver.steps,
        adaptive: adapt,
        train_acc,
        test_acc,
        mean_nfe: log.mean_nfe_per_iteration(),
        max_drop: report.max_drop,
        threshold: g.threshold,
        verdict: report.verdict,
        excluded: !trained_successfully(train_acc, &train_set),
    };
    Ok(RunOutput {
        model,
        log,
        adaption,
        report,
        summary,
    })
}

fn write_summaries(out: &mut OutputDir, rows: &[RunSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().context("flushing summary csv")?;
    out.write("summary.csv", &bytes)
}

fn run_label(seed: u64, steps: usize) -> String {
    format!("seed {seed} K {steps}")
}

pub fn cmd_train(config: &ExperimentConfig, base_dir: &Path, adapt: bool, out: &mut OutputDir) -> Result<Vec<String>> {
    let data = build_dataset(config, base_dir)?;
    let results: Vec<(u64, Result<RunOutput>)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            log::info!("training seed {seed}");
            (seed, run_one(config, &data, config.solver, seed, adapt))
        })
        .collect();

    let mut failures = Vec::new();
    let mut summaries = Vec::new();
    for (seed, result) in results {
        match result {
            Ok(run) => {
                let dir = format!("seed_{seed}");
                out.write(
                    &format!("{dir}/checkpoint.txt"),
                    write_checkpoint(&run.model).as_bytes(),
                )?;
                out.write_with(&format!("{dir}/train_log.csv"), |b| run.log.write_csv(b))?;
                out.write_with(&format!("{dir}/consistency.csv"), |b| run.report.write_csv(b))?;
                if let Some(state) = &run.adaption {
                    out.write_with(&format!("{dir}/adaption_history.csv"), |b| state.write_history_csv(b))?;
                }
                summaries.push(run.summary);
            }
            Err(e) => failures.push(format!("seed {seed}: {e:#}")),
        }
    }
    write_summaries(out, &summaries)?;
    Ok(failures)
}

pub fn cmd_grid(config: &ExperimentConfig, base_dir: &Path, out: &mut OutputDir) -> Result<Vec<String>> {
    let data = build_dataset(config, base_dir)?;
    let jobs: Vec<(usize, u64)> = config
        .grid
        .steps
        .iter()
        .flat_map(|&k| config.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let results: Vec<((usize, u64), Result<RunOutput>)> = jobs
        .par_iter()
        .map(|&(steps, seed)| {
            log::info!("grid run {}", run_label(seed, steps));
            let solver = SolverConfig { steps, ..config.solver };
            ((steps, seed), run_one(config, &data, solver, seed, false))
        })
        .collect();

    let mut failures = Vec::new();
    let mut summaries = Vec::new();
    let mut grid = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["seed", "excluded"];
    header.extend(CONSISTENCY_HEADER);
    grid.write_record(&header)?;
    for ((steps, seed), result) in results {
        match result {
            Ok(run) => {
                for row in run.report.csv_rows() {
                    let mut rec = vec![seed.to_string(), run.summary.excluded.to_string()];
                    rec.extend(row);
                    grid.write_record(&rec)?;
                }
                out.write(
                    &format!("checkpoints/K{steps}_seed{seed}.txt"),
                    write_checkpoint(&run.model).as_bytes(),
                )?;
                summaries.push(run.summary);
            }
            Err(e) => failures.push(format!("{}: {e:#}", run_label(seed, steps))),
        }
    }
    let grid = grid.into_inner().context("flushing grid csv")?;
    out.write("grid.csv", &grid)?;
    write_summaries(out, &summaries)?;
    Ok(failures)
}

pub fn read_summaries(path: &Path) -> Result<Vec<RunSummary>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .map(|row| row.with_context(|| format!("parsing {}", path.display())))
        .collect()
}

pub fn cmd_report(files: &[PathBuf], out: &mut OutputDir) -> Result<Vec<ReportRow>> {
    if files.is_empty() {
        bail!("report needs at least one summary.csv");
    }
    let mut runs = Vec::new();
    for f in files {
        runs.extend(read_summaries(f)?);
    }
    let rows = summarize(&runs);
    let mut buf = Vec::new();
    write_report_csv(&rows, &mut buf)?;
    out.write("report.csv", &buf)?;
    Ok(rows)
}

/// Groups summaries per dataset and training method, in a fixed order.
pub fn group_runs(runs: &[RunSummary]) -> BTreeMap<(String, String), Vec<&RunSummary>> {
    let mut groups: BTreeMap<(String, String), Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        let key = (format!("{:?}", r.dataset).to_lowercase(), r.train_solver.to_string());
        groups.entry(key).or_default().push(r);
    }
    groups
}
