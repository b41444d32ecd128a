//! Running configured experiments, writing their metrics and manifests, and
//! comparing several runs on a shared problem.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::aras::aras_run;
use crate::baselines::{sgd_momentum_run, sgd_run, svrg_run};
use crate::error::{Error, Result};
use crate::harness::config::{parse_loss_kind, Algorithm, DataFormat, ExperimentConfig};
use crate::harness::data_io::{load_csv, load_libsvm, to_libsvm_string};
use crate::harness::synthetic::gen_synthetic;
use crate::metrics::{Cadence, RunOptions, RunStatus, Trace};
use crate::problems::{Dataset, Features, FiniteSumProblem};
use crate::regularization::arig_run;
use crate::varchen::varchen_run;

/// Environment variable capping the number of concurrent runs in [`compare`].
pub const THREADS_ENV: &str = "STOCHOPT_THREADS";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over `blob <len>\0<bytes>`, the way git hashes file contents.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

/// Content hash of the dataset's canonical LIBSVM serialization, prefixed by
/// its dimension so that trailing all-zero features are not lost.
pub fn dataset_hash(data: &Dataset) -> String {
    let text = format!("# dim {}\n{}", data.dim(), to_libsvm_string(data));
    content_hash(text.as_bytes())
}

/// Rebuilds `data` with feature dimension `dim >= data.dim()`.
fn widen(data: Dataset, dim: usize) -> Result<Dataset> {
    if data.dim() == dim {
        return Ok(data);
    }
    let rows = match data.features() {
        Features::Sparse { rows, .. } => rows
            .iter()
            .map(|r| r.indices.iter().copied().zip(r.values.iter().copied()).collect())
            .collect(),
        Features::Dense { .. } => data
            .to_dense_rows()
            .into_iter()
            .map(|r| r.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect())
            .collect(),
    };
    Ok(Dataset::from_sparse_rows(dim, rows, data.labels().to_vec())?.densified_if_small())
}

/// The problem an experiment runs on, plus its held-out split and hashes.
pub struct LoadedProblem {
    pub problem: FiniteSumProblem,
    pub test: Option<Arc<Dataset>>,
    pub dataset_hash: String,
    pub test_hash: Option<String>,
    /// Hash of the loss kind, regularizer and training data.
    pub problem_hash: String,
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<LoadedProblem> {
    let p = &cfg.problem;
    let kind = parse_loss_kind(&p.kind).map_err(|e| Error::Config(vec![e]))?;
    let (train, test) = if let Some(s) = &p.synthetic {
        let all = gen_synthetic(&s.combined_spec())?;
        if s.test_samples == 0 {
            (all, None)
        } else {
            let mut rows = all.to_dense_rows();
            let mut labels = all.labels().to_vec();
            let test_rows = rows.split_off(s.samples);
            let test_labels = labels.split_off(s.samples);
            (
                Dataset::from_dense_rows(rows, labels)?,
                Some(Dataset::from_dense_rows(test_rows, test_labels)?),
            )
        }
    } else {
        let format = p.data_format().map_err(|e| Error::Config(vec![e]))?;
        let load = |path: &Path| match format {
            DataFormat::Libsvm => load_libsvm(path),
            DataFormat::Csv => load_csv(path, p.label_column, p.header),
        };
        let path = p.dataset.as_ref().ok_or_else(|| Error::Config(vec!["problem.dataset is missing".into()]))?;
        let train = load(&cfg.resolve(path))?;
        let test = p.test.as_ref().map(|t| load(&cfg.resolve(t))).transpose()?;
        let dim = train.dim().max(test.as_ref().map_or(0, Dataset::dim));
        (widen(train, dim)?, test.map(|t| widen(t, dim)).transpose()?)
    };
    let train_hash = dataset_hash(&train);
    let test_hash = test.as_ref().map(dataset_hash);
    let problem_hash = content_hash(format!("{} {:e} {}", kind.name(), p.reg, train_hash).as_bytes());
    Ok(LoadedProblem {
        problem: FiniteSumProblem::new(train, p.reg, kind)?,
        test: test.map(Arc::new),
        dataset_hash: train_hash,
        test_hash,
        problem_hash,
    })
}

/// Runs the configured algorithm from the origin without touching the disk.
pub fn run_config(cfg: &ExperimentConfig, loaded: &LoadedProblem) -> Result<Trace> {
    cfg.validate()?;
    let algorithm = cfg.algorithm().map_err(|e| Error::Config(vec![e]))?;
    let problem = &loaded.problem;
    let options = RunOptions { cadence: Cadence::from_count(cfg.cadence), test_set: loaded.test.clone() };
    let x0 = vec![0.0; problem.dim()];
    let config_err = |e: String| Error::Config(vec![e]);
    match algorithm {
        Algorithm::Arig => {
            let mode = cfg.arig.oracle_mode().map_err(config_err)?;
            arig_run(problem, &cfg.arig.params(), mode, x0, cfg.seed, &options)
        }
        Algorithm::Aras => aras_run(problem, &cfg.aras.params(), x0, cfg.seed, &options),
        Algorithm::Sgd => sgd_run(problem, &cfg.baseline.params().map_err(config_err)?, x0, cfg.seed, &options),
        Algorithm::SgdMomentum => {
            sgd_momentum_run(problem, &cfg.baseline.params().map_err(config_err)?, x0, cfg.seed, &options)
        }
        Algorithm::Svrg => svrg_run(problem, &cfg.baseline.params().map_err(config_err)?, x0, cfg.seed, &options),
        Algorithm::Varchen => varchen_run(problem, &cfg.varchen.params().map_err(config_err)?, x0, cfg.seed, &options),
        Algorithm::SdlbfgsVr => {
            let params = cfg.varchen.params().map_err(config_err)?.control_disabled();
            varchen_run(problem, &params, x0, cfg.seed, &options)
        }
    }
}

/// Sidecar written next to every metrics file.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub algorithm: &'a str,
    pub seed: u64,
    pub status: String,
    pub metrics: String,
    pub config_hash: String,
    pub dataset_hash: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_dataset_hash: Option<&'a str>,
    pub problem_hash: &'a str,
    pub config: &'a ExperimentConfig,
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let json = serde_json::to_string(cfg).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(content_hash(json.as_bytes()))
}

/// `<metrics>.manifest.json`
pub fn manifest_path(metrics: &Path) -> PathBuf {
    let mut name = metrics.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    metrics.with_file_name(name)
}

fn status_text(status: &RunStatus) -> String {
    match status {
        RunStatus::Completed => "completed".into(),
        RunStatus::Converged => "converged".into(),
        RunStatus::BudgetExhausted => "budget-exhausted".into(),
        RunStatus::Aborted(why) => format!("aborted: {why}"),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Trace,
    pub metrics_path: PathBuf,
    pub manifest_path: PathBuf,
    pub problem_hash: String,
}

/// Runs `cfg`, writes the metrics CSV to its output path and the manifest
/// next to it.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let loaded = build_problem(cfg)?;
    let trace = run_config(cfg, &loaded)?;
    let metrics_path = cfg.output_path();
    trace.write_csv_file(&metrics_path)?;
    let manifest = Manifest {
        algorithm: &cfg.algorithm,
        seed: cfg.seed,
        status: status_text(&trace.status),
        metrics: metrics_path.display().to_string(),
        config_hash: config_hash(cfg)?,
        dataset_hash: &loaded.dataset_hash,
        test_dataset_hash: loaded.test_hash.as_deref(),
        problem_hash: &loaded.problem_hash,
        config: cfg,
    };
    let manifest_path = manifest_path(&metrics_path);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    std::fs::write(&manifest_path, json + "\n")?;
    Ok(RunOutcome { trace, metrics_path, manifest_path, problem_hash: loaded.problem_hash })
}

/// One line of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub seed: u64,
    pub metrics: String,
    pub status: String,
    pub final_loss: Option<f64>,
    pub best_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub samples: u64,
    pub problem_hash: String,
}

impl SummaryRow {
    fn from_outcome(o: &RunOutcome) -> Self {
        Self {
            algorithm: o.trace.algorithm.clone(),
            seed: o.trace.seed,
            metrics: o.metrics_path.display().to_string(),
            status: status_text(&o.trace.status),
            final_loss: o.trace.final_loss(),
            best_loss: o.trace.best_loss(),
            final_accuracy: o.trace.final_accuracy(),
            samples: o.trace.samples(),
            problem_hash: o.problem_hash.clone(),
        }
    }
}

/// Thread cap from [`THREADS_ENV`]; `None` when unset or unparsable.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs every config (concurrently, up to the thread cap) and summarizes them.
///
/// All configs must describe the same problem and write distinct outputs.
pub fn compare(configs: &[ExperimentConfig]) -> Result<Vec<SummaryRow>> {
    if configs.len() < 2 {
        return Err(Error::Config(vec!["compare needs at least two configs".into()]));
    }
    let mut errs = Vec::new();
    for (k, c) in configs.iter().enumerate() {
        if let Err(Error::Config(v)) = c.validate() {
            errs.extend(v.into_iter().map(|m| format!("config {}: {m}", k + 1)));
        }
    }
    let mut outputs: Vec<PathBuf> = configs.iter().map(ExperimentConfig::output_path).collect();
    outputs.sort();
    if outputs.windows(2).any(|w| w[0] == w[1]) {
        errs.push("compared configs must write to distinct output paths".into());
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let hashes: Vec<String> = configs
        .iter()
        .map(|c| build_problem(c).map(|l| l.problem_hash))
        .collect::<Result<_>>()?;
    if hashes.iter().any(|h| *h != hashes[0]) {
        return Err(Error::Config(vec![
            "compared configs must share one problem (kind, regularizer and data)".into(),
        ]));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let outcomes: Vec<RunOutcome> = pool.install(|| configs.par_iter().map(run_experiment).collect::<Result<_>>())?;
    Ok(outcomes.iter().map(SummaryRow::from_outcome).collect())
}

/// Writes a comparison table as CSV.
pub fn write_summary<W: std::io::Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn git_style_hash_of_empty_blob() {
        // `git hash-object --object-format=sha256 /dev/null`
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn manifest_sits_next_to_metrics() {
        assert_eq!(manifest_path(Path::new("runs/a.csv")), PathBuf::from("runs/a.csv.manifest.json"));
    }
}
