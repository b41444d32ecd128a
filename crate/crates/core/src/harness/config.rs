//! TOML experiment configuration.
//!
//! ```toml
//! algorithm = "aras"          # arig | aras | sgd | sgd-momentum | svrg | varchen | sdlbfgs-vr
//! seed = 1
//! output = "runs/aras.csv"    # metrics CSV; the manifest goes next to it
//! cadence = 0                 # full-pass metrics every k iterations, 0 = per epoch
//!
//! [problem]
//! kind = "logistic"           # logistic | sigmoid-svm | quadratic
//! reg = 1e-4
//! dataset = "train.svm"       # or a [problem.synthetic] table
//! format = "libsvm"           # libsvm | csv (default: from the file extension)
//! test = "test.svm"
//!
//! [problem.synthetic]
//! samples = 2000
//! dim = 50
//! noise = 0.1
//! condition = 10.0
//! labels = "linear"           # linear | sigmoid-planted
//! seed = 7
//! test_samples = 500
//!
//! [aras]
//! sigma0 = 1.0
//! batch0 = 32
//! ```
//!
//! Algorithm sections are `[arig]`, `[aras]`, `[baseline]` (shared by sgd,
//! sgd-momentum and svrg) and `[varchen]` (shared by varchen and
//! sdlbfgs-vr). Missing keys take their defaults. Relative paths resolve
//! against the directory of the config file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aras::ArasParams;
use crate::baselines::BaselineParams;
use crate::error::{Error, Result};
use crate::harness::synthetic::{LabelModel, SyntheticSpec};
use crate::problems::LossKind;
use crate::regularization::{OracleMode, RegParams};
use crate::varchen::{StepSchedule, VarchenParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Arig,
    Aras,
    Sgd,
    SgdMomentum,
    Svrg,
    Varchen,
    SdlbfgsVr,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Arig,
        Algorithm::Aras,
        Algorithm::Sgd,
        Algorithm::SgdMomentum,
        Algorithm::Svrg,
        Algorithm::Varchen,
        Algorithm::SdlbfgsVr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Arig => "arig",
            Algorithm::Aras => "aras",
            Algorithm::Sgd => "sgd",
            Algorithm::SgdMomentum => "sgd-momentum",
            Algorithm::Svrg => "svrg",
            Algorithm::Varchen => "varchen",
            Algorithm::SdlbfgsVr => "sdlbfgs-vr",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Algorithm::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            let names: Vec<_> = Algorithm::ALL.iter().map(|a| a.name()).collect();
            format!("unknown algorithm {s:?}; valid names: {}", names.join(", "))
        })
    }
}

pub fn parse_loss_kind(s: &str) -> std::result::Result<LossKind, String> {
    [LossKind::Logistic, LossKind::SigmoidSvm, LossKind::Quadratic]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown problem kind {s:?}; valid kinds: logistic, sigmoid-svm, quadratic"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub samples: usize,
    pub dim: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_condition")]
    pub condition: f64,
    #[serde(default = "default_labels")]
    pub labels: LabelModel,
    #[serde(default)]
    pub seed: u64,
    /// Extra samples from the same planted model, held out as a test split.
    #[serde(default)]
    pub test_samples: usize,
}

fn default_condition() -> f64 {
    1.0
}

fn default_labels() -> LabelModel {
    LabelModel::Linear
}

impl SyntheticSection {
    /// Spec generating the training and test samples together.
    pub fn combined_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            samples: self.samples + self.test_samples,
            dim: self.dim,
            noise: self.noise,
            condition: self.condition,
            labels: self.labels,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: String,
    #[serde(default)]
    pub reg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    /// 0-based label column for CSV input.
    #[serde(default)]
    pub label_column: usize,
    /// Whether CSV input starts with a header row.
    #[serde(default)]
    pub header: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Libsvm,
    Csv,
}

impl ProblemConfig {
    pub fn data_format(&self) -> std::result::Result<DataFormat, String> {
        match self.format.as_deref() {
            Some("libsvm") => Ok(DataFormat::Libsvm),
            Some("csv") => Ok(DataFormat::Csv),
            Some(other) => Err(format!("unknown data format {other:?}; valid formats: libsvm, csv")),
            None => Ok(match self.dataset.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
                Some(ext) if ext.eq_ignore_ascii_case("csv") => DataFormat::Csv,
                _ => DataFormat::Libsvm,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArigSection {
    pub oracle: String,
    pub tol: f64,
    pub sigma0: f64,
    pub sigma_min: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub eta0: f64,
    pub max_iters: usize,
}

impl Default for ArigSection {
    fn default() -> Self {
        let p = RegParams::default();
        Self {
            oracle: "exact".into(),
            tol: p.tol,
            sigma0: p.sigma0,
            sigma_min: p.sigma_min,
            eta1: p.eta1,
            eta2: p.eta2,
            gamma1: p.gamma1,
            gamma2: p.gamma2,
            gamma3: p.gamma3,
            eta0: p.eta0,
            max_iters: p.max_iters,
        }
    }
}

impl ArigSection {
    pub fn params(&self) -> RegParams {
        RegParams {
            tol: self.tol,
            sigma0: self.sigma0,
            sigma_min: self.sigma_min,
            eta1: self.eta1,
            eta2: self.eta2,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            gamma3: self.gamma3,
            eta0: self.eta0,
            max_iters: self.max_iters,
            ..RegParams::default()
        }
    }

    pub fn oracle_mode(&self) -> std::result::Result<OracleMode, String> {
        match self.oracle.as_str() {
            "exact" => Ok(OracleMode::Exact),
            "inexact-g" => Ok(OracleMode::InexactGradient),
            "inexact-g-and-f" => Ok(OracleMode::InexactGradientAndValue),
            other => Err(format!(
                "unknown arig oracle {other:?}; valid oracles: exact, inexact-g, inexact-g-and-f"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArasSection {
    pub sigma0: f64,
    pub sigma_min: f64,
    pub eta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub batch0: usize,
    pub max_batch: usize,
    pub burn_in: usize,
    pub epochs: usize,
}

impl Default for ArasSection {
    fn default() -> Self {
        let p = ArasParams::default();
        Self {
            sigma0: p.sigma0,
            sigma_min: p.sigma_min,
            eta: p.eta,
            gamma1: p.gamma1,
            gamma2: p.gamma2,
            batch0: p.batch0,
            max_batch: p.max_batch,
            burn_in: p.burn_in,
            epochs: p.epochs,
        }
    }
}

impl ArasSection {
    pub fn params(&self) -> ArasParams {
        ArasParams {
            sigma0: self.sigma0,
            sigma_min: self.sigma_min,
            eta: self.eta,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            batch0: self.batch0,
            max_batch: self.max_batch,
            burn_in: self.burn_in,
            epochs: self.epochs,
        }
    }
}

fn schedule_from(schedule: &str, step: f64, beta: f64) -> std::result::Result<StepSchedule, String> {
    match schedule {
        "constant" => Ok(StepSchedule::Constant(step)),
        "harmonic" => Ok(StepSchedule::Harmonic(step)),
        "power" => Ok(StepSchedule::Power { scale: step, beta }),
        other => Err(format!("unknown step schedule {other:?}; valid schedules: constant, harmonic, power")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub schedule: String,
    pub step: f64,
    pub beta: f64,
    pub momentum: f64,
    pub batch: usize,
    pub epochs: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let p = BaselineParams::default();
        Self {
            schedule: "constant".into(),
            step: 0.1,
            beta: 0.75,
            momentum: p.momentum,
            batch: p.batch,
            epochs: p.epochs,
        }
    }
}

impl BaselineSection {
    pub fn params(&self) -> std::result::Result<BaselineParams, String> {
        Ok(BaselineParams {
            schedule: schedule_from(&self.schedule, self.step, self.beta)?,
            momentum: self.momentum,
            batch: self.batch,
            epochs: self.epochs,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarchenSection {
    pub memory: usize,
    pub eta: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub gamma_under: f64,
    pub gamma_over: f64,
    pub batch: usize,
    pub schedule: String,
    pub step: f64,
    pub beta: f64,
    pub epochs: usize,
}

impl Default for VarchenSection {
    fn default() -> Self {
        let p = VarchenParams::default();
        Self {
            memory: p.memory,
            eta: p.eta,
            lambda_min: p.lambda_min,
            lambda_max: p.lambda_max,
            gamma_under: p.gamma_under,
            gamma_over: p.gamma_over,
            batch: p.batch,
            schedule: "constant".into(),
            step: 0.1,
            beta: 0.75,
            epochs: p.epochs,
        }
    }
}

impl VarchenSection {
    pub fn params(&self) -> std::result::Result<VarchenParams, String> {
        Ok(VarchenParams {
            memory: self.memory,
            eta: self.eta,
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
            gamma_under: self.gamma_under,
            gamma_over: self.gamma_over,
            batch: self.batch,
            schedule: schedule_from(&self.schedule, self.step, self.beta)?,
            epochs: self.epochs,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub cadence: usize,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub arig: ArigSection,
    #[serde(default)]
    pub aras: ArasSection,
    #[serde(default)]
    pub baseline: BaselineSection,
    #[serde(default)]
    pub varchen: VarchenSection,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("metrics.csv")
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string().trim_end().to_string()]))
    }

    /// Parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    pub fn algorithm(&self) -> std::result::Result<Algorithm, String> {
        self.algorithm.parse()
    }

    /// Every problem with the config, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let algorithm = match self.algorithm() {
            Ok(a) => Some(a),
            Err(e) => {
                v.push(e);
                None
            }
        };
        let p = &self.problem;
        if let Err(e) = parse_loss_kind(&p.kind) {
            v.push(e);
        }
        if !(p.reg >= 0.0 && p.reg.is_finite()) {
            v.push(format!("problem.reg must be finite and >= 0, got {}", p.reg));
        }
        match (&p.dataset, &p.synthetic) {
            (Some(_), Some(_)) => v.push("problem: give either dataset or synthetic, not both".into()),
            (None, None) => v.push("problem: one of dataset or synthetic is required".into()),
            _ => {}
        }
        if let Err(e) = p.data_format() {
            v.push(e);
        }
        if p.synthetic.is_some() && p.test.is_some() {
            v.push("problem.test cannot be combined with synthetic data; use synthetic.test_samples".into());
        }
        let samples = p.synthetic.as_ref().map(|s| s.samples);
        if let Some(s) = &p.synthetic {
            v.extend(s.combined_spec().violations().into_iter().map(|m| format!("problem.{m}")));
            if s.samples < 2 {
                v.push(format!("problem.synthetic.samples must be >= 2, got {}", s.samples));
            }
        }
        let prefixed = |section: &str, msgs: Vec<String>| -> Vec<String> {
            msgs.into_iter().map(|m| format!("{section}: {m}")).collect()
        };
        match algorithm {
            Some(Algorithm::Arig) => {
                if let Err(e) = self.arig.oracle_mode() {
                    v.push(format!("arig: {e}"));
                }
                v.extend(prefixed("arig", self.arig.params().violations()));
            }
            Some(Algorithm::Aras) => {
                let params = self.aras.params();
                v.extend(prefixed("aras", params.violations()));
                if let Some(n) = samples {
                    if params.max_batch > n {
                        v.push(format!("aras: max_batch ({}) exceeds the number of samples ({n})", params.max_batch));
                    }
                }
            }
            Some(Algorithm::Sgd | Algorithm::SgdMomentum | Algorithm::Svrg) => match self.baseline.params() {
                Ok(params) => v.extend(prefixed("baseline", params.violations())),
                Err(e) => v.push(format!("baseline: {e}")),
            },
            Some(Algorithm::Varchen | Algorithm::SdlbfgsVr) => match self.varchen.params() {
                Ok(params) => v.extend(prefixed("varchen", params.violations())),
                Err(e) => v.push(format!("varchen: {e}")),
            },
            None => {}
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}
