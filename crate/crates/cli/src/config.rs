//! Run configuration: TOML with `[model]`, `[train]`, `[inference]`, `[data]`
//! and `[output]` sections, plus optional `[diagnose]`, `[oracle]` and
//! `[race]`. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pcnlab::baselines::TpConfig;
use pcnlab::data::{load_idx, synth_dataset, teacher_dataset, VALIDATION_FRACTION};
use pcnlab::oracle::{PopulationConfig, DEFAULT_LAMBDA};
use pcnlab::{
    Activation, Algorithm, DatasetHandle, InferenceConfig, OptimizerConfig, OptimizerKind, PcnModel, SynthKind,
    TrainConfig,
};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub inference: InferenceSection,
    pub data: DataSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub diagnose: DiagnoseSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub race: RaceSection,
    /// Directory of the config file; relative data paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    #[default]
    GlorotUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Layer widths, input first.
    pub dims: Vec<usize>,
    /// Hidden-layer activation.
    #[serde(default = "default_hidden")]
    pub activation: Activation,
    #[serde(default = "default_output")]
    pub output_activation: Activation,
    /// Per-layer activations; overrides the two fields above.
    #[serde(default)]
    pub activations: Option<Vec<Activation>>,
    #[serde(default = "yes")]
    pub bias: bool,
    #[serde(default)]
    pub init: InitScheme,
    /// Multiplies every initial weight (not bias).
    #[serde(default = "one")]
    pub init_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub algorithm: Algorithm,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    /// RMSProp squared-gradient decay.
    pub decay: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub log_every: usize,
    pub geometry_every: Option<usize>,
    pub tp_feedback_lr: f64,
    pub tp_noise_std: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        let tp = TpConfig::default();
        Self {
            algorithm: Algorithm::PcSe,
            optimizer: opt.kind,
            lr: opt.lr,
            momentum: opt.momentum,
            decay: opt.decay,
            batch: 128,
            epochs: 10,
            seed: 0,
            shuffle: true,
            log_every: 1,
            geometry_every: None,
            tp_feedback_lr: tp.feedback_lr,
            tp_noise_std: tp.noise_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceSection {
    pub gamma: f64,
    /// Iteration cap `T`.
    pub steps: usize,
    pub tol: f64,
}

impl Default for InferenceSection {
    fn default() -> Self {
        let d = InferenceConfig::default();
        Self {
            gamma: d.gamma,
            steps: d.max_iters,
            tol: d.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSection {
    Synth {
        kind: SynthKind,
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    /// IDX image/label pair (optionally gzip-compressed); relative paths are
    /// resolved against the config file's directory.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        limit: Option<usize>,
    },
    /// Inputs uniform in `[0, 1]` with targets from the initialized model, so
    /// the initial weights are an exact equilibrium.
    Teacher {
        n: usize,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseSection {
    pub magnitude: f64,
    pub perturbations: u64,
    pub horizon: usize,
    /// Recovery step size; defaults to `1 / λ_max` of the Hessian at the
    /// equilibrium.
    pub lr: Option<f64>,
    /// Gradient steps (then Newton refinement) used to locate the equilibrium
    /// when the data is not teacher-generated.
    pub equilibrium_steps: usize,
    pub equilibrium_lr: f64,
    /// Samples whose inference runs are monitored by `diagnose lyapunov`.
    pub inference_samples: usize,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        Self {
            magnitude: 0.1,
            perturbations: 20,
            horizon: 2000,
            lr: None,
            equilibrium_steps: 5000,
            equilibrium_lr: 0.1,
            inference_samples: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleInstance {
    /// The seeded tiny-net population.
    #[default]
    Population,
    /// The configured model and data, trained per `[train]`.
    Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub instance: OracleInstance,
    pub seeds: Vec<u64>,
    pub lambda: f64,
    pub train_steps: usize,
    pub train_lr: f64,
    pub single_layer: bool,
}

impl Default for OracleSection {
    fn default() -> Self {
        let p = PopulationConfig::default();
        Self {
            instance: OracleInstance::Population,
            seeds: p.seeds,
            lambda: DEFAULT_LAMBDA,
            train_steps: p.train_steps,
            train_lr: p.train_lr,
            single_layer: p.single_layer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RaceSection {
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    /// Fraction of each run's own best validation accuracy.
    pub fraction: f64,
}

impl Default for RaceSection {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::PcSe, Algorithm::Bp],
            seeds: (0..5).collect(),
            fraction: 0.95,
        }
    }
}

fn default_hidden() -> Activation {
    Activation::Tanh
}

fn default_output() -> Activation {
    Activation::Identity
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Reads, parses and validates.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.model;
        if m.dims.len() < 2 || m.dims.contains(&0) {
            return Err(invalid("model.dims needs at least two positive widths"));
        }
        if let Some(a) = &m.activations {
            if a.len() != m.dims.len() - 1 {
                return Err(invalid(format!(
                    "model.activations has {} entries for {} layers",
                    a.len(),
                    m.dims.len() - 1
                )));
            }
        }
        if !(m.init_scale.is_finite() && m.init_scale > 0.0) {
            return Err(invalid("model.init_scale must be positive"));
        }
        let t = &self.train;
        if !(t.lr.is_finite() && t.lr > 0.0) {
            return Err(invalid("train.lr must be positive"));
        }
        if !(0.0..1.0).contains(&t.momentum) || !(0.0..1.0).contains(&t.decay) {
            return Err(invalid("train.momentum and train.decay must lie in [0, 1)"));
        }
        let d = &self.diagnose;
        if !(d.magnitude.is_finite() && d.magnitude >= 0.0) {
            return Err(invalid("diagnose.magnitude must be nonnegative"));
        }
        if d.lr.is_some_and(|lr| !(lr.is_finite() && lr > 0.0)) || !(d.equilibrium_lr > 0.0) {
            return Err(invalid("diagnose step sizes must be positive"));
        }
        if !(self.oracle.lambda.is_finite() && self.oracle.lambda >= 0.0) || !(self.oracle.train_lr > 0.0) {
            return Err(invalid(
                "oracle.lambda must be nonnegative and oracle.train_lr positive",
            ));
        }
        if !(self.race.fraction > 0.0 && self.race.fraction <= 1.0) {
            return Err(invalid("race.fraction must lie in (0, 1]"));
        }
        match &self.data {
            DataSection::Synth { n, .. } | DataSection::Teacher { n, .. } if *n < 4 => {
                return Err(invalid("data.n must be at least 4"));
            }
            _ => {}
        }
        self.train_config().validate().map_err(|e| invalid(e.to_string()))
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.train.seed = s;
        }
        self
    }

    /// First 16 hex characters of SHA-256 over the compact JSON rendering of
    /// the config with `output.dir` blanked; data paths enter as written. Field order is fixed by the
    /// struct layout, so the rendering is canonical.
    pub fn run_id(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn activations(&self) -> Vec<Activation> {
        let m = &self.model;
        m.activations.clone().unwrap_or_else(|| {
            let depth = m.dims.len() - 1;
            (0..depth)
                .map(|l| {
                    if l + 1 == depth {
                        m.output_activation
                    } else {
                        m.activation
                    }
                })
                .collect()
        })
    }

    pub fn inference_config(&self) -> InferenceConfig {
        InferenceConfig {
            gamma: self.inference.gamma,
            max_iters: self.inference.steps,
            tol: self.inference.tol,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            algorithm: t.algorithm,
            optimizer: OptimizerConfig {
                kind: t.optimizer,
                lr: t.lr,
                momentum: t.momentum,
                decay: t.decay,
                ..OptimizerConfig::default()
            },
            batch_size: t.batch,
            epochs: t.epochs,
            seed: t.seed,
            shuffle: t.shuffle,
            inference: self.inference_config(),
            tp: TpConfig {
                feedback_lr: t.tp_feedback_lr,
                noise_std: t.tp_noise_std,
            },
            log_every: t.log_every,
            geometry_every: t.geometry_every,
            run_id: self.run_id(),
        }
    }

    /// Glorot-uniform initialization seeded by `train.seed`.
    pub fn init_model(&self) -> Result<PcnModel, CliError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.train.seed);
        let mut model = PcnModel::glorot(&self.model.dims, &self.activations(), self.model.bias, &mut rng)
            .map_err(|e| invalid(e.to_string()))?;
        if self.model.init_scale != 1.0 {
            for layer in model.layers_mut() {
                for w in layer.weights.as_mut_slice() {
                    *w *= self.model.init_scale;
                }
            }
        }
        Ok(model)
    }

    /// Loads the configured data and checks it against the model shape.
    pub fn dataset(&self, model: &PcnModel) -> Result<DatasetHandle, CliError> {
        let data = match &self.data {
            DataSection::Synth { kind, n, seed } => synth_dataset(*kind, *n, *seed)?,
            DataSection::Idx { images, labels, limit } => {
                let d = load_idx(self.base_dir.join(images), self.base_dir.join(labels))?;
                match limit {
                    Some(n) => d.take(*n),
                    None => d,
                }
            }
            DataSection::Teacher { n, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                teacher_dataset(model, *n, &mut rng)?
            }
        };
        if data.input_dim() != model.input_dim() || data.target_dim() != model.output_dim() {
            return Err(invalid(format!(
                "data has input {} / target {} but the model expects {} / {}",
                data.input_dim(),
                data.target_dim(),
                model.input_dim(),
                model.output_dim()
            )));
        }
        Ok(data)
    }

    /// Classification data keeps its last [`VALIDATION_FRACTION`] for
    /// validation; regression data trains on everything.
    pub fn split(&self, data: DatasetHandle) -> (DatasetHandle, Option<DatasetHandle>) {
        if data.is_classification() {
            let (train, val) = data.split_validation(VALIDATION_FRACTION);
            (train, Some(val))
        } else {
            (data, None)
        }
    }

    pub fn population_config(&self) -> PopulationConfig {
        PopulationConfig {
            seeds: self.oracle.seeds.clone(),
            lambda: self.oracle.lambda,
            train_steps: self.oracle.train_steps,
            train_lr: self.oracle.train_lr,
            inference: PopulationConfig::default().inference,
            single_layer: self.oracle.single_layer,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
dims = [2, 4, 2]

[data]
source = "synth"
kind = "two_gaussians"
n = 32
"#;

    #[test]
    fn defaults_mirror_the_reference_optimizer() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.train.optimizer, OptimizerKind::SgdMomentum);
        assert_eq!((c.train.lr, c.train.momentum, c.train.batch), (1e-3, 0.9, 128));
        assert_eq!(c.activations(), vec![Activation::Tanh, Activation::Identity]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[output]\ndir = \"x\"\ncolour = 3\n");
        assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn run_id_ignores_output_dir_but_not_seed() {
        let a = RunConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output.dir = PathBuf::from("elsewhere");
        assert_eq!(a.run_id(), b.run_id());
        assert_eq!(a.run_id().len(), 16);
        assert_ne!(a.run_id(), a.clone().with_seed(Some(9)).run_id());
    }

    #[test]
    fn out_of_range_values_are_config_errors() {
        for bad in ["lr = -1.0", "momentum = 1.5", "batch = 0"] {
            let text = format!("{MINIMAL}\n[train]\n{bad}\n");
            assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))), "{bad}");
        }
    }
}
