//! Minibatch training loops for PC, BP and `dtp-simple`, all emitting the
//! same metrics schema.

pub mod optim;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::bp::{accumulate_bp_grads, loss_of_output};
use crate::baselines::tp::{feedback_grads, tp_forward_grads, TpConfig, TpFeedback};
use crate::data::DatasetHandle;
use crate::error::{PcnError, Result};
use crate::lab::geometry::layer_geometry;
use crate::metrics::{MetricRecord, MetricsLog, Phase};
use crate::pcn::inference::{run_inference, InferenceConfig};
use crate::pcn::learning::{accumulate_energy_weight_grads, weight_update};
use crate::pcn::model::{ParamGrads, PcnModel};
use crate::pcn::state::{energy, feedforward_init_with_loss, OutputLoss};

pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "pc-se")]
    PcSe,
    #[serde(rename = "pc-ce")]
    PcCe,
    #[serde(rename = "bp")]
    Bp,
    #[serde(rename = "dtp-simple")]
    DtpSimple,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::PcSe, Algorithm::PcCe, Algorithm::Bp, Algorithm::DtpSimple];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::PcSe => "pc-se",
            Algorithm::PcCe => "pc-ce",
            Algorithm::Bp => "bp",
            Algorithm::DtpSimple => "dtp-simple",
        }
    }

    /// Output loss the algorithm optimizes.
    pub fn output_loss(self) -> OutputLoss {
        match self {
            Algorithm::PcCe => OutputLoss::CrossEntropy,
            _ => OutputLoss::SquaredError,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = PcnError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| PcnError::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds minibatch shuffling and TP feedback noise/initialization.
    pub seed: u64,
    /// Reshuffle each epoch; otherwise batches follow dataset order.
    pub shuffle: bool,
    pub inference: InferenceConfig,
    pub tp: TpConfig,
    /// Write a learning record every `log_every` steps.
    pub log_every: usize,
    /// Attach per-layer update geometry every `n` steps.
    pub geometry_every: Option<usize>,
    pub run_id: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::PcSe,
            optimizer: OptimizerConfig::default(),
            batch_size: 128,
            epochs: 10,
            seed: 0,
            shuffle: true,
            inference: InferenceConfig::default(),
            tp: TpConfig::default(),
            log_every: 1,
            geometry_every: None,
            run_id: String::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.inference.validate()?;
        if self.batch_size == 0 {
            return Err(PcnError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.log_every == 0 {
            return Err(PcnError::InvalidConfig("log_every must be at least 1".into()));
        }
        if self.geometry_every == Some(0) {
            return Err(PcnError::InvalidConfig("geometry_every must be at least 1".into()));
        }
        if !(self.tp.feedback_lr >= 0.0 && self.tp.noise_std >= 0.0) {
            return Err(PcnError::InvalidConfig(
                "tp feedback_lr and noise_std must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Means over one minibatch.
#[derive(Debug, Clone)]
pub struct BatchStats {
    /// Mean descent gradient; the optimizer steps along its negative.
    pub grads: ParamGrads,
    pub free_energy: f64,
    pub output_loss: f64,
    pub residual: f64,
}

/// PC gradient of one minibatch: inference to `cfg` on every sample, then
/// the mean of the per-sample weight gradients.
pub fn pc_batch(
    model: &PcnModel,
    data: &DatasetHandle,
    indices: &[usize],
    loss: OutputLoss,
    cfg: &InferenceConfig,
) -> Result<BatchStats> {
    let mut grads = ParamGrads::zeros_like(model);
    let (mut f, mut l_out, mut resid) = (0.0, 0.0, 0.0);
    for &i in indices {
        let target = data.target(i);
        let state = feedforward_init_with_loss(model, data.input(i), Some(&target), loss)?;
        let state = run_inference(model, state, cfg)?.state;
        let report = energy(&state);
        f += report.total;
        l_out += report.output_loss;
        resid += report.residual;
        accumulate_energy_weight_grads(model, &state, &mut grads);
    }
    let inv = 1.0 / indices.len() as f64;
    grads.scale(inv);
    Ok(BatchStats {
        grads,
        free_energy: f * inv,
        output_loss: l_out * inv,
        residual: resid * inv,
    })
}

/// Sum (not mean) of per-sample PC weight updates `−η ∂F_impl/∂W`.
pub fn pc_update_sum(
    model: &PcnModel,
    inputs: &[&[f64]],
    targets: &[&[f64]],
    cfg: &InferenceConfig,
    eta: f64,
) -> Result<ParamGrads> {
    let mut total = ParamGrads::zeros_like(model);
    for (x, t) in inputs.iter().zip(targets) {
        let state = feedforward_init_with_loss(model, x, Some(t), OutputLoss::SquaredError)?;
        let state = run_inference(model, state, cfg)?.state;
        total.axpy(1.0, &weight_update(model, &state, eta)?);
    }
    Ok(total)
}

pub fn bp_batch(model: &PcnModel, data: &DatasetHandle, indices: &[usize], loss: OutputLoss) -> Result<BatchStats> {
    let mut grads = ParamGrads::zeros_like(model);
    let mut l_out = 0.0;
    for &i in indices {
        let target = data.target(i);
        let l = accumulate_bp_grads(model, data.input(i), &target, loss, &mut grads)?;
        l_out += energy_scale(l, loss);
    }
    let inv = 1.0 / indices.len() as f64;
    grads.scale(inv);
    Ok(BatchStats {
        grads,
        free_energy: l_out * inv,
        output_loss: l_out * inv,
        residual: 0.0,
    })
}

/// Output loss on the energy scale: `‖y − t‖²` or cross-entropy.
fn energy_scale(l: f64, loss: OutputLoss) -> f64 {
    match loss {
        OutputLoss::SquaredError => 2.0 * l,
        OutputLoss::CrossEntropy => l,
    }
}

pub fn tp_batch(
    model: &PcnModel,
    feedback: &TpFeedback,
    data: &DatasetHandle,
    indices: &[usize],
) -> Result<BatchStats> {
    let mut grads = ParamGrads::zeros_like(model);
    let (mut l_out, mut resid) = (0.0, 0.0);
    for &i in indices {
        let target = data.target(i);
        let s = tp_forward_grads(model, feedback, data.input(i), &target)?;
        let (last, hidden) = s.local_losses.split_last().expect("depth >= 1");
        l_out += last;
        resid += hidden.iter().sum::<f64>();
        grads.axpy(1.0, &s.grads);
    }
    let inv = 1.0 / indices.len() as f64;
    grads.scale(inv);
    Ok(BatchStats {
        grads,
        free_energy: (l_out + resid) * inv,
        output_loss: l_out * inv,
        residual: resid * inv,
    })
}

/// Mean BP gradient over a batch (squared-error loss).
pub fn bp_mean_grads(model: &PcnModel, data: &DatasetHandle, indices: &[usize]) -> Result<ParamGrads> {
    Ok(bp_batch(model, data, indices, OutputLoss::SquaredError)?.grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochEval {
    pub output_loss: f64,
    pub accuracy: Option<f64>,
}

/// Feedforward evaluation: mean output loss (energy scale) and accuracy.
pub fn evaluate(model: &PcnModel, data: &DatasetHandle, loss: OutputLoss) -> EpochEval {
    let n = data.len().max(1) as f64;
    let mut total = 0.0;
    let mut correct = 0usize;
    for i in 0..data.len() {
        let target = data.target(i);
        let y = model.forward(data.input(i));
        total += energy_scale(loss_of_output(&y, &target, loss), loss);
        if let Some(label) = data.label(i) {
            correct += usize::from(y.argmax() == label);
        }
    }
    EpochEval {
        output_loss: total / n,
        accuracy: data.is_classification().then(|| correct as f64 / n),
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PcnModel,
    pub log: MetricsLog,
    /// Set when training aborted on a non-finite value.
    pub divergence: Option<String>,
    pub feedback: Option<TpFeedback>,
    pub steps: u64,
}

impl TrainOutcome {
    /// Best validation accuracy and the (1-based) epoch reaching it first.
    pub fn best_val(&self) -> Option<(f64, u64)> {
        let mut best: Option<(f64, u64)> = None;
        for r in self.log.of_phase(Phase::Epoch) {
            if let Some(acc) = r.val_acc {
                if best.is_none_or(|(b, _)| acc > b) {
                    best = Some((acc, r.epoch));
                }
            }
        }
        best
    }

    pub fn final_train_acc(&self) -> Option<f64> {
        self.log.of_phase(Phase::Epoch).last().and_then(|r| r.train_acc)
    }
}

/// Trains `model` in place of a copy. `val` is evaluated each epoch when given.
pub fn train(
    model: PcnModel,
    data: &DatasetHandle,
    val: Option<&DatasetHandle>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(PcnError::InvalidConfig("training set is empty".into()));
    }
    model.check_input(data.input(0))?;
    model.check_target(&data.target(0))?;
    if let Some(v) = val {
        if !v.is_empty() {
            model.check_input(v.input(0))?;
            model.check_target(&v.target(0))?;
        }
    }

    let mut model = model;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tp_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7f4a_7c15_9e37_79b9);
    let mut feedback = (cfg.algorithm == Algorithm::DtpSimple).then(|| TpFeedback::init(&model, &mut tp_rng));
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut fb_opt = Optimizer::new(OptimizerConfig {
        lr: cfg.tp.feedback_lr,
        ..cfg.optimizer
    });
    let loss = cfg.algorithm.output_loss();
    let mut log = MetricsLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step: u64 = 0;

    for epoch in 1..=cfg.epochs as u64 {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        for batch in order.chunks(cfg.batch_size) {
            let stats = match cfg.algorithm {
                Algorithm::PcSe | Algorithm::PcCe => pc_batch(&model, data, batch, loss, &cfg.inference),
                Algorithm::Bp => bp_batch(&model, data, batch, loss),
                Algorithm::DtpSimple => {
                    let fb = feedback.as_mut().expect("initialized for dtp-simple");
                    feedback_step(&model, fb, &mut fb_opt, data, batch, cfg.tp.noise_std, &mut tp_rng)
                        .and_then(|()| tp_batch(&model, fb, data, batch))
                }
            };
            let stats = match stats {
                Ok(s) => s,
                Err(PcnError::NonFinite(msg)) => return Ok(diverged(model, log, feedback, cfg, step, epoch, msg)),
                Err(e) => return Err(e),
            };
            let grad_norm = stats.grads.norm();
            if !(stats.free_energy.is_finite() && grad_norm.is_finite()) {
                let msg = format!("non-finite energy or gradient at step {step}");
                return Ok(diverged(model, log, feedback, cfg, step, epoch, msg));
            }
            if step.is_multiple_of(cfg.log_every as u64) {
                let mut r = MetricRecord::new(&cfg.run_id, step, epoch, Phase::Learning);
                r.free_energy = Some(stats.free_energy);
                r.output_loss = Some(stats.output_loss);
                r.residual = Some(stats.residual);
                r.grad_norm = Some(grad_norm);
                if cfg.geometry_every.is_some_and(|k| step.is_multiple_of(k as u64)) {
                    let reference = bp_mean_grads(&model, data, batch)?;
                    let (rel, angle) = layer_geometry(&stats.grads, &reference);
                    r.rel_error = Some(rel);
                    r.angle = Some(angle);
                }
                log.push(r);
            }
            opt.step(model.param_slices_mut(), stats.grads.slices());
            step += 1;
            if !model.is_finite() {
                let msg = format!("non-finite weights after step {}", step - 1);
                return Ok(diverged(model, log, feedback, cfg, step, epoch, msg));
            }
        }
        let train_eval = evaluate(&model, data, loss);
        let mut r = MetricRecord::new(&cfg.run_id, step, epoch, Phase::Epoch);
        r.output_loss = Some(train_eval.output_loss);
        r.train_acc = train_eval.accuracy;
        r.val_acc = val
            .filter(|v| !v.is_empty())
            .and_then(|v| evaluate(&model, v, loss).accuracy);
        log.push(r);
    }
    Ok(TrainOutcome {
        model,
        log,
        divergence: None,
        feedback,
        steps: step,
    })
}

fn feedback_step(
    model: &PcnModel,
    feedback: &mut TpFeedback,
    opt: &mut Optimizer,
    data: &DatasetHandle,
    batch: &[usize],
    noise_std: f64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if feedback.layers.is_empty() {
        return Ok(());
    }
    let mut acc: Option<Vec<Vec<f64>>> = None;
    for &i in batch {
        let (g, _) = feedback_grads(model, feedback, data.input(i), noise_std, rng)?;
        match acc.as_mut() {
            None => acc = Some(g),
            Some(a) => {
                for (x, y) in a.iter_mut().zip(&g) {
                    for (u, v) in x.iter_mut().zip(y) {
                        *u += v;
                    }
                }
            }
        }
    }
    let mut acc = acc.expect("non-empty batch");
    let inv = 1.0 / batch.len() as f64;
    for x in &mut acc {
        for u in x.iter_mut() {
            *u *= inv;
        }
    }
    if acc.iter().flatten().any(|v| !v.is_finite()) {
        return Err(PcnError::NonFinite("feedback gradient".into()));
    }
    opt.step(feedback.slices_mut(), acc.iter().map(Vec::as_slice).collect());
    Ok(())
}

fn diverged(
    model: PcnModel,
    mut log: MetricsLog,
    feedback: Option<TpFeedback>,
    cfg: &TrainConfig,
    step: u64,
    epoch: u64,
    msg: String,
) -> TrainOutcome {
    log.push(MetricRecord::new(&cfg.run_id, step, epoch, Phase::Diverged));
    TrainOutcome {
        model,
        log,
        divergence: Some(msg),
        feedback,
        steps: step,
    }
}

pub fn train_pc(
    model: PcnModel,
    data: &DatasetHandle,
    val: Option<&DatasetHandle>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if !matches!(cfg.algorithm, Algorithm::PcSe | Algorithm::PcCe) {
        return Err(PcnError::InvalidConfig(format!(
            "train_pc called with {}",
            cfg.algorithm
        )));
    }
    train(model, data, val, cfg)
}

pub fn train_bp(
    model: PcnModel,
    data: &DatasetHandle,
    val: Option<&DatasetHandle>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train(
        model,
        data,
        val,
        &TrainConfig {
            algorithm: Algorithm::Bp,
            ..cfg.clone()
        },
    )
}

pub fn train_tp(
    model: PcnModel,
    data: &DatasetHandle,
    val: Option<&DatasetHandle>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train(
        model,
        data,
        val,
        &TrainConfig {
            algorithm: Algorithm::DtpSimple,
            ..cfg.clone()
        },
    )
}
