use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use pcnlab::data::save_checkpoint;
use pcnlab::lab::{
    convergence_race, curvature, find_equilibrium, inference_log, lyapunov_monitor, perturb_and_recover, Architecture,
    Dynamics, LyapunovReport, PerturbSpec, EQUILIBRIUM_TOL, LYAPUNOV_TOL,
};
use pcnlab::oracle::{assemble_at_convergence, qn_updates, run_population, summarize, InstanceResult};
use pcnlab::pcn::{feedforward_init_with_loss, run_inference};
use pcnlab::train::train;
use pcnlab::{DatasetHandle, MetricsLog, OptimizerKind, Phase, TrainOutcome};

use crate::config::{DataSection, OracleInstance, RunConfig};
use crate::error::CliError;
use crate::output::OutputDir;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CHECKPOINT_FILE: &str = "model.pcnc";
pub const CONFIG_FILE: &str = "config.toml";

fn write_config(out: &OutputDir, cfg: &RunConfig) -> Result<(), CliError> {
    let text = toml::to_string(cfg).map_err(anyhow::Error::from)?;
    std::fs::write(out.path(CONFIG_FILE), text)?;
    Ok(())
}

fn write_metrics(out: &OutputDir, log: &MetricsLog) -> Result<(), CliError> {
    let mut w = out.create(METRICS_FILE)?;
    log.write_jsonl(&mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    run_id: String,
    algorithm: String,
    seed: u64,
    epochs: usize,
    steps: u64,
    best_val_acc: Option<f64>,
    best_epoch: Option<u64>,
    final_train_acc: Option<f64>,
    wall_secs: f64,
    diverged: bool,
}

/// Shared by `train` and the training-based diagnostics: runs the configured
/// training and writes metrics, summary and (unless diverged) checkpoint.
fn run_training(cfg: &RunConfig, out: &OutputDir) -> Result<(TrainOutcome, DatasetHandle), CliError> {
    let model = cfg.init_model()?;
    let data = cfg.dataset(&model)?;
    let (train_set, val_set) = cfg.split(data);
    let tcfg = cfg.train_config();
    let start = Instant::now();
    let outcome = train(model, &train_set, val_set.as_ref(), &tcfg)?;
    let wall_secs = start.elapsed().as_secs_f64();
    write_config(out, cfg)?;
    write_metrics(out, &outcome.log)?;
    let best = outcome.best_val();
    out.write_csv(
        SUMMARY_FILE,
        &[SummaryRow {
            run_id: tcfg.run_id.clone(),
            algorithm: tcfg.algorithm.to_string(),
            seed: tcfg.seed,
            epochs: tcfg.epochs,
            steps: outcome.steps,
            best_val_acc: best.map(|b| b.0),
            best_epoch: best.map(|b| b.1),
            final_train_acc: outcome.final_train_acc(),
            wall_secs,
            diverged: outcome.divergence.is_some(),
        }],
    )?;
    if outcome.divergence.is_none() {
        save_checkpoint(&outcome.model, out.path(CHECKPOINT_FILE))?;
    }
    Ok((outcome, train_set))
}

fn diverged(outcome: &TrainOutcome) -> Result<(), CliError> {
    match &outcome.divergence {
        Some(msg) => Err(CliError::Diverged(msg.clone())),
        None => Ok(()),
    }
}

pub fn train_cmd(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let (outcome, _) = run_training(cfg, out)?;
    diverged(&outcome)?;
    let best = outcome.best_val();
    println!(
        "run {} finished: {} steps, best val acc {}, final train acc {}",
        cfg.run_id(),
        outcome.steps,
        fmt_opt(best.map(|b| b.0)),
        fmt_opt(outcome.final_train_acc())
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

#[derive(Debug, Serialize)]
struct LyapunovRow {
    run_id: String,
    phase: &'static str,
    /// Whether the monotonicity property is claimed for this series
    /// (full-batch plain SGD, or inference); other runs are only monitored.
    enforced: bool,
    series: usize,
    violations: usize,
    max_increase: f64,
    steps_checked: usize,
    tolerance: f64,
}

pub fn lyapunov_cmd(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let (outcome, train_set) = run_training(cfg, out)?;
    diverged(&outcome)?;
    let run_id = cfg.run_id();
    let learning = lyapunov_monitor(&outcome.log, Phase::Learning)?;
    let full_batch_sgd = cfg.train.batch >= train_set.len() && cfg.train.optimizer == OptimizerKind::Sgd;

    let inf = cfg.inference_config();
    let mut agg = LyapunovReport {
        violations: 0,
        max_increase: 0.0,
        steps_checked: 0,
    };
    let samples = cfg.diagnose.inference_samples.min(train_set.len());
    for i in 0..samples {
        let target = train_set.target(i);
        let loss = cfg.train.algorithm.output_loss();
        let state = feedforward_init_with_loss(&outcome.model, train_set.input(i), Some(target.as_slice()), loss)?;
        let run = run_inference(&outcome.model, state, &inf)?;
        let r = lyapunov_monitor(&inference_log(&run_id, &run.trajectory), Phase::Inference)?;
        agg.violations += r.violations;
        agg.max_increase = agg.max_increase.max(r.max_increase);
        agg.steps_checked += r.steps_checked;
    }
    let rows = [
        LyapunovRow {
            run_id: run_id.clone(),
            phase: "learning",
            enforced: full_batch_sgd,
            series: 1,
            violations: learning.violations,
            max_increase: learning.max_increase,
            steps_checked: learning.steps_checked,
            tolerance: LYAPUNOV_TOL,
        },
        LyapunovRow {
            run_id,
            phase: "inference",
            enforced: true,
            series: samples,
            violations: agg.violations,
            max_increase: agg.max_increase,
            steps_checked: agg.steps_checked,
            tolerance: LYAPUNOV_TOL,
        },
    ];
    out.write_csv("lyapunov.csv", &rows)?;
    for r in &rows {
        println!(
            "{}: {} violations over {} steps",
            r.phase, r.violations, r.steps_checked
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct GeometryRow {
    run_id: String,
    step: u64,
    epoch: u64,
    layer: usize,
    rel_error: Option<f64>,
    angle: Option<f64>,
}

pub fn geometry_cmd(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    if cfg.train.geometry_every.is_none() {
        cfg.train.geometry_every = Some(cfg.train.log_every);
    }
    let (outcome, _) = run_training(&cfg, out)?;
    diverged(&outcome)?;
    let mut rows = Vec::new();
    for r in outcome.log.of_phase(Phase::Learning) {
        if let (Some(rel), Some(ang)) = (&r.rel_error, &r.angle) {
            for (l, (re, an)) in rel.iter().zip(ang).enumerate() {
                rows.push(GeometryRow {
                    run_id: r.run_id.clone(),
                    step: r.step,
                    epoch: r.epoch,
                    layer: l + 1,
                    rel_error: *re,
                    angle: *an,
                });
            }
        }
    }
    out.write_csv("geometry.csv", &rows)?;
    println!("{} geometry rows", rows.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct PerturbRow {
    run_id: String,
    seed: u64,
    magnitude: f64,
    /// `fit` or `skipped` (too few samples above the noise cutoff).
    fit: &'static str,
    lambda_rate: Option<f64>,
    c: Option<f64>,
    r_squared: Option<f64>,
    points: Option<usize>,
    noise_floor: f64,
    lr: f64,
    diverged: bool,
}

#[derive(Debug, Serialize)]
struct TrajectoryRow {
    run_id: String,
    seed: u64,
    t: u64,
    #[serde(rename = "V")]
    v: f64,
    dist_to_eq: f64,
    grad_norm: f64,
}

pub fn perturb_cmd(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let run_id = cfg.run_id();
    let d = &cfg.diagnose;
    let model = cfg.init_model()?;
    let data = cfg.dataset(&model)?;
    let dynamics = Dynamics::Pc(cfg.inference_config());
    let equilibrium = if matches!(cfg.data, DataSection::Teacher { .. }) {
        model
    } else {
        let eq = find_equilibrium(
            model,
            &data,
            &dynamics,
            d.equilibrium_lr,
            d.equilibrium_steps,
            EQUILIBRIUM_TOL,
        )?;
        if eq.grad_norm > EQUILIBRIUM_TOL {
            return Err(anyhow::anyhow!(
                "no equilibrium found: gradient norm {:.3e} after {} gradient and {} Newton steps",
                eq.grad_norm,
                eq.gd_steps,
                eq.newton_steps
            )
            .into());
        }
        eq.model
    };
    let lr = match d.lr {
        Some(lr) => lr,
        None => {
            let ev = curvature(&equilibrium, &data, &dynamics)?;
            let top = ev.last().copied().unwrap_or(0.0);
            if !(top > 0.0) {
                return Err(anyhow::anyhow!("Hessian at the equilibrium has no positive curvature").into());
            }
            1.0 / top
        }
    };
    let mut rows = Vec::new();
    let mut traj = Vec::new();
    for seed in 0..d.perturbations {
        let spec = PerturbSpec {
            magnitude: d.magnitude,
            seed,
        };
        let r = perturb_and_recover(&equilibrium, &data, &dynamics, spec, lr, d.horizon)?;
        rows.push(PerturbRow {
            run_id: run_id.clone(),
            seed,
            magnitude: d.magnitude,
            fit: if r.fit.is_some() { "fit" } else { "skipped" },
            lambda_rate: r.fit.map(|f| f.lambda_rate),
            c: r.fit.map(|f| f.c),
            r_squared: r.fit.map(|f| f.r_squared),
            points: r.fit.map(|f| f.points),
            noise_floor: r.noise_floor,
            lr,
            diverged: r.diverged,
        });
        for p in &r.trajectory.records {
            traj.push(TrajectoryRow {
                run_id: run_id.clone(),
                seed,
                t: p.t,
                v: p.v,
                dist_to_eq: p.dist_to_eq,
                grad_norm: p.grad_norm,
            });
        }
    }
    write_config(out, cfg)?;
    out.write_csv("perturb.csv", &rows)?;
    out.write_jsonl("trajectories.jsonl", &traj)?;
    let fitted = rows.iter().filter(|r| r.fit == "fit").count();
    println!("{} perturbations, {fitted} fitted, lr {lr:.4}", rows.len());
    if rows.iter().any(|r| r.diverged) {
        return Err(CliError::Diverged("a perturbed run left the finite range".into()));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct OracleRow {
    run_id: String,
    seed: Option<u64>,
    dims: String,
    #[serde(rename = "E_PC")]
    e_pc: Option<f64>,
    #[serde(rename = "E_PC_no_grad_E")]
    e_pc_no_grad_e: Option<f64>,
    #[serde(rename = "E_TP")]
    e_tp: Option<f64>,
    cos_pc_qn: Option<f64>,
    cos_bp_qn: Option<f64>,
    lambda: f64,
    cond_gn: Option<f64>,
    cond_b: Option<f64>,
    cond_pc: Option<f64>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct OracleSummaryRow {
    run_id: String,
    instances: usize,
    failed: usize,
    frac_pc_le_tp: f64,
    frac_pc_no_grad_e_le_tp: f64,
    median_cos_pc_qn: f64,
    median_cos_bp_qn: f64,
}

fn dims_string(dims: &[usize]) -> String {
    dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("-")
}

fn oracle_row(
    run_id: &str,
    seed: Option<u64>,
    dims: &[usize],
    lambda: f64,
    r: Result<&InstanceResult, String>,
) -> OracleRow {
    match r {
        Ok(res) => {
            let c = &res.comparison;
            OracleRow {
                run_id: run_id.into(),
                seed,
                dims: dims_string(dims),
                e_pc: Some(c.e_pc),
                e_pc_no_grad_e: Some(c.e_pc_no_grad_e),
                e_tp: Some(c.e_tp),
                cos_pc_qn: Some(c.cos_pc_qn),
                cos_bp_qn: Some(c.cos_bp_qn),
                lambda: c.lambda,
                cond_gn: Some(c.cond_gn),
                cond_b: Some(c.cond_b),
                cond_pc: Some(c.cond_pc),
                error: None,
            }
        }
        Err(e) => OracleRow {
            run_id: run_id.into(),
            seed,
            dims: dims_string(dims),
            e_pc: None,
            e_pc_no_grad_e: None,
            e_tp: None,
            cos_pc_qn: None,
            cos_bp_qn: None,
            lambda,
            cond_gn: None,
            cond_b: None,
            cond_pc: None,
            error: Some(e),
        },
    }
}

pub fn oracle_cmd(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let run_id = cfg.run_id();
    let lambda = cfg.oracle.lambda;
    match cfg.oracle.instance {
        OracleInstance::Population => {
            let pcfg = cfg.population_config();
            let results = run_population(&pcfg);
            let rows: Vec<OracleRow> = pcfg
                .seeds
                .iter()
                .zip(&results)
                .map(|(&seed, r)| {
                    let spec = pcnlab::oracle::InstanceSpec::sample(seed, pcfg.single_layer);
                    oracle_row(
                        &run_id,
                        Some(seed),
                        &spec.dims,
                        lambda,
                        r.as_ref().map_err(|e| e.to_string()),
                    )
                })
                .collect();
            let s = summarize(&results);
            write_config(out, cfg)?;
            out.write_csv("oracle.csv", &rows)?;
            out.write_jsonl("oracle.jsonl", &rows)?;
            out.write_csv(
                "oracle_summary.csv",
                &[OracleSummaryRow {
                    run_id,
                    instances: s.instances,
                    failed: s.failed,
                    frac_pc_le_tp: s.frac_pc_le_tp,
                    frac_pc_no_grad_e_le_tp: s.frac_pc_no_grad_e_le_tp,
                    median_cos_pc_qn: s.median_cos_pc_qn,
                    median_cos_bp_qn: s.median_cos_bp_qn,
                }],
            )?;
            println!(
                "{} instances ({} failed): frac(E_PC <= E_TP) {:.3}, median cos PC-QN {:.3}, BP-QN {:.3}",
                s.instances, s.failed, s.frac_pc_le_tp, s.median_cos_pc_qn, s.median_cos_bp_qn
            );
        }
        OracleInstance::Config => {
            let model = cfg.init_model()?;
            if model.param_count() > pcnlab::oracle::PARAM_GUARD {
                return Err(pcnlab::PcnError::ParameterGuard {
                    count: model.param_count(),
                    limit: pcnlab::oracle::PARAM_GUARD,
                }
                .into());
            }
            let data = cfg.dataset(&model)?;
            let outcome = train(model, &data, None, &cfg.train_config())?;
            diverged(&outcome)?;
            let bundle = assemble_at_convergence(&outcome.model, &data, &cfg.inference_config())?;
            let comparison = qn_updates(&bundle, lambda)?;
            let dims = outcome.model.dims();
            let result = InstanceResult {
                spec: pcnlab::oracle::InstanceSpec {
                    seed: cfg.train.seed,
                    dims: dims.clone(),
                    activation: cfg.model.activation,
                    samples: data.len(),
                },
                comparison,
                min_eig_gn: bundle.min_eig_gn,
                grad_check: bundle.grad_check,
            };
            let row = oracle_row(&run_id, Some(cfg.train.seed), &dims, lambda, Ok(&result));
            write_config(out, cfg)?;
            out.write_csv("oracle.csv", std::slice::from_ref(&row))?;
            out.write_jsonl("oracle.jsonl", &[row])?;
            println!(
                "E_PC {:.4e}, E_TP {:.4e}, cos PC-QN {:.3}, BP-QN {:.3}",
                result.comparison.e_pc,
                result.comparison.e_tp,
                result.comparison.cos_pc_qn,
                result.comparison.cos_bp_qn
            );
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct RaceCsvRow {
    run_id: String,
    algorithm: String,
    seed: u64,
    /// Epoch count, or `not-reached`.
    epochs_to_criterion: String,
    best_val: Option<f64>,
    best_epoch: Option<u64>,
    wall_secs: f64,
    diverged: bool,
}

#[derive(Debug, Serialize)]
struct CurveRow {
    run_id: String,
    algorithm: String,
    seed: u64,
    val_acc: Vec<f64>,
}

pub fn race_cmd(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let run_id = cfg.run_id();
    let model = cfg.init_model()?;
    let data = cfg.dataset(&model)?;
    let (train_set, val_set) = cfg.split(data);
    let val_set =
        val_set.ok_or_else(|| CliError::Config("race needs classification data for validation accuracy".into()))?;
    let arch = Architecture {
        dims: cfg.model.dims.clone(),
        activations: cfg.activations(),
        bias: cfg.model.bias,
    };
    let base = cfg.train_config();
    let rows = convergence_race(
        &arch,
        &train_set,
        &val_set,
        &cfg.race.algorithms,
        &cfg.race.seeds,
        &base,
        cfg.race.fraction,
    )?;
    let table: Vec<RaceCsvRow> = rows
        .iter()
        .map(|r| RaceCsvRow {
            run_id: run_id.clone(),
            algorithm: r.algorithm.to_string(),
            seed: r.seed,
            epochs_to_criterion: r
                .epochs_to_criterion
                .map_or_else(|| "not-reached".into(), |e| e.to_string()),
            best_val: r.best_val,
            best_epoch: r.best_epoch,
            wall_secs: r.wall_secs,
            diverged: r.diverged,
        })
        .collect();
    let curves: Vec<CurveRow> = rows
        .iter()
        .map(|r| CurveRow {
            run_id: run_id.clone(),
            algorithm: r.algorithm.to_string(),
            seed: r.seed,
            val_acc: r.curve.clone(),
        })
        .collect();
    write_config(out, cfg)?;
    out.write_csv("race.csv", &table)?;
    out.write_jsonl("race_curves.jsonl", &curves)?;
    for r in &table {
        println!(
            "{} seed {}: epochs to criterion {}",
            r.algorithm, r.seed, r.epochs_to_criterion
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct DataRow {
    run_id: String,
    n: usize,
    input_dim: usize,
    target_dim: usize,
    num_classes: usize,
    train_n: usize,
    val_n: usize,
    /// Per-class counts joined by `;`; empty for regression.
    class_counts: String,
    features_sha256: String,
}

pub fn data_cmd(cfg: &RunConfig, out: &OutputDir) -> Result<(), CliError> {
    let model = cfg.init_model()?;
    let data = cfg.dataset(&model)?;
    let mut hasher = Sha256::new();
    for v in data.features().as_slice() {
        hasher.update(v.to_le_bytes());
    }
    let mut counts = vec![0usize; data.num_classes()];
    for &l in data.labels() {
        counts[l] += 1;
    }
    let (n, input_dim, target_dim, num_classes) = (data.len(), data.input_dim(), data.target_dim(), data.num_classes());
    let (train_set, val_set) = cfg.split(data);
    let row = DataRow {
        run_id: cfg.run_id(),
        n,
        input_dim,
        target_dim,
        num_classes,
        train_n: train_set.len(),
        val_n: val_set.as_ref().map_or(0, DatasetHandle::len),
        class_counts: counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"),
        features_sha256: hex::encode(hasher.finalize()),
    };
    println!(
        "{} samples, input {}, target {}, classes {}, train/val {}/{}",
        row.n, row.input_dim, row.target_dim, row.num_classes, row.train_n, row.val_n
    );
    out.write_csv("data.csv", &[row])?;
    Ok(())
}
