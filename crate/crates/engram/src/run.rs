//! Training and evaluation runs: builds the configured model over the
//! configured task, drives the seeded batch loop, and persists artifacts
//! (config copy, metrics CSV, checkpoint) into the run directory.
//!
//! Sample seeds derive from (run seed, iteration, batch index), so a
//! (config, seed) pair replays the exact same stream of data and writes
//! byte-identical logs; wall-clock times stay at zero unless asked for.
//!
//! Sequence models consume tasks through one of two protocols: encode the
//! input rows then decode on zero (or query) rows, or predict the next row
//! at every step. Vocabulary models consume the token ids behind the
//! one-hot rows.

use crate::checkpoint;
use crate::config::{FusionKind, ModelConfig, ModelKind, RunConfig};
use crate::dnc::{DncConfig, DncModel};
use crate::dual::{
    DcwConfig, DcwMannModel, DmncConfig, DmncModel, Episode, Fusion, ViewConcatBaseline,
    ViewConcatConfig,
};
use crate::metrics::{self, MetricLog, MetricRecord};
use crate::ntm::{NtmConfig, NtmModel};
use crate::optim::{OptimKind, Optimizer};
use crate::params::ParamStore;
use crate::scheduling::{make_schedule, CuwDnc, SchedulePolicy, ScheduledDnc, WriteSchedule};
use crate::tape::{Tape, TensorId};
use crate::tasks::{derive_seed, generate, Sample, TaskKind, TaskSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{model} needs {what}")]
    MissingOption { model: &'static str, what: &'static str },
    #[error("{model} cannot drive the {task} task")]
    Incompatible { model: &'static str, task: TaskKind },
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("non-finite gradient norm at iteration {iter}; see diagnostic.json in the run directory")]
    NonFiniteGradient { iter: u64 },
    #[error(transparent)]
    Checkpoint(#[from] checkpoint::CheckpointError),
    #[error(transparent)]
    Schedule(#[from] crate::scheduling::ScheduleError),
    #[error(transparent)]
    Dual(#[from] crate::dual::DualError),
    #[error("run directory io")]
    Io(#[from] std::io::Error),
    #[error("diagnostic serialization")]
    Json(#[from] serde_json::Error),
}

/// How a task's targets are scored, which also fixes the output head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// Independent sigmoid bits.
    Bce,
    /// Softmax over one-hot token rows.
    Ce,
    /// Real-valued regression.
    Mse,
}

pub fn loss_kind(task: TaskKind) -> LossKind {
    match task {
        TaskKind::NtmCopy
        | TaskKind::RepeatCopy
        | TaskKind::AssocRecall
        | TaskKind::DynNgrams
        | TaskKind::PrioritySort => LossKind::Bce,
        TaskKind::Sinusoid => LossKind::Mse,
        _ => LossKind::Ce,
    }
}

/// Metric columns used when the config leaves `metrics` empty.
pub fn default_metrics(task: TaskKind) -> Vec<String> {
    let names: &[&str] = match loss_kind(task) {
        LossKind::Bce => &["bit_accuracy", "bit_error"],
        LossKind::Ce => &["seq_accuracy", "nld"],
        LossKind::Mse => &["mse"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

/// What a forward pass produced, in the task's native currency.
#[derive(Clone, Debug)]
pub enum Prediction {
    /// Post-sigmoid rows over the scored steps.
    Bits(Vec<Vec<f64>>),
    /// Decoded token ids.
    Tokens(Vec<usize>),
    /// Regression outputs over the scored steps.
    Values(Vec<f64>),
}

enum ModelArch {
    Ntm(NtmModel),
    Dnc(DncModel),
    /// DNC with `budget + 1` uniformly spread writes per rollout.
    Uw { dnc: DncModel, budget: usize },
    Cuw(CuwDnc),
    /// `dual == false` drops the second controller and the write
    /// protection, as the same-budget baseline.
    Dcw { model: DcwMannModel, dual: bool },
    Dmnc(DmncModel),
    ViewConcat(ViewConcatBaseline),
}

/// A built model plus its parameter store, ready to train or evaluate.
pub struct RunModel {
    pub store: ParamStore,
    task: TaskSpec,
    arch: ModelArch,
}

fn probe_dims(task: &TaskSpec) -> (usize, usize) {
    let probe = generate(task, 0);
    (
        probe.input.first().map_or(1, Vec::len),
        probe.target.first().map_or(1, Vec::len),
    )
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn token_ids(rows: &[Vec<f64>]) -> Vec<usize> {
    rows.iter().map(|r| argmax(r)).collect()
}

pub fn build_model(model: &ModelConfig, task: &TaskSpec, seed: u64) -> Result<RunModel, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let (in_dim, out_dim) = probe_dims(task);
    let arch = match model.kind {
        ModelKind::Ntm => {
            let cfg = NtmConfig {
                input_size: in_dim,
                output_size: out_dim,
                hidden_size: model.hidden_size,
                slots: model.slots,
                word: model.word,
                read_heads: model.read_heads,
                write_heads: model.write_heads,
            };
            ModelArch::Ntm(NtmModel::init(&mut store, cfg, &mut rng))
        }
        ModelKind::Dnc | ModelKind::UwDnc | ModelKind::CuwDnc => {
            let cfg = DncConfig {
                input_size: in_dim,
                output_size: out_dim,
                hidden_size: model.hidden_size,
                slots: model.slots,
                word: model.word,
                read_heads: model.read_heads,
                linkage: true,
            };
            match model.kind {
                ModelKind::Dnc => ModelArch::Dnc(DncModel::init(&mut store, cfg, &mut rng)),
                ModelKind::UwDnc => {
                    let budget = model.write_budget.ok_or(RunError::MissingOption {
                        model: "uw_dnc",
                        what: "write_budget",
                    })?;
                    ModelArch::Uw { dnc: DncModel::init(&mut store, cfg, &mut rng), budget }
                }
                _ => {
                    let cache = model.cache_size.ok_or(RunError::MissingOption {
                        model: "cuw_dnc",
                        what: "cache_size",
                    })?;
                    ModelArch::Cuw(CuwDnc::init(&mut store, cfg, cache, model.hidden_size, &mut rng))
                }
            }
        }
        ModelKind::DcwMann | ModelKind::SingleController => {
            if loss_kind(task.kind) != LossKind::Ce {
                return Err(RunError::Incompatible { model: "dcw_mann", task: task.kind });
            }
            let cfg = DcwConfig {
                vocab: in_dim.max(out_dim),
                emb: model.embedding,
                hidden_size: model.hidden_size,
                slots: model.slots,
                word: model.word,
                read_heads: model.read_heads,
            };
            ModelArch::Dcw {
                model: DcwMannModel::init(&mut store, cfg, &mut rng),
                dual: model.kind == ModelKind::DcwMann,
            }
        }
        ModelKind::Dmnc | ModelKind::ViewConcat => {
            if task.kind != TaskKind::Sum {
                return Err(RunError::Incompatible { model: "dmnc", task: task.kind });
            }
            let vocab_x = task.value_range.1 as usize + 1;
            let vocab_y = crate::tasks::SUM_VOCAB;
            if model.kind == ModelKind::Dmnc {
                let fusion = match model.fusion {
                    Some(FusionKind::Late) => Fusion::Late,
                    Some(FusionKind::Early) => Fusion::Early,
                    None => {
                        return Err(RunError::MissingOption { model: "dmnc", what: "fusion" })
                    }
                };
                let cfg = DmncConfig {
                    vocab_x1: vocab_x,
                    vocab_x2: vocab_x,
                    vocab_y,
                    emb: model.embedding,
                    hidden_size: model.hidden_size,
                    slots: model.slots,
                    word: model.word,
                    read_heads: model.read_heads,
                    fusion,
                };
                ModelArch::Dmnc(DmncModel::init(&mut store, cfg, &mut rng))
            } else {
                let cfg = ViewConcatConfig {
                    vocab_x1: vocab_x,
                    vocab_x2: vocab_x,
                    vocab_y,
                    emb: model.embedding,
                    hidden_size: model.hidden_size,
                    slots: model.slots,
                    word: model.word,
                    read_heads: model.read_heads,
                };
                ModelArch::ViewConcat(ViewConcatBaseline::init(&mut store, cfg, &mut rng))
            }
        }
    };
    Ok(RunModel { store, task: task.clone(), arch })
}

/// Writes spread uniformly over the whole rollout (encode and decode rows
/// alike), clamped so short sequences still get at least one write.
fn uw_schedule(total: usize, budget: usize) -> Result<WriteSchedule, RunError> {
    let d = budget.min(total.saturating_sub(1));
    if d == 0 {
        return Ok(WriteSchedule::from_steps(total.max(1), vec![total.max(1)]));
    }
    Ok(make_schedule(SchedulePolicy::Uniform, total, d, None, None)?)
}

/// Full unrolled input for the sequence models: the sample's own rows, then
/// one decode row per target step — zeros, except sinusoid queries which
/// carry the target x.
fn unrolled_rows(sample: &Sample, kind: TaskKind, in_dim: usize) -> Vec<Vec<f64>> {
    let mut rows = sample.input.clone();
    if kind == TaskKind::DynNgrams {
        return rows;
    }
    if kind == TaskKind::Sinusoid {
        for x in sample.meta["target_xs"].as_array().expect("sinusoid queries") {
            rows.push(vec![x.as_f64().expect("query x"), 0.0]);
        }
    } else {
        rows.extend(std::iter::repeat(vec![0.0; in_dim]).take(sample.target.len()));
    }
    rows
}

/// Indices of the outputs that line up with target rows.
fn scored_range(sample: &Sample, kind: TaskKind, total: usize) -> std::ops::Range<usize> {
    if kind == TaskKind::DynNgrams {
        0..sample.target.len()
    } else {
        total - sample.target.len()..total
    }
}

fn seq_loss(
    tape: &mut Tape,
    outs: &[TensorId],
    sample: &Sample,
    kind: LossKind,
) -> (TensorId, Prediction) {
    let scored: Vec<usize> = (0..sample.target.len()).filter(|i| sample.mask[*i]).collect();
    if scored.is_empty() {
        let zero = tape.leaf_scalar(0.0);
        let pred = match kind {
            LossKind::Bce => Prediction::Bits(Vec::new()),
            LossKind::Ce => Prediction::Tokens(Vec::new()),
            LossKind::Mse => Prediction::Values(Vec::new()),
        };
        return (zero, pred);
    }
    let mut terms = Vec::with_capacity(scored.len());
    let mut elements = 0usize;
    for &i in &scored {
        let z = outs[i];
        let y = tape.leaf_vec(&sample.target[i]);
        let term = match kind {
            LossKind::Bce => {
                // sum softplus(z) − z·y, the stable form of −y ln σ − (1−y) ln(1−σ)
                let sp = tape.softplus(z);
                let pos = tape.sum(sp);
                let zy = tape.dot(z, y);
                tape.sub(pos, zy)
            }
            LossKind::Ce => {
                let logp = tape.log_softmax(z);
                let picked = tape.dot(logp, y);
                tape.neg(picked)
            }
            LossKind::Mse => {
                let d = tape.sub(z, y);
                let sq = tape.square(d);
                tape.sum(sq)
            }
        };
        elements += sample.target[i].len();
        terms.push(term);
    }
    let stacked = tape.concat(&terms);
    let total = tape.sum(stacked);
    let denom = match kind {
        LossKind::Ce => scored.len() as f64,
        _ => elements as f64,
    };
    let loss = tape.scale(total, 1.0 / denom);

    let pred = match kind {
        LossKind::Bce => Prediction::Bits(
            scored
                .iter()
                .map(|&i| {
                    let s = tape.sigmoid(outs[i]);
                    tape.value(s).to_vec()
                })
                .collect(),
        ),
        LossKind::Ce => {
            Prediction::Tokens(scored.iter().map(|&i| argmax(tape.value(outs[i]))).collect())
        }
        LossKind::Mse => Prediction::Values(
            scored.iter().flat_map(|&i| tape.value(outs[i]).to_vec()).collect(),
        ),
    };
    (loss, pred)
}

impl RunModel {
    /// One differentiable pass over one sample. `train` switches the token
    /// decoders to teacher forcing.
    pub fn forward(
        &self,
        tape: &mut Tape,
        sample: &Sample,
        train: bool,
    ) -> Result<(TensorId, Prediction), RunError> {
        let kind = self.task.kind;
        match &self.arch {
            ModelArch::Ntm(m) => {
                let rows = unrolled_rows(sample, kind, m.cfg.input_size);
                let bound = m.bind(tape, &self.store);
                let outs = m.forward_seq(tape, &bound, &rows);
                let r = scored_range(sample, kind, outs.len());
                Ok(seq_loss(tape, &outs[r], sample, loss_kind(kind)))
            }
            ModelArch::Dnc(m) => {
                let rows = unrolled_rows(sample, kind, m.cfg.input_size);
                let bound = m.bind(tape, &self.store);
                let outs = m.forward_seq(tape, &bound, &rows);
                let r = scored_range(sample, kind, outs.len());
                Ok(seq_loss(tape, &outs[r], sample, loss_kind(kind)))
            }
            ModelArch::Uw { dnc, budget } => {
                let rows = unrolled_rows(sample, kind, dnc.cfg.input_size);
                let schedule = uw_schedule(rows.len(), *budget)?;
                let sched = ScheduledDnc::new(dnc.clone(), schedule);
                let bound = sched.bind(tape, &self.store);
                let outs = sched.forward_seq(tape, &bound, &rows);
                let r = scored_range(sample, kind, outs.len());
                Ok(seq_loss(tape, &outs[r], sample, loss_kind(kind)))
            }
            ModelArch::Cuw(m) => {
                let rows = unrolled_rows(sample, kind, m.dnc.cfg.input_size);
                let bound = m.bind(tape, &self.store);
                let outs = m.forward_seq(tape, &bound, &rows);
                let r = scored_range(sample, kind, outs.len());
                Ok(seq_loss(tape, &outs[r], sample, loss_kind(kind)))
            }
            ModelArch::Dcw { model, dual } => {
                let input = token_ids(&sample.input);
                let targets = token_ids(&sample.target);
                let bound = model.bind(tape, &self.store);
                let run = if *dual {
                    model.run(tape, &bound, &input, targets.len().max(1), Some(&targets))
                } else {
                    model.run_single_controller(
                        tape,
                        &bound,
                        &input,
                        targets.len().max(1),
                        Some(&targets),
                    )
                };
                // an empty target still needs one decode step; score nothing
                let run = match run {
                    Ok(r) => r,
                    Err(crate::dual::DualError::EmptyInput) => {
                        let zero = tape.leaf_scalar(0.0);
                        return Ok((zero, Prediction::Tokens(Vec::new())));
                    }
                    Err(e) => return Err(e.into()),
                };
                let loss = run.loss.expect("targets were supplied");
                let tokens = run.tokens.into_iter().take(targets.len()).collect();
                Ok((loss, Prediction::Tokens(tokens)))
            }
            ModelArch::Dmnc(m) => {
                let ep = Episode {
                    x1: sample.meta_values("x1_values").iter().map(|v| *v as usize).collect(),
                    x2: sample.meta_values("x2_values").iter().map(|v| *v as usize).collect(),
                    seq_targets: Some(
                        sample.meta_values("target_values").iter().map(|v| *v as usize).collect(),
                    ),
                    set_labels: None,
                    teacher_forced: train,
                };
                let bound = m.bind(tape, &self.store);
                let state = m.initial_state(tape);
                let (_, decode) = m.run_episode(tape, &bound, state, &ep)?;
                Ok((decode.loss, Prediction::Tokens(decode.tokens)))
            }
            ModelArch::ViewConcat(m) => {
                let x1: Vec<usize> =
                    sample.meta_values("x1_values").iter().map(|v| *v as usize).collect();
                let x2: Vec<usize> =
                    sample.meta_values("x2_values").iter().map(|v| *v as usize).collect();
                let targets: Vec<usize> =
                    sample.meta_values("target_values").iter().map(|v| *v as usize).collect();
                let bound = m.bind(tape, &self.store);
                let decode = m.run_seq(tape, &bound, &x1, &x2, &targets, train)?;
                Ok((decode.loss, Prediction::Tokens(decode.tokens)))
            }
        }
    }
}

/// Scored target rows (mask applied), flattened for the bit metrics.
fn masked_targets(sample: &Sample) -> Vec<Vec<f64>> {
    sample
        .target
        .iter()
        .zip(&sample.mask)
        .filter(|(_, m)| **m)
        .map(|(r, _)| r.clone())
        .collect()
}

pub fn metric_value(name: &str, pred: &Prediction, sample: &Sample) -> Result<f64, RunError> {
    let target_rows = masked_targets(sample);
    match (name, pred) {
        ("bit_error", Prediction::Bits(rows)) | ("bit_accuracy", Prediction::Bits(rows)) => {
            let p: Vec<f64> = rows.iter().flatten().copied().collect();
            let t: Vec<f64> = target_rows.iter().flatten().copied().collect();
            Ok(if name == "bit_error" {
                metrics::bit_error(&p, &t)
            } else {
                metrics::bit_accuracy(&p, &t)
            })
        }
        ("seq_accuracy", Prediction::Tokens(toks)) => {
            Ok(metrics::seq_accuracy(toks, &token_ids(&target_rows)))
        }
        ("nld", Prediction::Tokens(toks)) => Ok(metrics::nld(toks, &token_ids(&target_rows))),
        ("p_at_k", Prediction::Tokens(toks)) => {
            let t = token_ids(&target_rows);
            if t.is_empty() {
                return Ok(1.0);
            }
            let k = t.len().min(toks.len()).max(1);
            Ok(metrics::precision_at_k(toks, &t, k))
        }
        ("mse", Prediction::Values(vals)) => {
            let t: Vec<f64> = target_rows.iter().flatten().copied().collect();
            Ok(metrics::mse(vals, &t))
        }
        _ => Err(RunError::UnknownMetric(name.to_string())),
    }
}

fn resolve_metrics(cfg: &RunConfig) -> Vec<String> {
    if cfg.metrics.is_empty() {
        default_metrics(cfg.task.kind)
    } else {
        cfg.metrics.clone()
    }
}

/// Per-metric mean and standard deviation over an evaluation set.
#[derive(Clone, Debug)]
pub struct EvalSummary {
    pub n: usize,
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub mean_loss: f64,
}

impl EvalSummary {
    pub fn mean_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.means[i])
    }
}

/// Runs the model over `n` freshly generated samples (seeds derived from
/// `seed`) without touching parameters.
pub fn evaluate_model(
    model: &RunModel,
    metric_names: &[String],
    n: usize,
    seed: u64,
) -> Result<EvalSummary, RunError> {
    let mut per_metric = vec![Vec::with_capacity(n); metric_names.len()];
    let mut loss_sum = 0.0;
    for k in 0..n {
        let sample = generate(&model.task, derive_seed(seed, 0, k as u64));
        let mut tape = Tape::new();
        let (loss, pred) = model.forward(&mut tape, &sample, false)?;
        loss_sum += tape.scalar_value(loss);
        for (j, name) in metric_names.iter().enumerate() {
            per_metric[j].push(metric_value(name, &pred, &sample)?);
        }
    }
    let means: Vec<f64> =
        per_metric.iter().map(|v| v.iter().sum::<f64>() / n.max(1) as f64).collect();
    let sds: Vec<f64> = per_metric
        .iter()
        .zip(&means)
        .map(|(v, m)| {
            if v.len() < 2 {
                0.0
            } else {
                (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
            }
        })
        .collect();
    Ok(EvalSummary {
        n,
        names: metric_names.to_vec(),
        means,
        sds,
        mean_loss: loss_sum / n.max(1) as f64,
    })
}

/// Paths and final state of a completed (or zero-length) training run.
#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub config_path: PathBuf,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub log: MetricLog,
    pub final_step: u64,
    pub early_stopped: bool,
}

pub fn run_training(cfg: &RunConfig) -> Result<RunArtifacts, RunError> {
    let model = build_model(&cfg.effective().model, &cfg.effective().task, cfg.seed)?;
    run_training_with(cfg, model)
}

/// Training loop over an already-built model; `run_training` is the common
/// entry, this variant exists for warm starts.
pub fn run_training_with(cfg: &RunConfig, mut model: RunModel) -> Result<RunArtifacts, RunError> {
    let cfg = cfg.effective();
    let hash = cfg.hash();
    let out_dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out_dir)?;
    let config_path = out_dir.join("config.toml");
    fs::write(&config_path, cfg.to_toml())?;

    let metric_names = resolve_metrics(&cfg);
    let mut log = MetricLog::new(metric_names.iter().cloned());
    let mut opt = match cfg.optimizer.kind {
        OptimKind::Adam => Optimizer::adam(cfg.optimizer.lr),
        OptimKind::Rmsprop => Optimizer::rmsprop(cfg.optimizer.lr, cfg.optimizer.momentum),
    };
    if cfg.optimizer.clip > 0.0 {
        opt = opt.with_clip(cfg.optimizer.clip);
    }

    let started = Instant::now();
    let mut early_stopped = false;
    let mut final_step = 0u64;
    for iter in 0..cfg.iterations {
        let step = iter + 1;
        let mut batch_loss = 0.0;
        for k in 0..cfg.batch_size {
            let sample = generate(&cfg.task, derive_seed(cfg.seed, step, k as u64));
            let mut tape = Tape::new();
            let (loss, _) = model.forward(&mut tape, &sample, true)?;
            batch_loss += tape.scalar_value(loss);
            tape.backward(loss);
            model.store.absorb_grads(&tape);
        }
        model.store.scale_grads(1.0 / cfg.batch_size as f64);
        batch_loss /= cfg.batch_size as f64;
        let report = opt.step(&mut model.store);
        if !report.applied {
            let diag = json!({
                "iteration": step,
                "batch_loss": batch_loss.to_string(),
                "grad_norm": report.grad_norm.to_string(),
            });
            fs::write(out_dir.join("diagnostic.json"), serde_json::to_string_pretty(&diag)?)?;
            return Err(RunError::NonFiniteGradient { iter: step });
        }
        final_step = step;

        let eval_now = cfg.eval_interval > 0
            && (step % cfg.eval_interval == 0 || step == cfg.iterations);
        if eval_now {
            let eval = evaluate_model(&model, &metric_names, cfg.eval_samples, cfg.seed)?;
            let wall_ms = if cfg.wall_clock { started.elapsed().as_millis() as u64 } else { 0 };
            log.push(MetricRecord { step, loss: batch_loss, values: eval.means.clone(), wall_ms });
            if let Some(th) = cfg.early_stop_bit_accuracy {
                if eval.mean_of("bit_accuracy").is_some_and(|m| m >= th) {
                    early_stopped = true;
                }
            }
        }
        if early_stopped {
            break;
        }
    }

    let metrics_path = out_dir.join("metrics.csv");
    fs::write(&metrics_path, log.to_csv())?;
    let checkpoint_path = out_dir.join("checkpoint.bin");
    checkpoint::save(&checkpoint_path, &hash, final_step, &model.store, Some(&opt.export_state()))?;
    Ok(RunArtifacts {
        out_dir,
        config_path,
        metrics_path,
        checkpoint_path,
        log,
        final_step,
        early_stopped,
    })
}

/// Loads a checkpoint against its config and evaluates on a fresh seeded
/// set; the checkpoint file is only read.
pub fn run_evaluation(
    checkpoint_path: impl AsRef<Path>,
    cfg: &RunConfig,
    n: usize,
    seed: u64,
) -> Result<EvalSummary, RunError> {
    let cfg = cfg.effective();
    let ckpt = checkpoint::load_expecting(checkpoint_path, &cfg.hash())?;
    let mut model = build_model(&cfg.model, &cfg.task, cfg.seed)?;
    ckpt.restore(&mut model.store)?;
    evaluate_model(&model, &resolve_metrics(&cfg), n, seed)
}

/// Per-step total write-gate activity of the scheduled and plain DNC
/// models over one sample, for offline plotting.
pub fn write_gate_trace(model: &RunModel, sample: &Sample) -> Result<Vec<f64>, RunError> {
    let kind = model.task.kind;
    let mut tape = Tape::new();
    match &model.arch {
        ModelArch::Dnc(m) => {
            let rows = unrolled_rows(sample, kind, m.cfg.input_size);
            let bound = m.bind(&mut tape, &model.store);
            let mut state = m.initial_state(&mut tape);
            let mut trace = Vec::with_capacity(rows.len());
            for row in &rows {
                let x = tape.leaf_vec(row);
                let (next, _) = m.step(&mut tape, &bound, state, x);
                trace.push(tape.value(next.memory.w_write).iter().sum());
                state = next;
            }
            Ok(trace)
        }
        ModelArch::Uw { dnc, budget } => {
            let rows = unrolled_rows(sample, kind, dnc.cfg.input_size);
            let schedule = uw_schedule(rows.len(), *budget)?;
            let sched = ScheduledDnc::new(dnc.clone(), schedule);
            let bound = sched.bind(&mut tape, &model.store);
            let mut state = sched.dnc.initial_state(&mut tape);
            let mut trace = Vec::with_capacity(rows.len());
            for (i, row) in rows.iter().enumerate() {
                let x = tape.leaf_vec(row);
                let (next, _) = sched.step_at(&mut tape, &bound, state, x, i + 1);
                let gate: f64 = tape.value(next.memory.w_write).iter().sum();
                trace.push(if sched.schedule.is_write_step(i + 1) { gate } else { 0.0 });
                state = next;
            }
            Ok(trace)
        }
        _ => Err(RunError::Incompatible { model: "write-gate trace", task: kind }),
    }
}
