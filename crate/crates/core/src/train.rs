//! Mini-batch training with deterministic shuffling, ordered gradient
//! reduction and early stopping on validation MAE.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{interpolate_missing, split, SpeedSeries};
use crate::error::{Error, Result};
use crate::features::{build_samples, compute_stats, HistoricalStats, Normalizer, Sample};
use crate::graph::{hop_mask, HopMask, HopMode, RoadGraph};
use crate::model::{Model, ModelConfig, ModelParams};
use crate::par::{ordered_map, pool as thread_pool};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::validation(format!(
                "unknown optimizer `{other}` (expected adam or sgd)"
            ))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub hidden: usize,
    pub order: usize,
    pub hop_mode: HopMode,
    pub lookback: usize,
    pub horizon: usize,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Worker threads for per-sample passes. Results do not depend on it.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            hidden: 64,
            order: 1,
            hop_mode: HopMode::Cumulative,
            lookback: 11,
            horizon: 6,
            clip_norm: Some(5.0),
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::validation("learning rate must be positive and finite"));
        }
        for (name, v) in [
            ("batch size", self.batch_size),
            ("max epochs", self.max_epochs),
            ("hidden size", self.hidden),
            ("horizon", self.horizon),
            ("threads", self.threads),
        ] {
            if v == 0 {
                return Err(Error::validation(format!("{name} must be positive")));
            }
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::validation("clip norm must be positive and finite"));
            }
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            lookback: self.lookback,
            horizon: self.horizon,
            order: self.order,
            hop_mode: self.hop_mode,
        }
    }
}

/// Plain SGD or Adam (β₁ = 0.9, β₂ = 0.999, ε = 1e-8, bias-corrected).
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    moments: Option<(ModelParams, ModelParams)>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    /// A zero learning rate is accepted and leaves parameters untouched.
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::validation("learning rate must be finite and non-negative"));
        }
        Ok(Optimizer {
            kind,
            lr,
            step: 0,
            moments: None,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) {
        self.step += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.tensors_mut().into_iter().zip(grad.all()) {
                    for (x, d) in p.values_mut().iter_mut().zip(g.values()) {
                        *x -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (m, v) = self
                    .moments
                    .get_or_insert_with(|| (grad.zeros_like(), grad.zeros_like()));
                let t = self.step as i32;
                let c1 = 1.0 - BETA1.powi(t);
                let c2 = 1.0 - BETA2.powi(t);
                let tensors = params
                    .tensors_mut()
                    .into_iter()
                    .zip(grad.all())
                    .zip(m.tensors_mut())
                    .zip(v.tensors_mut());
                for (((p, g), m), v) in tensors {
                    let p = p.values_mut();
                    let (m, v) = (m.values_mut(), v.values_mut());
                    for (k, &d) in g.values().iter().enumerate() {
                        m[k] = BETA1 * m[k] + (1.0 - BETA1) * d;
                        v[k] = BETA2 * v[k] + (1.0 - BETA2) * d * d;
                        let m_hat = m[k] / c1;
                        let v_hat = v[k] / c2;
                        p[k] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// Sample indices shuffled by `(seed, epoch)` and cut into batches; the
/// last batch may be short.
///
/// # Panics
/// If `batch_size` is zero.
pub fn minibatch_iter(count: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut order: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Summed loss and gradient over one batch, reduced in batch order.
fn batch_gradient(
    model: &Model,
    samples: &[Sample],
    batch: &[usize],
    pool: Option<&rayon::ThreadPool>,
) -> Result<(f64, ModelParams)> {
    let parts = ordered_map(pool, batch, |i| model.loss_and_gradient(&samples[i]));
    let mut total = 0.0;
    let mut grad = model.params().zeros_like();
    for part in parts {
        let (loss, g) = part?;
        total += loss;
        grad.accumulate(&g);
    }
    Ok((total, grad))
}

/// Per-epoch knobs for [`train_epoch`].
#[derive(Clone, Copy, Debug)]
pub struct EpochOptions<'a> {
    pub epoch: usize,
    pub clip_norm: Option<f64>,
    pub pool: Option<&'a rayon::ThreadPool>,
}

/// One pass over `batches`: average the batch loss, step the optimizer,
/// re-zero masked-out graph weights. Returns the sample-weighted mean loss.
pub fn train_epoch(
    model: &mut Model,
    samples: &[Sample],
    batches: &[Vec<usize>],
    optimizer: &mut Optimizer,
    opts: EpochOptions<'_>,
) -> Result<f64> {
    let mut total = 0.0;
    let mut seen = 0usize;
    for (b, batch) in batches.iter().enumerate() {
        if batch.is_empty() {
            continue;
        }
        let (loss, mut grad) = batch_gradient(model, samples, batch, opts.pool)?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: opts.epoch,
                batch: b,
            });
        }
        grad.scale(1.0 / batch.len() as f64);
        if let Some(limit) = opts.clip_norm {
            let norm = grad.squared_norm().sqrt();
            if norm > limit {
                grad.scale(limit / norm);
            }
        }
        model.update(|p| optimizer.step(p, &grad));
        total += loss;
        seen += batch.len();
    }
    if seen == 0 {
        return Err(Error::validation("epoch has no samples"));
    }
    Ok(total / seen as f64)
}

/// Mean absolute error in km/h over every horizon step of `samples`.
pub fn mean_abs_error_kmh(model: &Model, samples: &[Sample], threads: usize) -> Result<f64> {
    let pool = thread_pool(threads)?;
    mae_with(model, samples, pool.as_ref())
}

fn mae_with(model: &Model, samples: &[Sample], pool: Option<&rayon::ThreadPool>) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("no samples to evaluate".into()));
    }
    let idx: Vec<usize> = (0..samples.len()).collect();
    let parts = ordered_map(pool, &idx, |i| {
        let s = &samples[i];
        let pred = model.predict(s)?;
        Ok(pred.iter().zip(&s.targets).map(|(p, t)| (p - t).abs()).sum::<f64>())
    });
    let mut total = 0.0;
    let mut count = 0usize;
    for (part, s) in parts.into_iter().zip(samples) {
        total += part?;
        count += s.horizon();
    }
    Ok(total / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl History {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|r| r.epoch == self.best_epoch)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "train_loss", "val_mae"])?;
        for r in &self.epochs {
            w.write_record([r.epoch.to_string(), r.train_loss.to_string(), r.val_mae.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("history", e))?;
        Ok(())
    }
}

/// Trains `model` and returns it holding the parameters of the epoch with
/// the lowest validation MAE, together with the per-epoch history.
pub fn fit(mut model: Model, train: &[Sample], val: &[Sample], config: &TrainConfig) -> Result<(Model, History)> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::validation("training and validation sets must both be non-empty"));
    }
    let pool = thread_pool(config.threads)?;
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate)?;
    let mut history = History::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=config.max_epochs {
        let batches = minibatch_iter(train.len(), config.batch_size, config.seed, epoch);
        let opts = EpochOptions {
            epoch,
            clip_norm: config.clip_norm,
            pool: pool.as_ref(),
        };
        let train_loss = train_epoch(&mut model, train, &batches, &mut optimizer, opts)?;
        let val_mae = mae_with(&model, val, pool.as_ref())?;
        log::info!("epoch {epoch}: train loss {train_loss:.5}, validation MAE {val_mae:.4} km/h");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_mae,
        });
        let improved = best.as_ref().is_none_or(|(b, _)| val_mae < *b);
        if improved {
            best = Some((val_mae, model.params().clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }
    }
    if let Some((_, params)) = best {
        model.set_params(params)?;
    }
    Ok((model, history))
}

/// Days kept for training when none are specified: all but the last sixth
/// (at least one test day).
pub fn default_train_days(days: usize) -> usize {
    days.saturating_sub((days / 6).max(1))
}

/// A series split into train and test days, with statistics and scaling
/// fitted on the observed training cells.
#[derive(Clone, Debug)]
pub struct Dataset {
    graph: RoadGraph,
    train: SpeedSeries,
    test: SpeedSeries,
    test_raw: SpeedSeries,
    stats: HistoricalStats,
    normalizer: Normalizer,
}

/// Samples for fitting, validation (last training day) and testing.
#[derive(Clone, Debug, Default)]
pub struct SampleSplits {
    pub fit: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

fn filled(s: &SpeedSeries) -> Result<SpeedSeries> {
    if s.missing_count() == 0 {
        Ok(s.clone())
    } else {
        interpolate_missing(s)
    }
}

impl Dataset {
    /// Needs at least two training days so one can be held out.
    pub fn prepare(graph: RoadGraph, series: &SpeedSeries, train_days: usize) -> Result<Self> {
        series.check_links(&graph)?;
        if train_days < 2 {
            return Err(Error::validation(format!(
                "need at least 2 training days (one is held out for validation), got {train_days}"
            )));
        }
        let (train_raw, test_raw) = split(series, train_days)?;
        let stats = compute_stats(&train_raw)?;
        let normalizer = Normalizer::fit(&train_raw)?;
        Ok(Dataset {
            graph,
            train: filled(&train_raw)?,
            test: filled(&test_raw)?,
            test_raw,
            stats,
            normalizer,
        })
    }

    pub fn graph(&self) -> &RoadGraph {
        &self.graph
    }

    /// Training days with gaps filled.
    pub fn train(&self) -> &SpeedSeries {
        &self.train
    }

    /// Test days with gaps filled.
    pub fn test(&self) -> &SpeedSeries {
        &self.test
    }

    pub fn stats(&self) -> &HistoricalStats {
        &self.stats
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn mask(&self, order: usize, mode: HopMode) -> HopMask {
        hop_mask(&self.graph, order, mode)
    }

    /// Test samples whose targets were all observed; gaps in the encoder
    /// window are allowed since they were filled.
    pub fn samples(&self, mask: &HopMask, m: usize, n: usize) -> Result<SampleSplits> {
        let grid = self.train.grid();
        let last_day = grid.day_count() - 1;
        let (validation, fit) = build_samples(&self.train, &self.stats, mask, m, n)?
            .into_iter()
            .partition(|s| grid.day_of(s.anchor) == last_day);
        let test = build_samples(&self.test, &self.stats, mask, m, n)?
            .into_iter()
            .filter(|s| (1..=n).all(|j| self.test_raw.is_observed(s.link, s.anchor + j)))
            .collect();
        Ok(SampleSplits { fit, validation, test })
    }
}

/// Builds the mask and samples for `config`, initializes a model from
/// `config.seed` and fits it.
pub fn train_model(data: &Dataset, config: &TrainConfig) -> Result<(Model, History, SampleSplits)> {
    config.validate()?;
    let mask = data.mask(config.order, config.hop_mode);
    let splits = data.samples(&mask, config.lookback, config.horizon)?;
    let model = Model::new(config.model_config(), mask, data.normalizer().clone(), config.seed)?;
    let (model, history) = fit(model, &splits.fit, &splits.validation, config)?;
    Ok((model, history, splits))
}
