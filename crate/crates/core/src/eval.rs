//! Error metrics, baseline forecasters and the evaluation report.
//!
//! Every forecaster sees the same [`Sample`]s, so comparisons are paired.
//! Linear baselines are fitted per link on the training series: the rolling
//! variant learns one-step regressions and feeds its own predictions back,
//! the direct variant learns one regression per horizon step.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{format_timestamp, SpeedSeries, TimeGrid};
use crate::error::{Error, Result};
use crate::features::{HistoricalStats, Sample};
use crate::model::Model;
use crate::par::{ordered_map, pool};
use crate::train::{train_model, Dataset, TrainConfig};

/// Floor on the MAPE denominator, in km/h.
pub const MAPE_EPSILON_KMH: f64 = 1.0;

/// Ridge added to singular normal equations.
pub const RIDGE_LAMBDA: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mape_pct: f64,
    pub mae_kmh: f64,
    pub rmse_kmh: f64,
    pub count: usize,
}

/// MAPE (with the [`MAPE_EPSILON_KMH`] guard), MAE and RMSE.
pub fn metrics(truth: &[f64], predictions: &[f64]) -> Result<Metrics> {
    if truth.len() != predictions.len() {
        return Err(Error::Dimension {
            op: "metrics",
            left: vec![truth.len()],
            right: vec![predictions.len()],
        });
    }
    if truth.is_empty() {
        return Err(Error::Domain("metrics of an empty set".into()));
    }
    let mut acc = Accumulator::default();
    for (&v, &p) in truth.iter().zip(predictions) {
        acc.push(v, p);
    }
    Ok(acc.finish())
}

#[derive(Clone, Copy, Debug, Default)]
struct Accumulator {
    ape: f64,
    ae: f64,
    se: f64,
    count: usize,
}

impl Accumulator {
    fn push(&mut self, truth: f64, pred: f64) {
        let err = (truth - pred).abs();
        self.ape += err / truth.max(MAPE_EPSILON_KMH);
        self.ae += err;
        self.se += err * err;
        self.count += 1;
    }

    fn merge(&mut self, other: &Accumulator) {
        self.ape += other.ape;
        self.ae += other.ae;
        self.se += other.se;
        self.count += other.count;
    }

    fn finish(&self) -> Metrics {
        let q = self.count as f64;
        Metrics {
            mape_pct: 100.0 * self.ape / q,
            mae_kmh: self.ae / q,
            rmse_kmh: (self.se / q).sqrt(),
            count: self.count,
        }
    }
}

/// Anything that maps a sample to `n` speeds in km/h.
pub trait Forecaster: Sync {
    fn name(&self) -> &str;
    fn forecast(&self, sample: &Sample) -> Result<Vec<f64>>;
}

impl Forecaster for Model {
    fn name(&self) -> &str {
        "model"
    }

    fn forecast(&self, sample: &Sample) -> Result<Vec<f64>> {
        self.predict(sample)
    }
}

/// Training-set mean speed of the link at each target slot.
pub struct HistoricalAverage<'a> {
    pub stats: &'a HistoricalStats,
    pub grid: &'a TimeGrid,
}

impl Forecaster for HistoricalAverage<'_> {
    fn name(&self) -> &str {
        "ha"
    }

    fn forecast(&self, sample: &Sample) -> Result<Vec<f64>> {
        baseline_ha(self.stats, self.grid, sample)
    }
}

pub fn baseline_ha(stats: &HistoricalStats, grid: &TimeGrid, sample: &Sample) -> Result<Vec<f64>> {
    let slot = grid.slot_of(sample.anchor);
    (1..=sample.horizon())
        .map(|j| {
            stats.get(sample.link, slot + j).map(|s| s.avg).ok_or_else(|| {
                Error::validation(format!("no statistics for link {} at slot {}", sample.link, slot + j))
            })
        })
        .collect()
}

/// Repeats the last observed speed.
pub struct Naive;

impl Forecaster for Naive {
    fn name(&self) -> &str {
        "naive"
    }

    fn forecast(&self, sample: &Sample) -> Result<Vec<f64>> {
        Ok(baseline_naive(sample))
    }
}

pub fn baseline_naive(sample: &Sample) -> Vec<f64> {
    vec![sample.last_speed(); sample.horizon()]
}

/// Per-link least-squares regressions from the `m + 1` window (plus an
/// intercept) to the speed `h` steps ahead, for `h = 1..=n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearBaseline {
    lookback: usize,
    horizon: usize,
    /// `[link][h - 1]` → `[intercept, w_{t-m}, …, w_t]`.
    coefficients: Vec<Vec<Vec<f64>>>,
}

/// Solves `min ‖Xw − y‖²`, adding [`RIDGE_LAMBDA`] when `XᵀX` is singular.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Vec<f64>> {
    let xt = x.transpose();
    let mut xtx = &xt * x;
    let xty = &xt * y;
    let eig = xtx.clone().symmetric_eigenvalues();
    let max = eig.iter().copied().fold(0.0, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let singular = min.partial_cmp(&(max * 1e-12)) != Some(std::cmp::Ordering::Greater);
    if singular {
        log::warn!("singular normal equations; adding ridge {RIDGE_LAMBDA}");
        for k in 0..xtx.nrows() {
            xtx[(k, k)] += RIDGE_LAMBDA;
        }
    }
    let chol = match xtx.clone().cholesky() {
        Some(c) => c,
        None => {
            log::warn!("normal equations not positive definite; adding ridge {RIDGE_LAMBDA}");
            for k in 0..xtx.nrows() {
                xtx[(k, k)] += RIDGE_LAMBDA;
            }
            xtx.cholesky()
                .ok_or_else(|| Error::Domain("least squares failed even with ridge".into()))?
        }
    };
    Ok(chol.solve(&xty).iter().copied().collect())
}

impl LinearBaseline {
    /// Fits on every within-day window of `train`.
    pub fn fit(train: &SpeedSeries, lookback: usize, horizon: usize) -> Result<Self> {
        let grid = train.grid();
        let spd = grid.slots_per_day();
        if horizon == 0 || lookback + 1 + horizon > spd {
            return Err(Error::validation("window does not fit in a day"));
        }
        let width = lookback + 2;
        let mut coefficients = Vec::with_capacity(train.link_count());
        for link in 0..train.link_count() {
            let v = train.link_values(link);
            let mut per_h = Vec::with_capacity(horizon);
            for h in 1..=horizon {
                let mut rows = Vec::new();
                let mut targets = Vec::new();
                for d in 0..grid.day_count() {
                    for slot in lookback..spd - h {
                        let c = grid.column(d, slot);
                        rows.push(1.0);
                        rows.extend_from_slice(&v[c - lookback..=c]);
                        targets.push(v[c + h]);
                    }
                }
                let x = DMatrix::from_row_slice(targets.len(), width, &rows);
                let y = DVector::from_vec(targets);
                per_h.push(least_squares(&x, &y)?);
            }
            coefficients.push(per_h);
        }
        Ok(LinearBaseline {
            lookback,
            horizon,
            coefficients,
        })
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `[intercept, w_{t-m}, …, w_t]` of the `h`-step regression.
    pub fn coefficients(&self, link: usize, h: usize) -> &[f64] {
        &self.coefficients[link][h - 1]
    }

    fn apply(coef: &[f64], window: &[f64]) -> f64 {
        coef[0] + coef[1..].iter().zip(window).map(|(w, x)| w * x).sum::<f64>()
    }

    fn check(&self, sample: &Sample, n: usize) -> Result<()> {
        if sample.lookback_steps() != self.lookback + 1 {
            return Err(Error::validation("sample window does not match the fitted look-back"));
        }
        if sample.link >= self.coefficients.len() {
            return Err(Error::Domain(format!(
                "link {} has no fitted coefficients",
                sample.link
            )));
        }
        if n == 0 {
            return Err(Error::validation("horizon must be at least 1"));
        }
        Ok(())
    }

    /// Method 1: the one-step regression applied `n` times, each prediction
    /// shifted into the window.
    pub fn predict_rolling(&self, sample: &Sample, n: usize) -> Result<Vec<f64>> {
        self.check(sample, n)?;
        let coef = self.coefficients(sample.link, 1);
        let mut window = sample.own_window();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let next = Self::apply(coef, &window);
            window.remove(0);
            window.push(next);
            out.push(next);
        }
        Ok(out)
    }

    /// Method 2: one regression per horizon step, all reading the observed
    /// window.
    pub fn predict_direct(&self, sample: &Sample, n: usize) -> Result<Vec<f64>> {
        self.check(sample, n)?;
        if n > self.horizon {
            return Err(Error::validation(format!(
                "fitted for {} steps, asked for {n}",
                self.horizon
            )));
        }
        let window = sample.own_window();
        Ok((1..=n)
            .map(|h| Self::apply(self.coefficients(sample.link, h), &window))
            .collect())
    }
}

pub struct RollingLinear<'a>(pub &'a LinearBaseline);

impl Forecaster for RollingLinear<'_> {
    fn name(&self) -> &str {
        "rolling"
    }

    fn forecast(&self, sample: &Sample) -> Result<Vec<f64>> {
        self.0.predict_rolling(sample, sample.horizon())
    }
}

pub struct DirectLinear<'a>(pub &'a LinearBaseline);

impl Forecaster for DirectLinear<'_> {
    fn name(&self) -> &str {
        "direct"
    }

    fn forecast(&self, sample: &Sample) -> Result<Vec<f64>> {
        self.0.predict_direct(sample, sample.horizon())
    }
}

/// Predictor names accepted on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Model,
    Ha,
    Naive,
    Rolling,
    Direct,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 5] = [
        PredictorKind::Model,
        PredictorKind::Ha,
        PredictorKind::Naive,
        PredictorKind::Rolling,
        PredictorKind::Direct,
    ];

    /// Parses a comma-separated list, keeping the given order.
    pub fn parse_list(s: &str) -> Result<Vec<PredictorKind>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let k: PredictorKind = part.parse()?;
            if !out.contains(&k) {
                out.push(k);
            }
        }
        if out.is_empty() {
            return Err(Error::validation("no predictors selected"));
        }
        Ok(out)
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PredictorKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown predictor `{s}` (expected model, ha, naive, rolling or direct)"
                ))
            })
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictorKind::Model => "model",
            PredictorKind::Ha => "ha",
            PredictorKind::Naive => "naive",
            PredictorKind::Rolling => "rolling",
            PredictorKind::Direct => "direct",
        })
    }
}

/// One report line; `horizon` is `None` for the aggregate over all steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub predictor: String,
    pub horizon: Option<usize>,
    pub mape_pct: f64,
    pub mae_kmh: f64,
    pub rmse_kmh: f64,
    pub q: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn get(&self, predictor: &str, horizon: Option<usize>) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.predictor == predictor && r.horizon == horizon)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "predictor",
            "horizon",
            "mape_pct",
            "mae_kmh",
            "rmse_kmh",
            "q",
            "seconds",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.predictor.clone(),
                r.horizon.map_or_else(|| "all".to_string(), |h| h.to_string()),
                r.mape_pct.to_string(),
                r.mae_kmh.to_string(),
                r.rmse_kmh.to_string(),
                r.q.to_string(),
                r.seconds.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("metrics", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Evaluation knobs.
#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub threads: usize,
    /// When false every `seconds` cell is 0, making reports byte-stable.
    pub timing: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            threads: 1,
            timing: true,
        }
    }
}

/// Forecasts for every sample, in sample order, checking each has
/// `sample.horizon()` steps.
pub fn predict_all(f: &dyn Forecaster, samples: &[Sample], threads: usize) -> Result<Vec<Vec<f64>>> {
    let pool = pool(threads)?;
    let idx: Vec<usize> = (0..samples.len()).collect();
    ordered_map(pool.as_ref(), &idx, |i| {
        let p = f.forecast(&samples[i])?;
        if p.len() != samples[i].horizon() {
            return Err(Error::Internal(format!(
                "{} returned {} steps, expected {}",
                f.name(),
                p.len(),
                samples[i].horizon()
            )));
        }
        Ok(p)
    })
    .into_iter()
    .collect()
}

/// Runs each forecaster over `samples`; one row per horizon step plus an
/// aggregate row, all in km/h.
pub fn evaluate_all(forecasters: &[&dyn Forecaster], samples: &[Sample], opts: EvalOptions) -> Result<MetricsReport> {
    let n = samples
        .first()
        .map(Sample::horizon)
        .ok_or_else(|| Error::Domain("no samples to evaluate".into()))?;
    if samples.iter().any(|s| s.horizon() != n) {
        return Err(Error::validation("samples disagree on horizon"));
    }
    let mut report = MetricsReport::default();
    for f in forecasters {
        let start = Instant::now();
        let preds = predict_all(*f, samples, opts.threads)?;
        let mut per_step = vec![Accumulator::default(); n];
        for (p, s) in preds.iter().zip(samples) {
            for (j, (&v, &vh)) in s.targets.iter().zip(p).enumerate() {
                per_step[j].push(v, vh);
            }
        }
        let seconds = if opts.timing {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let mut all = Accumulator::default();
        for (j, acc) in per_step.iter().enumerate() {
            all.merge(acc);
            report.rows.push(row(f.name(), Some(j + 1), acc.finish(), seconds));
        }
        report.rows.push(row(f.name(), None, all.finish(), seconds));
    }
    Ok(report)
}

fn row(name: &str, horizon: Option<usize>, m: Metrics, seconds: f64) -> MetricsRow {
    MetricsRow {
        predictor: name.to_string(),
        horizon,
        mape_pct: m.mape_pct,
        mae_kmh: m.mae_kmh,
        rmse_kmh: m.rmse_kmh,
        q: m.count,
        seconds,
    }
}

/// Attention of one (link, anchor) pair; `weights[j][i]` is the weight
/// decoder step `j + 1` puts on `h_{t-i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub link: usize,
    pub anchor: usize,
    pub weights: Vec<Vec<f64>>,
}

impl AttentionRecord {
    /// Mean weight, over decoder steps, on the `k` most recent encoder states.
    pub fn recent_mass(&self, k: usize) -> f64 {
        let total: f64 = self.weights.iter().map(|r| r.iter().take(k).sum::<f64>()).sum();
        total / self.weights.len() as f64
    }
}

/// Attention matrices for `samples[i]` for each `i` in `selection`.
pub fn export_attention(model: &Model, samples: &[Sample], selection: &[usize]) -> Result<Vec<AttentionRecord>> {
    selection
        .iter()
        .map(|&i| {
            let s = samples
                .get(i)
                .ok_or_else(|| Error::Domain(format!("sample {i} out of range")))?;
            let trace = model.forward(s)?;
            let weights = trace
                .attention
                .iter()
                .map(|row| row.iter().rev().copied().collect())
                .collect();
            Ok(AttentionRecord {
                link: s.link,
                anchor: s.anchor,
                weights,
            })
        })
        .collect()
}

/// Header `link_id,anchor_timestamp,decoder_step,enc_0..enc_m`.
pub fn write_attention_csv<W: Write>(
    records: &[AttentionRecord],
    link_ids: &[String],
    grid: &TimeGrid,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let width = records.first().map_or(0, |r| r.weights.first().map_or(0, Vec::len));
    let mut header = vec!["link_id".to_string(), "anchor_timestamp".into(), "decoder_step".into()];
    header.extend((0..width).map(|i| format!("enc_{i}")));
    w.write_record(&header)?;
    for r in records {
        for (j, row) in r.weights.iter().enumerate() {
            let mut rec = vec![
                link_ids[r.link].clone(),
                format_timestamp(grid.timestamp(r.anchor)),
                (j + 1).to_string(),
            ];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io("attention", e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub horizon: usize,
    pub mape_pct: f64,
    pub mae_kmh: f64,
    pub rmse_kmh: f64,
    pub q: usize,
}

/// Trains one model per hop order with otherwise identical configuration
/// and reports its per-horizon test metrics.
pub fn khop_sweep(data: &Dataset, config: &TrainConfig, orders: &[usize], threads: usize) -> Result<Vec<SweepRow>> {
    let mut out = Vec::new();
    for &k in orders {
        let cfg = TrainConfig {
            order: k,
            ..config.clone()
        };
        let (model, _, splits) = train_model(data, &cfg)?;
        if splits.test.is_empty() {
            return Err(Error::validation("no test samples"));
        }
        let report = evaluate_all(&[&model], &splits.test, EvalOptions { threads, timing: false })?;
        for h in 1..=cfg.horizon {
            let r = report
                .get("model", Some(h))
                .ok_or_else(|| Error::Internal("missing report row".into()))?;
            out.push(SweepRow {
                k,
                horizon: h,
                mape_pct: r.mape_pct,
                mae_kmh: r.mae_kmh,
                rmse_kmh: r.rmse_kmh,
                q: r.q,
            });
        }
    }
    Ok(out)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("sweep", e))?;
    Ok(())
}
