//! The forecasting network: a masked graph convolution fuses neighbour
//! speeds into one scalar per step, a GRU encoder reads the look-back window,
//! and a GRU decoder driven by historical statistics attends over the encoder
//! states to emit one speed per horizon step.
//!
//! All weights except the graph-convolution rows are shared across links.
//! Every forward pass records on a fresh [`Tape`], so the same code serves
//! inference and gradient computation.

mod checkpoint;
mod params;

use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use params::{GruWeights, ModelParams, DECODER_INPUT, ENCODER_INPUT};

use crate::error::{Error, Result};
use crate::features::{Normalizer, Sample};
use crate::graph::{HopMask, HopMode};
use crate::numcore::{Gradients, Tape, Tensor, Var};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    /// `m`; the encoder reads `m + 1` steps.
    pub lookback: usize,
    /// `n` decoder steps.
    pub horizon: usize,
    /// Hop order `K` of the mask.
    pub order: usize,
    pub hop_mode: HopMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            lookback: 11,
            horizon: 6,
            order: 1,
            hop_mode: HopMode::Cumulative,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::validation("hidden size must be positive"));
        }
        if self.horizon == 0 {
            return Err(Error::validation("horizon must be at least 1"));
        }
        Ok(())
    }
}

/// Everything one forward pass produces.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// `h_{t-m} .. h_t`, oldest first.
    pub encoder_states: Vec<Tensor>,
    /// `h_{t+1} .. h_{t+n}`.
    pub decoder_states: Vec<Tensor>,
    /// One row per decoder step; column `c` weights encoder state `c`
    /// (oldest first), so column `m` is the weight on `h_t`.
    pub attention: Vec<Vec<f64>>,
    /// Predictions in the link's normalized units.
    pub normalized: Vec<f64>,
    /// Predictions in km/h.
    pub predictions: Vec<f64>,
}

impl ForwardTrace {
    /// Weight that decoder step `step` puts on `h_{t-back}`.
    pub fn weight_back(&self, step: usize, back: usize) -> f64 {
        let row = &self.attention[step];
        row[row.len() - 1 - back]
    }
}

struct GruVars {
    w_z: Var,
    w_r: Var,
    w_c: Var,
    b_z: Var,
    b_r: Var,
    b_c: Var,
}

/// Parameters placed on a tape. `gc_row` holds only the masked entries of
/// the link's row, in mask-row order.
struct Bound {
    gc_row: Var,
    encoder: GruVars,
    decoder: GruVars,
    w_f: Var,
    q: Var,
    w_h: Var,
    w_v: Var,
    b_v: Var,
}

fn put(tape: &mut Tape, t: &Tensor, track: bool) -> Var {
    if track {
        tape.leaf(t.clone())
    } else {
        tape.constant(t.clone())
    }
}

fn bind_gru(tape: &mut Tape, w: &GruWeights, track: bool) -> GruVars {
    GruVars {
        w_z: put(tape, &w.w_z, track),
        w_r: put(tape, &w.w_r, track),
        w_c: put(tape, &w.w_c, track),
        b_z: put(tape, &w.b_z, track),
        b_r: put(tape, &w.b_r, track),
        b_c: put(tape, &w.b_c, track),
    }
}

fn bind(tape: &mut Tape, params: &ModelParams, link: usize, neighbors: &[usize], track: bool) -> Bound {
    let row = Tensor::vector(neighbors.iter().map(|&j| params.w_gc.get(link, j)).collect());
    Bound {
        gc_row: put(tape, &row, track),
        encoder: bind_gru(tape, &params.encoder, track),
        decoder: bind_gru(tape, &params.decoder, track),
        w_f: put(tape, &params.w_f, track),
        q: put(tape, &params.q, track),
        w_h: put(tape, &params.w_h, track),
        w_v: put(tape, &params.w_v, track),
        b_v: put(tape, &params.b_v, track),
    }
}

fn gru_step(tape: &mut Tape, g: &GruVars, h: Var, x: Var) -> Result<Var> {
    let hx = tape.concat(h, x)?;
    let z = tape.matvec(g.w_z, hx)?;
    let z = tape.add(z, g.b_z)?;
    let z = tape.sigmoid(z);
    let r = tape.matvec(g.w_r, hx)?;
    let r = tape.add(r, g.b_r)?;
    let r = tape.sigmoid(r);
    let rh = tape.hadamard(r, h)?;
    let rhx = tape.concat(rh, x)?;
    let c = tape.matvec(g.w_c, rhx)?;
    let c = tape.add(c, g.b_c)?;
    let c = tape.tanh(c);
    let keep = tape.one_minus(z);
    let keep = tape.hadamard(keep, h)?;
    let update = tape.hadamard(z, c)?;
    tape.add(keep, update)
}

/// Row `i` of `enc_proj` is the encoder half of `W_f·[h_dec; h_enc_i]`,
/// computed once per sample; `enc_matrix` stacks the encoder states as rows.
fn attend(tape: &mut Tape, w_f: Var, q: Var, enc_proj: Var, enc_matrix: Var, h_dec: Var) -> Result<(Var, Var)> {
    let dec_proj = tape.matvec_cols(w_f, h_dec, 0)?;
    let pre = tape.add_rows(enc_proj, dec_proj)?;
    let act = tape.tanh(pre);
    let u = tape.matvec(act, q)?;
    let a = tape.softmax(u)?;
    let s = tape.matvec_t(enc_matrix, a)?;
    Ok((a, s))
}

/// Graph-convolved scalar for `link`: the masked row of `W_GC` dotted with
/// the speed vector `v_t` (one entry per link).
pub fn graph_convolve(params: &ModelParams, mask: &HopMask, v_t: &[f64], link: usize) -> Result<f64> {
    let links = mask.size();
    if link >= links {
        return Err(Error::Domain(format!(
            "link index {link} out of range for {links} links"
        )));
    }
    if v_t.len() != links || params.w_gc.rows() != links {
        return Err(Error::Dimension {
            op: "graph_convolve",
            left: params.w_gc.shape().to_vec(),
            right: vec![v_t.len()],
        });
    }
    Ok(mask.row(link).iter().map(|&j| params.w_gc.get(link, j) * v_t[j]).sum())
}

/// One GRU step on plain values.
pub fn gru_cell(weights: &GruWeights, h_prev: &Tensor, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let g = bind_gru(&mut tape, weights, false);
    let h = tape.constant(h_prev.clone());
    let x = tape.constant(x.clone());
    let out = gru_step(&mut tape, &g, h, x)?;
    Ok(tape.value(out).clone())
}

/// Attention weights over `encoder_states` (same order) and the context
/// vector they produce for `decoder_state`.
pub fn attention(
    w_f: &Tensor,
    q: &Tensor,
    encoder_states: &[Tensor],
    decoder_state: &Tensor,
) -> Result<(Vec<f64>, Tensor)> {
    let mut tape = Tape::new();
    let w_f_var = tape.constant(w_f.clone());
    let q_var = tape.constant(q.clone());
    let hidden = decoder_state.len();
    let mut states = Vec::with_capacity(encoder_states.len());
    let mut proj = Vec::with_capacity(encoder_states.len());
    for h in encoder_states {
        let v = tape.constant(h.clone());
        proj.push(tape.matvec_cols(w_f_var, v, hidden)?);
        states.push(v);
    }
    if states.is_empty() {
        return Err(Error::Domain("attention needs at least one encoder state".into()));
    }
    let matrix = tape.stack(&states)?;
    let proj = tape.stack(&proj)?;
    let h_dec = tape.constant(decoder_state.clone());
    let (a, s) = attend(&mut tape, w_f_var, q_var, proj, matrix, h_dec)?;
    Ok((tape.value(a).values().to_vec(), tape.value(s).clone()))
}

/// Mean absolute error over a horizon.
pub fn loss_mae(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Dimension {
            op: "loss_mae",
            left: vec![predictions.len()],
            right: vec![targets.len()],
        });
    }
    if predictions.is_empty() {
        return Err(Error::Domain("loss over an empty horizon".into()));
    }
    let total: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / predictions.len() as f64)
}

/// A recorded forward pass.
struct Recorded {
    tape: Tape,
    bound: Bound,
    encoder_states: Vec<Var>,
    decoder_states: Vec<Var>,
    attention: Vec<Var>,
    predictions: Var,
}

/// Network weights together with the mask and normalizer they were trained
/// against.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    mask: HopMask,
    normalizer: Normalizer,
    params: ModelParams,
}

impl Model {
    /// Freshly initialized network.
    pub fn new(config: ModelConfig, mask: HopMask, normalizer: Normalizer, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&mask, config.hidden, seed);
        Model::from_parts(config, mask, normalizer, params)
    }

    pub fn from_parts(config: ModelConfig, mask: HopMask, normalizer: Normalizer, params: ModelParams) -> Result<Self> {
        config.validate()?;
        if normalizer.link_count() != mask.size() {
            return Err(Error::validation(format!(
                "normalizer covers {} links, mask covers {}",
                normalizer.link_count(),
                mask.size()
            )));
        }
        params.validate(&mask, config.hidden)?;
        Ok(Model {
            config,
            mask,
            normalizer,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mask(&self) -> &HopMask {
        &self.mask
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Direct access for optimizers and tests. Entries of `w_gc` outside the
    /// mask are never read by the forward pass.
    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    /// Applies `f` to the parameters, then zeroes `w_gc` outside the mask.
    pub fn update(&mut self, f: impl FnOnce(&mut ModelParams)) {
        f(&mut self.params);
        self.params.enforce_mask(&self.mask);
    }

    pub fn set_params(&mut self, params: ModelParams) -> Result<()> {
        params.validate(&self.mask, self.config.hidden)?;
        self.params = params;
        Ok(())
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    fn check_sample(&self, sample: &Sample) -> Result<()> {
        if sample.link >= self.mask.size() {
            return Err(Error::Domain(format!("sample link {} out of range", sample.link)));
        }
        if sample.neighbors != self.mask.row(sample.link) {
            return Err(Error::validation(format!(
                "sample neighbours for link {} do not match the model's hop mask",
                sample.link
            )));
        }
        let steps = self.config.lookback + 1;
        if sample.lookback_steps() != steps || sample.encoder_speeds.len() != steps * sample.neighbors.len() {
            return Err(Error::validation(format!(
                "sample has {} encoder steps, model expects {steps}",
                sample.lookback_steps()
            )));
        }
        if sample.horizon() != self.config.horizon || sample.decoder_exog.len() != self.config.horizon {
            return Err(Error::validation(format!(
                "sample has horizon {}, model expects {}",
                sample.horizon(),
                self.config.horizon
            )));
        }
        Ok(())
    }

    fn record(&self, sample: &Sample, track: bool) -> Result<Recorded> {
        self.check_sample(sample)?;
        let hidden = self.config.hidden;
        let steps = sample.lookback_steps();
        let width = sample.neighbors.len();
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &self.params, sample.link, &sample.neighbors, track);

        let z: Vec<f64> = (0..steps)
            .flat_map(|s| {
                sample
                    .neighbor_speeds(s)
                    .iter()
                    .zip(&sample.neighbors)
                    .map(|(&v, &j)| self.normalizer.speed(j, v))
                    .collect::<Vec<_>>()
            })
            .collect();
        let window = tape.constant(Tensor::matrix(steps, width, z)?);
        let fused = tape.matvec(window, bound.gc_row)?;

        let mut h = tape.constant(Tensor::zeros(&[hidden]));
        let mut encoder_states = Vec::with_capacity(steps);
        let mut enc_proj = Vec::with_capacity(steps);
        for (s, exog) in sample.encoder_exog.iter().enumerate() {
            let v = tape.index(fused, s)?;
            let e = self.normalizer.encoder_exog(*exog);
            let e = tape.constant(Tensor::vector(e.to_vec()));
            let x = tape.concat(v, e)?;
            h = gru_step(&mut tape, &bound.encoder, h, x)?;
            encoder_states.push(h);
            enc_proj.push(tape.matvec_cols(bound.w_f, h, hidden)?);
        }
        let enc_matrix = tape.stack(&encoder_states)?;
        let enc_proj = tape.stack(&enc_proj)?;

        let mut decoder_states = Vec::with_capacity(sample.horizon());
        let mut attention = Vec::with_capacity(sample.horizon());
        let mut outputs = Vec::with_capacity(sample.horizon());
        for exog in &sample.decoder_exog {
            let x = self.normalizer.decoder_exog(sample.link, *exog);
            let x = tape.constant(Tensor::vector(x.to_vec()));
            h = gru_step(&mut tape, &bound.decoder, h, x)?;
            let (a, s) = attend(&mut tape, bound.w_f, bound.q, enc_proj, enc_matrix, h)?;
            let sh = tape.concat(s, h)?;
            let mixed = tape.matvec(bound.w_h, sh)?;
            let mixed = tape.tanh(mixed);
            let y = tape.matvec(bound.w_v, mixed)?;
            outputs.push(tape.add(y, bound.b_v)?);
            decoder_states.push(h);
            attention.push(a);
        }
        let predictions = tape.concat_many(&outputs)?;
        Ok(Recorded {
            tape,
            bound,
            encoder_states,
            decoder_states,
            attention,
            predictions,
        })
    }

    fn trace(&self, sample: &Sample, rec: &Recorded) -> ForwardTrace {
        let tape = &rec.tape;
        let normalized = tape.value(rec.predictions).values().to_vec();
        let predictions = normalized
            .iter()
            .map(|&z| self.normalizer.denormalize(sample.link, z))
            .collect();
        ForwardTrace {
            encoder_states: rec.encoder_states.iter().map(|&v| tape.value(v).clone()).collect(),
            decoder_states: rec.decoder_states.iter().map(|&v| tape.value(v).clone()).collect(),
            attention: rec.attention.iter().map(|&v| tape.value(v).values().to_vec()).collect(),
            normalized,
            predictions,
        }
    }

    /// Encoder hidden states (oldest first) and the context `C = h_t`.
    pub fn encode(&self, sample: &Sample) -> Result<(Vec<Tensor>, Tensor)> {
        let trace = self.forward(sample)?;
        let context = trace
            .encoder_states
            .last()
            .cloned()
            .ok_or_else(|| Error::Internal("encoder produced no states".into()))?;
        Ok((trace.encoder_states, context))
    }

    pub fn forward(&self, sample: &Sample) -> Result<ForwardTrace> {
        let rec = self.record(sample, false)?;
        Ok(self.trace(sample, &rec))
    }

    /// Forecast in km/h for each horizon step.
    pub fn predict(&self, sample: &Sample) -> Result<Vec<f64>> {
        Ok(self.forward(sample)?.predictions)
    }

    fn normalized_targets(&self, sample: &Sample) -> Vec<f64> {
        sample
            .targets
            .iter()
            .map(|&v| self.normalizer.speed(sample.link, v))
            .collect()
    }

    /// Horizon-mean absolute error in normalized units.
    pub fn loss(&self, sample: &Sample) -> Result<f64> {
        let trace = self.forward(sample)?;
        loss_mae(&trace.normalized, &self.normalized_targets(sample))
    }

    /// Loss and its gradient with respect to every parameter. The `w_gc`
    /// gradient is zero outside the link's mask row.
    pub fn loss_and_gradient(&self, sample: &Sample) -> Result<(f64, ModelParams)> {
        let mut rec = self.record(sample, true)?;
        let tape = &mut rec.tape;
        let targets = tape.constant(Tensor::vector(self.normalized_targets(sample)));
        let diff = tape.sub(rec.predictions, targets)?;
        let abs = tape.abs(diff);
        let loss = tape.mean(abs)?;
        let value = tape.value(loss).item();
        let mut grads = tape.backward(loss)?;
        Ok((value, self.collect(sample, &rec.bound, &mut grads)))
    }

    fn collect(&self, sample: &Sample, b: &Bound, grads: &mut Gradients) -> ModelParams {
        let mut out = self.params.zeros_like();
        let mut take = |var: Var, into: &mut Tensor| {
            if let Some(g) = grads.take(var) {
                *into = g;
            }
        };
        let mut row = Tensor::zeros(&[sample.neighbors.len()]);
        take(b.gc_row, &mut row);
        for (k, &j) in sample.neighbors.iter().enumerate() {
            out.w_gc.row_mut(sample.link)[j] = row.values()[k];
        }
        for (g, w) in [(&b.encoder, &mut out.encoder), (&b.decoder, &mut out.decoder)] {
            take(g.w_z, &mut w.w_z);
            take(g.w_r, &mut w.w_r);
            take(g.w_c, &mut w.w_c);
            take(g.b_z, &mut w.b_z);
            take(g.b_r, &mut w.b_r);
            take(g.b_c, &mut w.b_c);
        }
        take(b.w_f, &mut out.w_f);
        take(b.q, &mut out.q);
        take(b.w_h, &mut out.w_h);
        take(b.w_v, &mut out.w_v);
        take(b.b_v, &mut out.b_v);
        out
    }
}

#[cfg(test)]
mod tests;
