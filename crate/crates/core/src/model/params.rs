use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HopMask;
use crate::numcore::Tensor;

/// Encoder input: spatially fused speed, time-of-day, weekday flag.
pub const ENCODER_INPUT: usize = 3;
/// Decoder input: time-of-day plus five historical statistics.
pub const DECODER_INPUT: usize = 6;

/// Weights of one GRU cell; every matrix acts on `[h_prev; x]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruWeights {
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_c: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_c: Tensor,
}

impl GruWeights {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let w = Tensor::zeros(&[hidden, hidden + input]);
        let b = Tensor::zeros(&[hidden]);
        GruWeights {
            w_z: w.clone(),
            w_r: w.clone(),
            w_c: w,
            b_z: b.clone(),
            b_r: b.clone(),
            b_c: b,
        }
    }

    fn init(hidden: usize, input: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = hidden + input;
        GruWeights {
            w_z: uniform(&[hidden, fan_in], fan_in, rng),
            w_r: uniform(&[hidden, fan_in], fan_in, rng),
            w_c: uniform(&[hidden, fan_in], fan_in, rng),
            ..GruWeights::zeros(hidden, input)
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.b_z.len()
    }

    pub fn input_size(&self) -> usize {
        self.w_z.cols() - self.hidden_size()
    }

    fn check(&self, name: &str, hidden: usize, input: usize) -> Result<()> {
        let w = [hidden, hidden + input];
        for (part, t, shape) in [
            ("w_z", &self.w_z, &w[..]),
            ("w_r", &self.w_r, &w[..]),
            ("w_c", &self.w_c, &w[..]),
            ("b_z", &self.b_z, &[hidden][..]),
            ("b_r", &self.b_r, &[hidden][..]),
            ("b_c", &self.b_c, &[hidden][..]),
        ] {
            expect_shape(&format!("{name}.{part}"), t, shape)?;
        }
        Ok(())
    }
}

/// Every trainable tensor of the network.
///
/// Only `w_gc` is link-specific (one row per link); the recurrent, attention
/// and output weights are shared by all links.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `|L| × |L|` graph-convolution weights, zero outside the hop mask.
    pub w_gc: Tensor,
    pub encoder: GruWeights,
    pub decoder: GruWeights,
    /// Attention score projection, `H × 2H`, applied to `[h_dec; h_enc]`.
    pub w_f: Tensor,
    pub q: Tensor,
    /// `H × 2H`, applied to `[S; h_dec]`.
    pub w_h: Tensor,
    /// `1 × H` output row.
    pub w_v: Tensor,
    pub b_v: Tensor,
}

fn uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.values_mut() {
        *v = rng.random_range(-bound..=bound);
    }
    t
}

fn expect_shape(name: &str, t: &Tensor, shape: &[usize]) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::validation(format!(
            "parameter {name} has shape {:?}, expected {shape:?}",
            t.shape()
        )));
    }
    Ok(())
}

impl ModelParams {
    pub fn zeros(links: usize, hidden: usize) -> Self {
        ModelParams {
            w_gc: Tensor::zeros(&[links, links]),
            encoder: GruWeights::zeros(hidden, ENCODER_INPUT),
            decoder: GruWeights::zeros(hidden, DECODER_INPUT),
            w_f: Tensor::zeros(&[hidden, 2 * hidden]),
            q: Tensor::zeros(&[hidden]),
            w_h: Tensor::zeros(&[hidden, 2 * hidden]),
            w_v: Tensor::zeros(&[1, hidden]),
            b_v: Tensor::zeros(&[1]),
        }
    }

    /// Mask rows start as neighbourhood averages; matrices are uniform in
    /// `±1/√fan_in`; biases are zero.
    pub fn init(mask: &HopMask, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let links = mask.size();
        let mut w_gc = Tensor::zeros(&[links, links]);
        for i in 0..links {
            let row = mask.row(i);
            let share = 1.0 / row.len() as f64;
            for &j in row {
                w_gc.row_mut(i)[j] = share;
            }
        }
        ModelParams {
            w_gc,
            encoder: GruWeights::init(hidden, ENCODER_INPUT, &mut rng),
            decoder: GruWeights::init(hidden, DECODER_INPUT, &mut rng),
            w_f: uniform(&[hidden, 2 * hidden], 2 * hidden, &mut rng),
            q: uniform(&[hidden], hidden, &mut rng),
            w_h: uniform(&[hidden, 2 * hidden], 2 * hidden, &mut rng),
            w_v: uniform(&[1, hidden], hidden, &mut rng),
            b_v: Tensor::zeros(&[1]),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.q.len()
    }

    pub fn link_count(&self) -> usize {
        self.w_gc.rows()
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(self.link_count(), self.hidden_size())
    }

    /// Mutable view of all tensors, in the order of [`ModelParams::names`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let ModelParams {
            w_gc,
            encoder: e,
            decoder: d,
            w_f,
            q,
            w_h,
            w_v,
            b_v,
        } = self;
        vec![
            w_gc, &mut e.w_z, &mut e.w_r, &mut e.w_c, &mut e.b_z, &mut e.b_r, &mut e.b_c, &mut d.w_z, &mut d.w_r,
            &mut d.w_c, &mut d.b_z, &mut d.b_r, &mut d.b_c, w_f, q, w_h, w_v, b_v,
        ]
    }

    pub fn names() -> [&'static str; 18] {
        [
            "w_gc",
            "encoder.w_z",
            "encoder.w_r",
            "encoder.w_c",
            "encoder.b_z",
            "encoder.b_r",
            "encoder.b_c",
            "decoder.w_z",
            "decoder.w_r",
            "decoder.w_c",
            "decoder.b_z",
            "decoder.b_r",
            "decoder.b_c",
            "w_f",
            "q",
            "w_h",
            "w_v",
            "b_v",
        ]
    }

    pub fn all(&self) -> Vec<&Tensor> {
        let (e, d) = (&self.encoder, &self.decoder);
        vec![
            &self.w_gc, &e.w_z, &e.w_r, &e.w_c, &e.b_z, &e.b_r, &e.b_c, &d.w_z, &d.w_r, &d.w_c, &d.b_z, &d.b_r, &d.b_c,
            &self.w_f, &self.q, &self.w_h, &self.w_v, &self.b_v,
        ]
    }

    /// `self += other`.
    pub fn accumulate(&mut self, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.all()) {
            a.add_assign(b.values());
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for v in t.values_mut() {
                *v *= factor;
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.all().iter().flat_map(|t| t.values()).map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.all().iter().all(|t| t.is_finite())
    }

    /// Zeroes every graph-convolution weight outside `mask`.
    pub fn enforce_mask(&mut self, mask: &HopMask) {
        for i in 0..self.w_gc.rows() {
            let row = self.w_gc.row_mut(i);
            for (j, w) in row.iter_mut().enumerate() {
                if !mask.get(i, j) {
                    *w = 0.0;
                }
            }
        }
    }

    /// Checks shapes against `links` and `hidden`, and that `w_gc` is zero
    /// outside `mask`.
    pub fn validate(&self, mask: &HopMask, hidden: usize) -> Result<()> {
        let links = mask.size();
        expect_shape("w_gc", &self.w_gc, &[links, links])?;
        self.encoder.check("encoder", hidden, ENCODER_INPUT)?;
        self.decoder.check("decoder", hidden, DECODER_INPUT)?;
        expect_shape("w_f", &self.w_f, &[hidden, 2 * hidden])?;
        expect_shape("q", &self.q, &[hidden])?;
        expect_shape("w_h", &self.w_h, &[hidden, 2 * hidden])?;
        expect_shape("w_v", &self.w_v, &[1, hidden])?;
        expect_shape("b_v", &self.b_v, &[1])?;
        for i in 0..links {
            for (j, &w) in self.w_gc.row(i).iter().enumerate() {
                if w != 0.0 && !mask.get(i, j) {
                    return Err(Error::validation(format!(
                        "w_gc[{i}][{j}] is non-zero outside the hop mask"
                    )));
                }
            }
        }
        if !self.is_finite() {
            return Err(Error::validation("parameters contain non-finite values"));
        }
        Ok(())
    }
}
