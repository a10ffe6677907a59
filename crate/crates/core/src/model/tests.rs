use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{generate_synthetic, SynthParams};
use crate::features::{build_samples, compute_stats};
use crate::graph::{hop_mask, RoadGraph};

fn fixture(links: usize, hidden: usize, m: usize, n: usize, seed: u64) -> (Model, Vec<Sample>, RoadGraph) {
    let g = RoadGraph::ring(links).unwrap();
    let series = generate_synthetic(&g, 2, seed, &SynthParams::default()).unwrap();
    let stats = compute_stats(&series).unwrap();
    let norm = Normalizer::fit(&series).unwrap();
    let mask = hop_mask(&g, 1, HopMode::Cumulative);
    let samples = build_samples(&series, &stats, &mask, m, n).unwrap();
    let config = ModelConfig {
        hidden,
        lookback: m,
        horizon: n,
        order: 1,
        hop_mode: HopMode::Cumulative,
    };
    (Model::new(config, mask, norm, seed).unwrap(), samples, g)
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.values_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    t
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn zero_gru_halves_the_state() {
    let w = GruWeights::zeros(3, 2);
    let h = gru_cell(
        &w,
        &Tensor::vector(vec![2.0, -4.0, 1.0]),
        &Tensor::vector(vec![7.0, 8.0]),
    )
    .unwrap();
    assert_eq!(h.values(), &[1.0, -2.0, 0.5]);
    let h = gru_cell(&w, &Tensor::zeros(&[3]), &Tensor::vector(vec![7.0, 8.0])).unwrap();
    assert_eq!(h.values(), &[0.0; 3]);
}

#[test]
fn gru_matches_scalar_transcription() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (hid, inp) = (4, 3);
    let w = GruWeights {
        w_z: random_tensor(&[hid, hid + inp], &mut rng),
        w_r: random_tensor(&[hid, hid + inp], &mut rng),
        w_c: random_tensor(&[hid, hid + inp], &mut rng),
        b_z: random_tensor(&[hid], &mut rng),
        b_r: random_tensor(&[hid], &mut rng),
        b_c: random_tensor(&[hid], &mut rng),
    };
    let h = random_tensor(&[hid], &mut rng);
    let x = random_tensor(&[inp], &mut rng);
    let hx: Vec<f64> = h.values().iter().chain(x.values()).copied().collect();
    let lin = |m: &Tensor, b: &Tensor, v: &[f64], k: usize| -> f64 {
        let mut s = b.values()[k];
        for (c, vc) in v.iter().enumerate() {
            s += m.get(k, c) * vc;
        }
        s
    };
    let r: Vec<f64> = (0..hid).map(|k| sigmoid(lin(&w.w_r, &w.b_r, &hx, k))).collect();
    let mut rhx: Vec<f64> = (0..hid).map(|k| r[k] * h.values()[k]).collect();
    rhx.extend_from_slice(x.values());
    let got = gru_cell(&w, &h, &x).unwrap();
    for k in 0..hid {
        let z = sigmoid(lin(&w.w_z, &w.b_z, &hx, k));
        let c = lin(&w.w_c, &w.b_c, &rhx, k).tanh();
        let want = (1.0 - z) * h.values()[k] + z * c;
        assert!((got.values()[k] - want).abs() < 1e-12);
    }
}

#[test]
fn gru_rejects_bad_input_width() {
    let w = GruWeights::zeros(3, 2);
    assert!(gru_cell(&w, &Tensor::zeros(&[3]), &Tensor::zeros(&[4])).is_err());
}

#[test]
fn attention_uniform_for_identical_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w_f = random_tensor(&[3, 6], &mut rng);
    let q = random_tensor(&[3], &mut rng);
    let state = Tensor::vector(vec![0.3, -0.2, 0.9]);
    let (a, s) = attention(&w_f, &q, &vec![state.clone(); 4], &random_tensor(&[3], &mut rng)).unwrap();
    for w in &a {
        assert!((w - 0.25).abs() < 1e-15);
    }
    for (x, y) in s.values().iter().zip(state.values()) {
        assert!((x - y).abs() < 1e-15);
    }
}

#[test]
fn attention_uniform_when_q_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w_f = random_tensor(&[3, 6], &mut rng);
    let states: Vec<Tensor> = (0..5).map(|_| random_tensor(&[3], &mut rng)).collect();
    let (a, _) = attention(&w_f, &Tensor::zeros(&[3]), &states, &random_tensor(&[3], &mut rng)).unwrap();
    assert!(a.iter().all(|&w| w == 0.2));
}

#[test]
fn attention_context_in_convex_hull() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let w_f = random_tensor(&[4, 8], &mut rng);
        let q = random_tensor(&[4], &mut rng);
        let states: Vec<Tensor> = (0..6).map(|_| random_tensor(&[4], &mut rng)).collect();
        let (a, s) = attention(&w_f, &q, &states, &random_tensor(&[4], &mut rng)).unwrap();
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a.iter().all(|&w| w >= 0.0));
        for k in 0..4 {
            let lo = states.iter().map(|h| h.values()[k]).fold(f64::INFINITY, f64::min);
            let hi = states.iter().map(|h| h.values()[k]).fold(f64::NEG_INFINITY, f64::max);
            let v = s.values()[k];
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}

#[test]
fn attention_needs_states() {
    let err = attention(&Tensor::zeros(&[2, 4]), &Tensor::zeros(&[2]), &[], &Tensor::zeros(&[2]));
    assert!(matches!(err, Err(Error::Domain(_))));
}

#[test]
fn graph_convolve_examples() {
    let mask = HopMask::identity(3);
    let mut p = ModelParams::zeros(3, 2);
    for i in 0..3 {
        p.w_gc.row_mut(i)[i] = 1.0;
    }
    let v = [10.0, 20.0, 30.0];
    for i in 0..3 {
        assert_eq!(graph_convolve(&p, &mask, &v, i).unwrap(), v[i]);
    }

    let g = RoadGraph::build(&["a", "b", "c"], &[("a", "b"), ("b", "c")]).unwrap();
    let mask = hop_mask(&g, 1, HopMode::Cumulative);
    let mut p = ModelParams::zeros(3, 2);
    p.w_gc.row_mut(1).copy_from_slice(&[0.0, 0.5, 0.5]);
    assert_eq!(graph_convolve(&p, &mask, &v, 1).unwrap(), 25.0);
    assert!(matches!(graph_convolve(&p, &mask, &v, 3), Err(Error::Domain(_))));
}

#[test]
fn graph_convolve_ignores_unmasked_weights() {
    let mask = HopMask::identity(2);
    let mut p = ModelParams::zeros(2, 2);
    p.w_gc.values_mut().copy_from_slice(&[1.0, 5.0, 5.0, 1.0]);
    assert_eq!(graph_convolve(&p, &mask, &[3.0, 4.0], 0).unwrap(), 3.0);
}

#[test]
fn loss_examples() {
    assert_eq!(loss_mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    assert_eq!(loss_mae(&[1.0, 3.0], &[2.0, 5.0]).unwrap(), 1.5);
    assert!(matches!(loss_mae(&[1.0], &[1.0, 2.0]), Err(Error::Dimension { .. })));
}

#[test]
fn init_respects_mask() {
    let (model, _, _) = fixture(5, 4, 2, 1, 0);
    let p = model.params();
    for i in 0..5 {
        let row = model.mask().row(i);
        for j in 0..5 {
            let w = p.w_gc.get(i, j);
            if row.contains(&j) {
                assert_eq!(w, 1.0 / row.len() as f64);
            } else {
                assert_eq!(w, 0.0);
            }
        }
    }
    let bound = 1.0 / (4.0f64 + 3.0).sqrt();
    assert!(p.encoder.w_z.values().iter().all(|v| v.abs() <= bound));
    assert!(p.encoder.b_z.values().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_network_predicts_output_bias() {
    let (mut model, samples, _) = fixture(4, 5, 3, 2, 1);
    let mut p = model.params().zeros_like();
    p.b_v = Tensor::vector(vec![0.75]);
    model.set_params(p).unwrap();
    let trace = model.forward(&samples[10]).unwrap();
    assert_eq!(trace.normalized, vec![0.75, 0.75]);
    assert!(trace
        .encoder_states
        .iter()
        .all(|h| h.values().iter().all(|&v| v == 0.0)));
    assert_eq!(trace.attention.len(), 2);
    assert_eq!(trace.attention[0].len(), 4);
}

#[test]
fn single_step_encoder_is_one_gru_call() {
    let (model, samples, _) = fixture(3, 4, 0, 1, 2);
    let s = &samples[7];
    let (states, c) = model.encode(s).unwrap();
    assert_eq!(states.len(), 1);
    let norm = model.normalizer();
    let row = model.params().w_gc.row(s.link);
    let fused: f64 = s
        .neighbors
        .iter()
        .zip(s.neighbor_speeds(0))
        .map(|(&j, &v)| row[j] * norm.speed(j, v))
        .sum();
    let e = norm.encoder_exog(s.encoder_exog[0]);
    let x = Tensor::vector(vec![fused, e[0], e[1]]);
    let want = gru_cell(&model.params().encoder, &Tensor::zeros(&[4]), &x).unwrap();
    for (a, b) in c.values().iter().zip(want.values()) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn encoder_is_order_sensitive() {
    let (model, samples, _) = fixture(3, 6, 4, 1, 3);
    let s = samples[40].clone();
    let mut reversed = s.clone();
    let w = s.neighbors.len();
    let steps = s.lookback_steps();
    for k in 0..steps {
        let src = s.neighbor_speeds(steps - 1 - k).to_vec();
        reversed.encoder_speeds[k * w..(k + 1) * w].copy_from_slice(&src);
    }
    assert_ne!(s.encoder_speeds, reversed.encoder_speeds);
    let (_, a) = model.encode(&s).unwrap();
    let (_, b) = model.encode(&reversed).unwrap();
    assert_ne!(a, b);
}

#[test]
fn targets_do_not_leak_into_predictions() {
    let (model, samples, _) = fixture(4, 6, 3, 3, 4);
    let s = samples[25].clone();
    let mut other = s.clone();
    other.targets = vec![-100.0, 1e6, 0.0];
    assert_eq!(model.forward(&s).unwrap(), model.forward(&other).unwrap());
}

#[test]
fn attention_rows_are_distributions() {
    let (model, samples, _) = fixture(4, 6, 5, 3, 5);
    for s in samples.iter().step_by(37) {
        let trace = model.forward(s).unwrap();
        for row in &trace.attention {
            assert!(row.iter().all(|&a| a >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(trace.weight_back(0, 0), trace.attention[0][5]);
    }
}

#[test]
fn unmasked_links_do_not_influence_predictions() {
    let (model, samples, _) = fixture(6, 5, 3, 2, 6);
    // On a 6-ring with K=1 link 0 sees links 0 and 1 only.
    let s = samples.iter().find(|s| s.link == 0).unwrap();
    assert_eq!(s.neighbors, vec![0, 1]);
    let base = model.predict(s).unwrap();
    let mut tweaked_params = model.clone();
    tweaked_params.params_mut().w_gc.row_mut(0)[3] = 9.0;
    assert_eq!(tweaked_params.predict(s).unwrap(), base);
}

#[test]
fn mismatched_samples_are_rejected() {
    let (model, samples, _) = fixture(3, 4, 2, 2, 7);
    let mut s = samples[0].clone();
    s.targets.pop();
    s.decoder_exog.pop();
    assert!(matches!(model.forward(&s), Err(Error::Validation(_))));
    let mut s = samples[0].clone();
    s.neighbors = vec![0];
    assert!(matches!(model.forward(&s), Err(Error::Validation(_))));
}

#[test]
fn output_bias_gradient_is_mean_sign() {
    let (model, samples, _) = fixture(3, 4, 2, 3, 8);
    let s = &samples[11];
    let trace = model.forward(s).unwrap();
    let norm = model.normalizer();
    let want: f64 = trace
        .normalized
        .iter()
        .zip(&s.targets)
        .map(|(p, &t)| (p - norm.speed(s.link, t)).signum())
        .sum::<f64>()
        / 3.0;
    let (loss, g) = model.loss_and_gradient(s).unwrap();
    assert_eq!(loss, model.loss(s).unwrap());
    assert!((g.b_v.item() - want).abs() < 1e-15);
}

#[test]
fn gradient_matches_finite_differences() {
    let (model, samples, _) = fixture(5, 8, 3, 2, 9);
    assert!(!samples.is_empty());
    let s = &samples[samples.len() / 2 + 3];
    let (_, grad) = model.loss_and_gradient(s).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let names = ModelParams::names();
    let grads = grad.all();
    for (t, name) in names.iter().enumerate() {
        let len = grads[t].len();
        for k in 0..len {
            if t == 0 {
                let (i, j) = (k / 5, k % 5);
                if i != s.link || !model.mask().get(i, j) {
                    assert_eq!(grads[0].values()[k], 0.0, "{name}[{k}]");
                    continue;
                }
            }
            let mut plus = model.clone();
            plus.params_mut().tensors_mut()[t].values_mut()[k] += h;
            let mut minus = model.clone();
            minus.params_mut().tensors_mut()[t].values_mut()[k] -= h;
            let fd = (plus.loss(s).unwrap() - minus.loss(s).unwrap()) / (2.0 * h);
            let a = grads[t].values()[k];
            // Below ~1e-6 the central difference itself is only good to ~1e-11.
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            assert!(rel < 1e-4, "{name}[{k}]: analytic {a} vs numeric {fd}");
        }
    }
    assert!(worst < 1e-4);
}

#[test]
fn checkpoint_roundtrip() {
    let (model, samples, g) = fixture(4, 3, 2, 1, 10);
    let ck = Checkpoint::new(&model, g.link_ids(), serde_json::json!({"lr": 0.001}));
    let text = ck.to_json().unwrap();
    let back = Checkpoint::from_json(&text).unwrap();
    assert_eq!(back, ck);
    let restored = back.into_model_for(&g).unwrap();
    assert_eq!(restored, model);
    assert_eq!(
        restored.predict(&samples[3]).unwrap(),
        model.predict(&samples[3]).unwrap()
    );
}

#[test]
fn checkpoint_rejects_mismatches() {
    let (model, _, g) = fixture(4, 3, 2, 1, 11);
    let ck = Checkpoint::new(&model, g.link_ids(), serde_json::Value::Null);

    let other = RoadGraph::ring(5).unwrap();
    assert!(matches!(ck.clone().into_model_for(&other), Err(Error::Validation(_))));

    let mut bad = ck.clone();
    bad.version = 99;
    assert!(Checkpoint::from_json(&bad.to_json().unwrap()).is_err());

    let mut bad = ck.clone();
    bad.params.w_gc.row_mut(0)[2] = 1.0;
    assert!(matches!(bad.into_model(), Err(Error::Validation(_))));

    let mut bad = ck;
    bad.params.q = Tensor::zeros(&[4]);
    assert!(matches!(bad.into_model(), Err(Error::Validation(_))));
}
