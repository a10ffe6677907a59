use proptest::prelude::*;
use roadcast::data::{generate_synthetic, SpeedSeries, SynthParams};
use roadcast::features::{build_samples, compute_stats, Normalizer, Sample};
use roadcast::graph::{hop_mask, HopMode, RoadGraph};
use roadcast::model::{Model, ModelConfig};
use roadcast::train::{minibatch_iter, train_epoch, EpochOptions, Optimizer, OptimizerKind};

fn config(hidden: usize, m: usize, n: usize, order: usize) -> ModelConfig {
    ModelConfig {
        hidden,
        lookback: m,
        horizon: n,
        order,
        hop_mode: HopMode::Cumulative,
    }
}

fn series(g: &RoadGraph, days: usize, seed: u64) -> SpeedSeries {
    generate_synthetic(g, days, seed, &SynthParams::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// Links outside the target's mask row can take any speed.
    #[test]
    fn predictions_ignore_links_outside_the_mask(
        order in 0usize..=1,
        seed in any::<u64>(),
        target in 0usize..6,
        anchor_pick in 0usize..150,
        noise in prop::collection::vec(-25.0..25.0f64, 6 * 12),
    ) {
        let g = RoadGraph::ring(6).unwrap();
        let s = series(&g, 2, seed % 16);
        let stats = compute_stats(&s).unwrap();
        let mask = hop_mask(&g, order, HopMode::Cumulative);
        let model = Model::new(config(6, 5, 3, order), mask.clone(), Normalizer::fit(&s).unwrap(), seed).unwrap();
        let samples = build_samples(&s, &stats, &mask, 5, 3).unwrap();
        let per_link = samples.len() / 6;
        let base = &samples[target * per_link + anchor_pick % per_link];

        let mut values = s.values().to_vec();
        let t = s.columns();
        for l in (0..6).filter(|&l| !mask.get(target, l)) {
            for (k, c) in (base.anchor - 5..=base.anchor + 3).enumerate() {
                values[l * t + c] += noise[l * 12 + k];
            }
        }
        let perturbed = SpeedSeries::from_values(s.grid().clone(), s.link_ids().to_vec(), values).unwrap();
        let again = build_samples(&perturbed, &stats, &mask, 5, 3).unwrap();
        let other = again.iter().find(|x| x.link == base.link && x.anchor == base.anchor).unwrap();
        let a = model.predict(base).unwrap();
        let b = model.predict(other).unwrap();
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn attention_rows_are_distributions(seed in any::<u64>(), pick in 0usize..500) {
        let g = RoadGraph::ring(3).unwrap();
        let s = series(&g, 2, 1);
        let stats = compute_stats(&s).unwrap();
        let mask = hop_mask(&g, 1, HopMode::Cumulative);
        let samples = build_samples(&s, &stats, &mask, 7, 4).unwrap();
        let model = Model::new(config(5, 7, 4, 1), mask, Normalizer::fit(&s).unwrap(), seed).unwrap();
        let trace = model.forward(&samples[pick % samples.len()]).unwrap();
        for row in &trace.attention {
            prop_assert_eq!(row.len(), 8);
            prop_assert!(row.iter().all(|&a| a >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn training_loss_mostly_decreases() {
    let g = RoadGraph::ring(3).unwrap();
    let s = series(&g, 2, 6);
    let stats = compute_stats(&s).unwrap();
    let mask = hop_mask(&g, 1, HopMode::Cumulative);
    let samples: Vec<Sample> = build_samples(&s, &stats, &mask, 5, 3)
        .unwrap()
        .into_iter()
        .step_by(4)
        .collect();
    let mut model = Model::new(config(8, 5, 3, 1), mask, Normalizer::fit(&s).unwrap(), 2).unwrap();
    let mut opt = Optimizer::new(OptimizerKind::Adam, 1e-3).unwrap();
    let mut losses = Vec::new();
    for epoch in 0..5 {
        let batches = minibatch_iter(samples.len(), 16, 0, epoch);
        let opts = EpochOptions {
            epoch,
            clip_norm: Some(5.0),
            pool: None,
        };
        losses.push(train_epoch(&mut model, &samples, &batches, &mut opt, opts).unwrap());
    }
    let rises = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rises <= 1, "{losses:?}");
}

#[test]
fn different_epochs_shuffle_differently() {
    let a = minibatch_iter(100, 100, 5, 0);
    let b = minibatch_iter(100, 100, 5, 1);
    assert_ne!(a, b);
    assert_eq!(
        minibatch_iter(10, 4, 5, 3).iter().map(Vec::len).collect::<Vec<_>>(),
        vec![4, 4, 2]
    );
}
