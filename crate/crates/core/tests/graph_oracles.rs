#![allow(clippy::needless_range_loop)]

mod common;

use common::{convolve_dense, convolve_loop, cumulative_oracle, exact_oracle, floyd, graph_from_adjacency};
use proptest::prelude::*;
use roadcast::graph::{hop_distance, hop_mask, HopMode};
use roadcast::model::{graph_convolve, ModelParams};
use roadcast::numcore::Tensor;

fn adjacency() -> impl Strategy<Value = Vec<Vec<bool>>> {
    (1usize..=15, 0.05..0.5f64)
        .prop_flat_map(|(n, p)| prop::collection::vec(prop::collection::vec(prop::bool::weighted(p), n), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distances_match_floyd(adj in adjacency()) {
        let g = graph_from_adjacency(&adj);
        let d = floyd(&g);
        for i in 0..g.link_count() {
            for j in 0..g.link_count() {
                prop_assert_eq!(hop_distance(&g, i, j), d[i][j]);
            }
        }
    }

    #[test]
    fn masks_match_oracles(adj in adjacency(), k in 0usize..=4) {
        let g = graph_from_adjacency(&adj);
        prop_assert_eq!(hop_mask(&g, k, HopMode::Cumulative).dense(), cumulative_oracle(&g, k));
        prop_assert_eq!(hop_mask(&g, k, HopMode::Exact).dense(), exact_oracle(&g, k));
    }

    #[test]
    fn cumulative_masks_grow_with_order(adj in adjacency(), k in 0usize..4) {
        let g = graph_from_adjacency(&adj);
        let a = hop_mask(&g, k, HopMode::Cumulative).dense();
        let b = hop_mask(&g, k + 1, HopMode::Cumulative).dense();
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!(x <= y);
            }
        }
    }

    #[test]
    fn convolution_matches_loops(
        adj in adjacency(),
        k in 0usize..=3,
        exact in any::<bool>(),
        seed in prop::collection::vec(-3.0..3.0f64, 15 * 15 + 15),
    ) {
        let g = graph_from_adjacency(&adj);
        let n = g.link_count();
        let mode = if exact { HopMode::Exact } else { HopMode::Cumulative };
        let mask = hop_mask(&g, k, mode);
        let mut params = ModelParams::zeros(n, 2);
        params.w_gc = Tensor::matrix(n, n, seed[..n * n].to_vec()).unwrap();
        let v: Vec<f64> = seed[n * n..n * n + n].iter().map(|x| 30.0 + 10.0 * x).collect();
        for link in 0..n {
            let got = graph_convolve(&params, &mask, &v, link).unwrap();
            prop_assert_eq!(got, convolve_loop(&params, &mask, &v, link));
            prop_assert_eq!(got, convolve_dense(&params, &mask, &v, link));
        }
    }
}

#[test]
fn order_zero_is_identity_in_both_modes() {
    let adj = vec![
        vec![false, true, true],
        vec![true, false, false],
        vec![false, true, false],
    ];
    let g = graph_from_adjacency(&adj);
    for mode in [HopMode::Cumulative, HopMode::Exact] {
        assert!(hop_mask(&g, 0, mode).is_identity());
    }
}
