#![no_main]

use libfuzzer_sys::fuzz_target;
use roadcast::graph::{hop_mask, parse_graph, HopMode};

// Links file, a NUL byte, then the edges file.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (links, edges) = data.split_at(split);
    let edges = edges.get(1..).unwrap_or(&[]);
    if let Ok(g) = parse_graph(links, edges) {
        if g.link_count() <= 64 {
            let _ = hop_mask(&g, 2, HopMode::Cumulative);
            let _ = hop_mask(&g, 2, HopMode::Exact);
        }
    }
});
