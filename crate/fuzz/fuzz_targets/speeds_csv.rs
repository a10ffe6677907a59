#![no_main]

use libfuzzer_sys::fuzz_target;
use roadcast::data::{parse_speed_rows, series_from_rows, write_csv, TimeGrid};
use roadcast::graph::RoadGraph;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = parse_speed_rows(data) else { return };
    let graph = RoadGraph::ring(3).unwrap();
    let grid = TimeGrid::consecutive(chrono::NaiveDate::from_ymd_opt(2016, 10, 1).unwrap(), 2).unwrap();
    if let Ok((series, _)) = series_from_rows(&rows, &graph, &grid) {
        let mut out = Vec::new();
        write_csv(&series, &mut out).unwrap();
    }
});
