//! Calendar features, per-slot historical statistics, normalisation and
//! sliding-window sample assembly.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{SpeedSeries, TimeGrid, SLOTS_PER_FULL_DAY, SLOT_MINUTES};
use crate::error::{Error, Result};
use crate::graph::HopMask;

/// Ordinal of the 5-minute slot within the full day, starting at 1 for
/// 00:00–00:05.
pub fn time_of_day_index(slot: usize, grid: &TimeGrid) -> u32 {
    1 + grid.minutes_since_midnight(slot) / SLOT_MINUTES
}

/// Summary of training-day speeds for one link at one time of day.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotStats {
    pub avg: f64,
    pub median: f64,
    pub max: f64,
    pub min: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl SlotStats {
    fn of(values: &mut [f64]) -> SlotStats {
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let avg = values.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            (values[n / 2 - 1] + values[n / 2]) / 2.0
        };
        let var = values.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / n as f64;
        SlotStats {
            avg,
            median,
            max: values[n - 1],
            min: values[0],
            std: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoricalStats {
    link_ids: Vec<String>,
    slots_per_day: usize,
    day_start_slot: u32,
    cells: Vec<SlotStats>,
}

impl HistoricalStats {
    pub fn get(&self, link: usize, slot: usize) -> Option<&SlotStats> {
        if slot >= self.slots_per_day {
            return None;
        }
        self.cells.get(link * self.slots_per_day + slot)
    }

    pub fn slots_per_day(&self) -> usize {
        self.slots_per_day
    }

    pub fn link_count(&self) -> usize {
        self.link_ids.len()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["link_id", "N", "avg", "median", "max", "min", "std"])?;
        for (l, id) in self.link_ids.iter().enumerate() {
            for slot in 0..self.slots_per_day {
                let s = &self.cells[l * self.slots_per_day + slot];
                let n = 1 + self.day_start_slot + slot as u32;
                w.write_record([
                    id.clone(),
                    n.to_string(),
                    s.avg.to_string(),
                    s.median.to_string(),
                    s.max.to_string(),
                    s.min.to_string(),
                    s.std.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<stats>", e))?;
        Ok(())
    }
}

/// Per-(link, slot) statistics over the observed cells of `train`.
pub fn compute_stats(train: &SpeedSeries) -> Result<HistoricalStats> {
    let grid = train.grid();
    let spd = grid.slots_per_day();
    let days = grid.day_count();
    let mut cells = Vec::with_capacity(train.link_count() * spd);
    let mut buf = Vec::with_capacity(days);
    for l in 0..train.link_count() {
        let values = train.link_values(l);
        let observed = train.link_observed(l);
        for slot in 0..spd {
            buf.clear();
            buf.extend(
                (0..days)
                    .map(|d| d * spd + slot)
                    .filter(|&c| observed[c])
                    .map(|c| values[c]),
            );
            if buf.is_empty() {
                return Err(Error::validation(format!(
                    "link `{}` has no training observation at slot {slot}",
                    train.link_ids()[l]
                )));
            }
            cells.push(SlotStats::of(&mut buf));
        }
    }
    Ok(HistoricalStats {
        link_ids: train.link_ids().to_vec(),
        slots_per_day: spd,
        day_start_slot: grid.day_start_slot(),
        cells,
    })
}

/// Per-link z-scoring of speed channels plus scaling of the time-of-day ordinal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNormalizer")]
pub struct Normalizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

#[derive(Deserialize)]
struct RawNormalizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl TryFrom<RawNormalizer> for Normalizer {
    type Error = Error;

    fn try_from(raw: RawNormalizer) -> Result<Self> {
        Normalizer::new(raw.mean, raw.std)
    }
}

impl Normalizer {
    /// Per-link means and scales; scales must be positive and finite.
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::validation("normalizer mean and std lengths differ"));
        }
        if mean.iter().any(|m| !m.is_finite()) || std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::validation(
                "normalizer needs finite means and positive finite scales",
            ));
        }
        Ok(Normalizer { mean, std })
    }

    /// Leaves speeds untouched.
    pub fn identity(links: usize) -> Self {
        Normalizer {
            mean: vec![0.0; links],
            std: vec![1.0; links],
        }
    }

    /// Fits on the observed cells of a training series. Links with zero
    /// spread fall back to a unit scale.
    pub fn fit(train: &SpeedSeries) -> Result<Self> {
        let mut mean = Vec::with_capacity(train.link_count());
        let mut std = Vec::with_capacity(train.link_count());
        for l in 0..train.link_count() {
            let seen: Vec<f64> = train
                .link_values(l)
                .iter()
                .zip(train.link_observed(l))
                .filter(|(_, &o)| o)
                .map(|(&v, _)| v)
                .collect();
            if seen.is_empty() {
                return Err(Error::validation(format!(
                    "link `{}` has no training observations",
                    train.link_ids()[l]
                )));
            }
            let mu = seen.iter().sum::<f64>() / seen.len() as f64;
            let sd = (seen.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / seen.len() as f64).sqrt();
            let sd = if sd > 0.0 {
                sd
            } else {
                log::warn!(
                    "link `{}` has zero training spread; using unit scale",
                    train.link_ids()[l]
                );
                1.0
            };
            mean.push(mu);
            std.push(sd);
        }
        Ok(Normalizer { mean, std })
    }

    pub fn link_count(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self, link: usize) -> f64 {
        self.mean[link]
    }

    pub fn std(&self, link: usize) -> f64 {
        self.std[link]
    }

    pub fn speed(&self, link: usize, v: f64) -> f64 {
        (v - self.mean[link]) / self.std[link]
    }

    pub fn denormalize(&self, link: usize, z: f64) -> f64 {
        z * self.std[link] + self.mean[link]
    }

    pub fn time_of_day(&self, n: f64) -> f64 {
        n / SLOTS_PER_FULL_DAY as f64
    }

    /// Encoder exogenous pair `(N, p)`.
    pub fn encoder_exog(&self, raw: [f64; 2]) -> [f64; 2] {
        [self.time_of_day(raw[0]), raw[1]]
    }

    /// Decoder vector `(N, avg, median, max, min, std)`; level statistics
    /// are z-scored, the spread is scaled.
    pub fn decoder_exog(&self, link: usize, raw: [f64; 6]) -> [f64; 6] {
        [
            self.time_of_day(raw[0]),
            self.speed(link, raw[1]),
            self.speed(link, raw[2]),
            self.speed(link, raw[3]),
            self.speed(link, raw[4]),
            raw[5] / self.std[link],
        ]
    }
}

/// One (link, anchor) instance. All speeds are raw km/h.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub link: usize,
    /// Column of the last encoder step `t`.
    pub anchor: usize,
    /// Mask row of `link`: links whose speeds enter the graph convolution.
    pub neighbors: Vec<usize>,
    /// Position of `link` inside `neighbors`.
    pub own_position: usize,
    /// `(m + 1) × neighbors.len()` window, oldest step first.
    pub encoder_speeds: Vec<f64>,
    /// `(N, p)` per encoder step.
    pub encoder_exog: Vec<[f64; 2]>,
    /// `(N, avg, median, max, min, std)` per horizon step.
    pub decoder_exog: Vec<[f64; 6]>,
    pub targets: Vec<f64>,
}

impl Sample {
    pub fn lookback_steps(&self) -> usize {
        self.encoder_exog.len()
    }

    pub fn horizon(&self) -> usize {
        self.targets.len()
    }

    pub fn neighbor_speeds(&self, step: usize) -> &[f64] {
        let w = self.neighbors.len();
        &self.encoder_speeds[step * w..(step + 1) * w]
    }

    /// The link's own speed at encoder step `step`.
    pub fn own_speed(&self, step: usize) -> f64 {
        self.neighbor_speeds(step)[self.own_position]
    }

    /// Last observed own speed `v_t`.
    pub fn last_speed(&self) -> f64 {
        self.own_speed(self.lookback_steps() - 1)
    }

    pub fn own_window(&self) -> Vec<f64> {
        (0..self.lookback_steps()).map(|s| self.own_speed(s)).collect()
    }
}

/// Sliding windows of `m + 1` encoder steps and `n` targets that stay
/// within one day, ordered link-major then by time.
pub fn build_samples(
    series: &SpeedSeries,
    stats: &HistoricalStats,
    mask: &HopMask,
    m: usize,
    n: usize,
) -> Result<Vec<Sample>> {
    let grid = series.grid();
    let spd = grid.slots_per_day();
    if n == 0 {
        return Err(Error::validation("horizon n must be at least 1"));
    }
    if m + 1 + n > spd {
        return Err(Error::validation(format!(
            "look-back {} plus horizon {n} exceeds the {spd} slots in a day",
            m + 1
        )));
    }
    if mask.size() != series.link_count() || stats.link_count() != series.link_count() {
        return Err(Error::validation("mask, statistics and series disagree on link count"));
    }
    if stats.slots_per_day() != spd {
        return Err(Error::validation("statistics and series disagree on slots per day"));
    }
    let mut out = Vec::with_capacity(series.link_count() * grid.day_count() * (spd - m - n));
    for link in 0..series.link_count() {
        let neighbors = mask.row(link).to_vec();
        let own_position = neighbors
            .iter()
            .position(|&j| j == link)
            .ok_or_else(|| Error::Internal(format!("mask row {link} lacks its diagonal")))?;
        for (d, day) in grid.days().iter().enumerate() {
            let p = if day.weekend { 0.0 } else { 1.0 };
            for slot in m..spd - n {
                let anchor = grid.column(d, slot);
                let mut encoder_speeds = Vec::with_capacity((m + 1) * neighbors.len());
                let mut encoder_exog = Vec::with_capacity(m + 1);
                for s in slot - m..=slot {
                    let col = grid.column(d, s);
                    encoder_speeds.extend(neighbors.iter().map(|&j| series.get(j, col)));
                    encoder_exog.push([time_of_day_index(s, grid) as f64, p]);
                }
                let mut decoder_exog = Vec::with_capacity(n);
                let mut targets = Vec::with_capacity(n);
                for s in slot + 1..=slot + n {
                    let st = stats
                        .get(link, s)
                        .ok_or_else(|| Error::validation(format!("no statistics for link {link} slot {s}")))?;
                    decoder_exog.push([
                        time_of_day_index(s, grid) as f64,
                        st.avg,
                        st.median,
                        st.max,
                        st.min,
                        st.std,
                    ]);
                    targets.push(series.get(link, grid.column(d, s)));
                }
                out.push(Sample {
                    link,
                    anchor,
                    neighbors: neighbors.clone(),
                    own_position,
                    encoder_speeds,
                    encoder_exog,
                    decoder_exog,
                    targets,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use chrono::NaiveDate;

    use super::*;
    use crate::data::{generate_synthetic, SynthParams};
    use crate::graph::{hop_mask, HopMode, RoadGraph};

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2016, 10, 3).unwrap()
    }

    #[test]
    fn time_of_day_ordinals() {
        let midnight = TimeGrid::consecutive_with_horizon(date(), 1, 0, 288).unwrap();
        assert_eq!(time_of_day_index(0, &midnight), 1);
        assert_eq!(time_of_day_index(84, &midnight), 85);
        let default = TimeGrid::consecutive(date(), 1).unwrap();
        assert_eq!(time_of_day_index(0, &default), 73);
        assert_eq!(time_of_day_index(12, &default), 85);
    }

    #[test]
    fn stats_of_single_day_and_pair() {
        let grid = TimeGrid::consecutive_with_horizon(date(), 1, 72, 73).unwrap();
        let s = SpeedSeries::from_values(grid, vec!["a".into()], vec![42.0]).unwrap();
        let st = compute_stats(&s).unwrap();
        assert_eq!(
            *st.get(0, 0).unwrap(),
            SlotStats {
                avg: 42.0,
                median: 42.0,
                max: 42.0,
                min: 42.0,
                std: 0.0
            }
        );

        let grid = TimeGrid::consecutive_with_horizon(date(), 2, 72, 73).unwrap();
        let s = SpeedSeries::from_values(grid, vec!["a".into()], vec![10.0, 20.0]).unwrap();
        let st = compute_stats(&s).unwrap();
        assert_eq!(
            *st.get(0, 0).unwrap(),
            SlotStats {
                avg: 15.0,
                median: 15.0,
                max: 20.0,
                min: 10.0,
                std: 5.0
            }
        );
    }

    #[test]
    fn stats_csv_header_and_rows() {
        let grid = TimeGrid::consecutive_with_horizon(date(), 2, 72, 73).unwrap();
        let s = SpeedSeries::from_values(grid, vec!["a".into()], vec![10.0, 20.0]).unwrap();
        let mut out = Vec::new();
        compute_stats(&s).unwrap().write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "link_id,N,avg,median,max,min,std\na,73,15,15,20,10,5\n"
        );
    }

    #[test]
    fn sample_counts() {
        let g = RoadGraph::ring(2).unwrap();
        let s = generate_synthetic(&g, 2, 1, &SynthParams::default()).unwrap();
        let stats = compute_stats(&s).unwrap();
        let mask = hop_mask(&g, 1, HopMode::Cumulative);
        let samples = build_samples(&s, &stats, &mask, 11, 6).unwrap();
        assert_eq!(samples.len(), 2 * 2 * 175);
        assert!(build_samples(&s, &stats, &mask, 11, 0).is_err());
        assert!(build_samples(&s, &stats, &mask, 100, 100).is_err());

        let grid = TimeGrid::consecutive_with_horizon(date(), 1, 72, 74).unwrap();
        let tiny = SpeedSeries::from_values(grid, vec!["a".into()], vec![1.0, 2.0]).unwrap();
        let tiny_stats = compute_stats(&tiny).unwrap();
        let samples = build_samples(&tiny, &tiny_stats, &HopMask::identity(1), 0, 1).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].targets, vec![2.0]);
        assert_eq!(samples[0].last_speed(), 1.0);
    }

    #[test]
    fn decoder_ordinals_match_target_slots() {
        let g = RoadGraph::ring(3).unwrap();
        let s = generate_synthetic(&g, 2, 4, &SynthParams::default()).unwrap();
        let stats = compute_stats(&s).unwrap();
        let samples = build_samples(&s, &stats, &hop_mask(&g, 1, HopMode::Cumulative), 3, 4).unwrap();
        for smp in &samples {
            let grid = s.grid();
            let slot = grid.slot_of(smp.anchor);
            for (j, exog) in smp.decoder_exog.iter().enumerate() {
                assert_eq!(exog[0], time_of_day_index(slot + 1 + j, grid) as f64);
                let st = stats.get(smp.link, slot + 1 + j).unwrap();
                assert_eq!(exog[1], st.avg);
            }
            assert_eq!(grid.day_of(smp.anchor - 3), grid.day_of(smp.anchor + 4));
        }
        // Link-major, then time.
        assert!(samples
            .windows(2)
            .all(|w| (w[0].link, w[0].anchor) < (w[1].link, w[1].anchor)));
    }

    #[test]
    fn normalizer_roundtrip_and_fallback() {
        let grid = TimeGrid::consecutive_with_horizon(date(), 2, 72, 75).unwrap();
        let s = SpeedSeries::from_values(
            grid,
            vec!["flat".into(), "moving".into()],
            vec![30.0; 6]
                .into_iter()
                .chain([10.0, 20.0, 30.0, 40.0, 50.0, 60.0])
                .collect(),
        )
        .unwrap();
        let norm = Normalizer::fit(&s).unwrap();
        assert_eq!(norm.std(0), 1.0);
        assert_eq!(norm.speed(0, 30.0), 0.0);
        for v in [0.3, 17.0, 55.5, 120.0] {
            assert!((norm.denormalize(1, norm.speed(1, v)) - v).abs() < 1e-12);
        }
        assert_eq!(norm.time_of_day(288.0), 1.0);
    }
}
