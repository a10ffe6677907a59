//! Speed series on a daily-blocked 5-minute grid: synthetic generation, CSV
//! ingestion, gap filling and chronological splitting.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RoadGraph;

pub const SLOT_MINUTES: u32 = 5;
/// Slots in a full 24-hour day.
pub const SLOTS_PER_FULL_DAY: u32 = 24 * 60 / SLOT_MINUTES;
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarDay {
    pub date: NaiveDate,
    pub weekend: bool,
}

impl CalendarDay {
    pub fn new(date: NaiveDate) -> Self {
        CalendarDay {
            date,
            weekend: matches!(date.weekday(), Weekday::Sat | Weekday::Sun),
        }
    }
}

/// Daily horizon `[day_start_slot, day_end_slot)` in 5-minute slots counted
/// from midnight, repeated over an ordered list of days.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    slot_minutes: u32,
    day_start_slot: u32,
    day_end_slot: u32,
    days: Vec<CalendarDay>,
}

impl TimeGrid {
    /// 06:00–22:00 horizon.
    pub const DEFAULT_START_SLOT: u32 = 6 * 12;
    pub const DEFAULT_END_SLOT: u32 = 22 * 12;

    pub fn new(day_start_slot: u32, day_end_slot: u32, days: Vec<CalendarDay>) -> Result<Self> {
        if day_start_slot >= day_end_slot || day_end_slot > SLOTS_PER_FULL_DAY {
            return Err(Error::validation(format!(
                "daily horizon [{day_start_slot}, {day_end_slot}) is not within one day"
            )));
        }
        if days.is_empty() {
            return Err(Error::validation("a time grid needs at least one day"));
        }
        if days.windows(2).any(|w| w[0].date >= w[1].date) {
            return Err(Error::validation("grid days must be strictly increasing"));
        }
        Ok(TimeGrid {
            slot_minutes: SLOT_MINUTES,
            day_start_slot,
            day_end_slot,
            days,
        })
    }

    /// `count` consecutive days from `first`, with the default horizon.
    pub fn consecutive(first: NaiveDate, count: usize) -> Result<Self> {
        Self::consecutive_with_horizon(first, count, Self::DEFAULT_START_SLOT, Self::DEFAULT_END_SLOT)
    }

    pub fn consecutive_with_horizon(first: NaiveDate, count: usize, start: u32, end: u32) -> Result<Self> {
        let days = (0..count)
            .map(|d| CalendarDay::new(first + Duration::days(d as i64)))
            .collect();
        TimeGrid::new(start, end, days)
    }

    pub fn slot_minutes(&self) -> u32 {
        self.slot_minutes
    }

    pub fn day_start_slot(&self) -> u32 {
        self.day_start_slot
    }

    pub fn day_end_slot(&self) -> u32 {
        self.day_end_slot
    }

    pub fn slots_per_day(&self) -> usize {
        (self.day_end_slot - self.day_start_slot) as usize
    }

    pub fn days(&self) -> &[CalendarDay] {
        &self.days
    }

    pub fn day_count(&self) -> usize {
        self.days.len()
    }

    pub fn columns(&self) -> usize {
        self.day_count() * self.slots_per_day()
    }

    pub fn column(&self, day: usize, slot: usize) -> usize {
        day * self.slots_per_day() + slot
    }

    pub fn day_of(&self, col: usize) -> usize {
        col / self.slots_per_day()
    }

    pub fn slot_of(&self, col: usize) -> usize {
        col % self.slots_per_day()
    }

    /// Minutes since midnight at the start of in-day slot `slot`.
    pub fn minutes_since_midnight(&self, slot: usize) -> u32 {
        (self.day_start_slot + slot as u32) * self.slot_minutes
    }

    pub fn timestamp(&self, col: usize) -> NaiveDateTime {
        let day = &self.days[self.day_of(col)];
        let minutes = self.minutes_since_midnight(self.slot_of(col));
        day.date.and_hms_opt(0, 0, 0).expect("midnight") + Duration::minutes(minutes as i64)
    }

    /// Column of `ts`, or `None` when it falls outside the grid's days or
    /// daily horizon. Off-slot minutes are an error.
    pub fn locate(&self, ts: NaiveDateTime) -> Result<Option<usize>> {
        let minutes = ts.time().signed_duration_since(chrono::NaiveTime::MIN).num_minutes() as u32;
        if !minutes.is_multiple_of(self.slot_minutes) {
            return Err(Error::validation(format!(
                "{ts} is not aligned to a {}-minute slot",
                self.slot_minutes
            )));
        }
        let slot = minutes / self.slot_minutes;
        if slot < self.day_start_slot || slot >= self.day_end_slot {
            return Ok(None);
        }
        let Ok(day) = self.days.binary_search_by_key(&ts.date(), |d| d.date) else {
            return Ok(None);
        };
        Ok(Some(self.column(day, (slot - self.day_start_slot) as usize)))
    }

    fn select_days(&self, range: std::ops::Range<usize>) -> TimeGrid {
        TimeGrid {
            days: self.days[range].to_vec(),
            ..self.clone()
        }
    }
}

/// Link × time speed matrix in km/h with an observation mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedSeries {
    grid: TimeGrid,
    link_ids: Vec<String>,
    values: Vec<f64>,
    observed: Vec<bool>,
}

impl SpeedSeries {
    /// Fully observed series from a row-major `links × columns` matrix.
    pub fn from_values(grid: TimeGrid, link_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let observed = vec![true; values.len()];
        Self::with_mask(grid, link_ids, values, observed)
    }

    pub fn with_mask(grid: TimeGrid, link_ids: Vec<String>, values: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        let expected = link_ids.len() * grid.columns();
        if values.len() != expected || observed.len() != expected {
            return Err(Error::validation(format!(
                "series needs {expected} cells ({} links × {} columns), got {} values and {} mask entries",
                link_ids.len(),
                grid.columns(),
                values.len(),
                observed.len()
            )));
        }
        for (k, (&v, &obs)) in values.iter().zip(&observed).enumerate() {
            if obs && !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("cell {k} holds invalid speed {v}")));
            }
        }
        Ok(SpeedSeries {
            grid,
            link_ids,
            values,
            observed,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn link_ids(&self) -> &[String] {
        &self.link_ids
    }

    pub fn link_count(&self) -> usize {
        self.link_ids.len()
    }

    pub fn columns(&self) -> usize {
        self.grid.columns()
    }

    pub fn get(&self, link: usize, col: usize) -> f64 {
        self.values[link * self.columns() + col]
    }

    pub fn is_observed(&self, link: usize, col: usize) -> bool {
        self.observed[link * self.columns() + col]
    }

    pub fn link_values(&self, link: usize) -> &[f64] {
        let t = self.columns();
        &self.values[link * t..(link + 1) * t]
    }

    pub fn link_observed(&self, link: usize) -> &[bool] {
        let t = self.columns();
        &self.observed[link * t..(link + 1) * t]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    /// Checks that the series is laid out over `graph`'s links, in order.
    pub fn check_links(&self, graph: &RoadGraph) -> Result<()> {
        if self.link_ids != graph.link_ids() {
            return Err(Error::validation("speed series links do not match the road graph"));
        }
        Ok(())
    }

    fn select_days(&self, range: std::ops::Range<usize>) -> SpeedSeries {
        let spd = self.grid.slots_per_day();
        let (c0, c1) = (range.start * spd, range.end * spd);
        let t = self.columns();
        let mut values = Vec::with_capacity(self.link_count() * (c1 - c0));
        let mut observed = Vec::with_capacity(values.capacity());
        for l in 0..self.link_count() {
            values.extend_from_slice(&self.values[l * t + c0..l * t + c1]);
            observed.extend_from_slice(&self.observed[l * t + c0..l * t + c1]);
        }
        SpeedSeries {
            grid: self.grid.select_days(range),
            link_ids: self.link_ids.clone(),
            values,
            observed,
        }
    }
}

/// Knobs of the synthetic traffic generator.
///
/// Each link follows a free-flow level minus two Gaussian rush-hour dips.
/// The dips originate at the `bottleneck` link and reach a link `d` hops
/// upstream `d × wave_lag_slots` slots later, so neighbours carry lead
/// information. Per-day jitter of peak time and depth makes days differ;
/// optional incidents add sharp drops that travel with the same wave.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub free_flow_kmh: f64,
    pub dip_depth_kmh: f64,
    /// Standard deviation of each Gaussian dip, in hours.
    pub dip_width_hours: f64,
    pub morning_peak_hour: f64,
    pub evening_peak_hour: f64,
    /// Dip depth multiplier on weekends.
    pub weekend_dip_factor: f64,
    pub wave_lag_slots: u32,
    /// Index of the link where congestion waves start.
    pub bottleneck: usize,
    pub noise_sigma_kmh: f64,
    pub floor_kmh: f64,
    /// Per-day, per-peak standard deviation of the peak time.
    pub peak_jitter_minutes: f64,
    /// Per-day relative standard deviation of the dip depth.
    pub depth_jitter: f64,
    pub incident_rate_per_day: f64,
    pub incident_depth_kmh: f64,
    pub incident_slots: u32,
    pub start_date: NaiveDate,
    pub day_start_slot: u32,
    pub day_end_slot: u32,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            free_flow_kmh: 60.0,
            dip_depth_kmh: 35.0,
            dip_width_hours: 1.0,
            morning_peak_hour: 8.0,
            evening_peak_hour: 18.0,
            weekend_dip_factor: 0.4,
            wave_lag_slots: 1,
            bottleneck: 0,
            noise_sigma_kmh: 2.0,
            floor_kmh: 1.0,
            peak_jitter_minutes: 15.0,
            depth_jitter: 0.15,
            incident_rate_per_day: 0.0,
            incident_depth_kmh: 25.0,
            incident_slots: 6,
            start_date: NaiveDate::from_ymd_opt(2016, 10, 1).expect("valid date"),
            day_start_slot: TimeGrid::DEFAULT_START_SLOT,
            day_end_slot: TimeGrid::DEFAULT_END_SLOT,
        }
    }
}

impl SynthParams {
    fn validate(&self, graph: &RoadGraph) -> Result<()> {
        let positive = [
            ("free_flow_kmh", self.free_flow_kmh),
            ("dip_width_hours", self.dip_width_hours),
            ("floor_kmh", self.floor_kmh),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("dip_depth_kmh", self.dip_depth_kmh),
            ("weekend_dip_factor", self.weekend_dip_factor),
            ("noise_sigma_kmh", self.noise_sigma_kmh),
            ("peak_jitter_minutes", self.peak_jitter_minutes),
            ("depth_jitter", self.depth_jitter),
            ("incident_rate_per_day", self.incident_rate_per_day),
            ("incident_depth_kmh", self.incident_depth_kmh),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.bottleneck >= graph.link_count() {
            return Err(Error::validation(format!(
                "bottleneck index {} is outside the {}-link graph",
                self.bottleneck,
                graph.link_count()
            )));
        }
        Ok(())
    }
}

struct DayShape {
    morning: f64,
    evening: f64,
    depth: f64,
    incidents: Vec<(i64, f64)>,
}

/// Deterministic synthetic speeds for `days` consecutive days.
pub fn generate_synthetic(graph: &RoadGraph, days: usize, seed: u64, params: &SynthParams) -> Result<SpeedSeries> {
    if days < 2 {
        return Err(Error::validation(format!("days must be at least 2, got {days}")));
    }
    params.validate(graph)?;
    let grid = TimeGrid::consecutive_with_horizon(params.start_date, days, params.day_start_slot, params.day_end_slot)?;
    let spd = grid.slots_per_day();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Lag of each link behind the bottleneck: hops downstream to reach it.
    let lags: Vec<i64> = (0..graph.link_count())
        .map(|i| {
            graph.distances_from(i)[params.bottleneck].map_or(0, |d| (d as u64 * params.wave_lag_slots as u64) as i64)
        })
        .collect();

    let jitter = Normal::new(0.0, params.peak_jitter_minutes / 60.0).map_err(|e| Error::validation(e.to_string()))?;
    let depth_noise = Normal::new(0.0, params.depth_jitter).map_err(|e| Error::validation(e.to_string()))?;
    let shapes: Vec<DayShape> = grid
        .days()
        .iter()
        .map(|day| {
            let morning = params.morning_peak_hour + jitter.sample(&mut rng);
            let evening = params.evening_peak_hour + jitter.sample(&mut rng);
            let weekend = if day.weekend { params.weekend_dip_factor } else { 1.0 };
            let depth = params.dip_depth_kmh * weekend * (1.0 + depth_noise.sample(&mut rng)).max(0.0);
            let count = if params.incident_rate_per_day > 0.0 {
                Poisson::new(params.incident_rate_per_day)
                    .map(|p| p.sample(&mut rng) as usize)
                    .unwrap_or(0)
            } else {
                0
            };
            let incidents = (0..count)
                .map(|_| {
                    let start = rng.random_range(0..spd) as i64;
                    let depth = params.incident_depth_kmh * rng.random_range(0.75..1.25);
                    (start, depth)
                })
                .collect();
            DayShape {
                morning,
                evening,
                depth,
                incidents,
            }
        })
        .collect();

    let noise = Normal::new(0.0, params.noise_sigma_kmh).map_err(|e| Error::validation(e.to_string()))?;
    let width = params.dip_width_hours;
    let slot_hours = SLOT_MINUTES as f64 / 60.0;
    let mut values = Vec::with_capacity(graph.link_count() * grid.columns());
    for &lag in &lags {
        for shape in &shapes {
            for s in 0..spd {
                let hour = grid.minutes_since_midnight(s) as f64 / 60.0 - lag as f64 * slot_hours;
                let bump = |peak: f64| (-0.5 * ((hour - peak) / width).powi(2)).exp();
                let mut v = params.free_flow_kmh - shape.depth * (bump(shape.morning) + bump(shape.evening));
                let lagged_slot = s as i64 - lag;
                for &(start, depth) in &shape.incidents {
                    if lagged_slot >= start && lagged_slot < start + params.incident_slots as i64 {
                        v -= depth;
                    }
                }
                if params.noise_sigma_kmh > 0.0 {
                    v += noise.sample(&mut rng);
                }
                values.push(v.max(params.floor_kmh));
            }
        }
    }
    SpeedSeries::from_values(grid, graph.link_ids().to_vec(), values)
}

/// Sidecar record written next to a generated speed file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub seed: u64,
    pub days: usize,
    pub links: usize,
    pub params: SynthParams,
}

/// One parsed row of a long-format speed file.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedRow {
    pub line: u64,
    pub timestamp: NaiveDateTime,
    pub link_id: String,
    pub speed_kmh: f64,
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .map_err(|e| Error::validation(format!("bad timestamp `{s}`: {e}")))
}

pub fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

/// Parses the `timestamp,link_id,speed_kmh` long format.
pub fn parse_speed_rows<R: Read>(reader: R) -> Result<Vec<SpeedRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["timestamp", "link_id", "speed_kmh"] {
        return Err(Error::Format {
            line: 1,
            message: format!(
                "expected header `timestamp,link_id,speed_kmh`, found `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let format_err = |message: String| Error::Format { line, message };
        let timestamp = NaiveDateTime::parse_from_str(&record[0], TIMESTAMP_FORMAT)
            .map_err(|e| format_err(format!("bad timestamp `{}`: {e}", &record[0])))?;
        if timestamp.minute() % SLOT_MINUTES != 0 {
            return Err(format_err(format!(
                "timestamp `{}` is off the 5-minute grid",
                &record[0]
            )));
        }
        let speed_kmh: f64 = record[2]
            .parse()
            .map_err(|_| format_err(format!("bad speed `{}`", &record[2])))?;
        if !(speed_kmh.is_finite() && speed_kmh >= 0.0) {
            return Err(format_err(format!("speed {speed_kmh} must be finite and non-negative")));
        }
        rows.push(SpeedRow {
            line,
            timestamp,
            link_id: record[1].to_string(),
            speed_kmh,
        });
    }
    Ok(rows)
}

/// Grid of consecutive days covering every date in `rows`.
pub fn grid_spanning(rows: &[SpeedRow], day_start_slot: u32, day_end_slot: u32) -> Result<TimeGrid> {
    let dates: BTreeSet<NaiveDate> = rows.iter().map(|r| r.timestamp.date()).collect();
    let (Some(&first), Some(&last)) = (dates.first(), dates.last()) else {
        return Err(Error::validation("speed file has no rows"));
    };
    let count = (last - first).num_days() as usize + 1;
    TimeGrid::consecutive_with_horizon(first, count, day_start_slot, day_end_slot)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Rows that overwrote an earlier row for the same cell.
    pub duplicates: usize,
    /// Rows outside the grid's days or daily horizon.
    pub skipped: usize,
}

/// Places parsed rows on `grid`; absent cells are marked missing and
/// duplicates keep the last row.
pub fn series_from_rows(rows: &[SpeedRow], graph: &RoadGraph, grid: &TimeGrid) -> Result<(SpeedSeries, LoadReport)> {
    let t = grid.columns();
    let mut values = vec![0.0; graph.link_count() * t];
    let mut observed = vec![false; values.len()];
    let mut report = LoadReport::default();
    for row in rows {
        let link = graph
            .link_index(&row.link_id)
            .ok_or_else(|| Error::Reference(format!("line {}: unknown link_id `{}`", row.line, row.link_id)))?;
        let col = grid.locate(row.timestamp).map_err(|e| Error::Format {
            line: row.line,
            message: e.to_string(),
        })?;
        let Some(col) = col else {
            report.skipped += 1;
            continue;
        };
        let cell = link * t + col;
        if observed[cell] {
            report.duplicates += 1;
        }
        values[cell] = row.speed_kmh;
        observed[cell] = true;
    }
    if report.duplicates > 0 {
        log::warn!("{} duplicate speed rows; last occurrence kept", report.duplicates);
    }
    let series = SpeedSeries::with_mask(grid.clone(), graph.link_ids().to_vec(), values, observed)?;
    Ok((series, report))
}

pub fn read_speeds<R: Read>(reader: R, graph: &RoadGraph, grid: &TimeGrid) -> Result<(SpeedSeries, LoadReport)> {
    series_from_rows(&parse_speed_rows(reader)?, graph, grid)
}

pub fn load_csv(path: &Path, graph: &RoadGraph, grid: &TimeGrid) -> Result<(SpeedSeries, LoadReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_speeds(std::io::BufReader::new(file), graph, grid)
}

/// Loads a speed file onto the default daily horizon spanning its dates.
pub fn load_csv_spanning(path: &Path, graph: &RoadGraph) -> Result<(SpeedSeries, LoadReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let rows = parse_speed_rows(std::io::BufReader::new(file))?;
    let grid = grid_spanning(&rows, TimeGrid::DEFAULT_START_SLOT, TimeGrid::DEFAULT_END_SLOT)?;
    series_from_rows(&rows, graph, &grid)
}

/// Writes observed cells in time-major, link-minor order.
pub fn write_csv<W: Write>(series: &SpeedSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "link_id", "speed_kmh"])?;
    for col in 0..series.columns() {
        let ts = format_timestamp(series.grid.timestamp(col));
        for (l, id) in series.link_ids.iter().enumerate() {
            if series.is_observed(l, col) {
                w.write_record([ts.as_str(), id.as_str(), &series.get(l, col).to_string()])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<speeds>", e))?;
    Ok(())
}

/// Fills missing cells per link and day.
///
/// Interior gaps are filled linearly between the nearest observed slots of
/// the same day, edge gaps copy the nearest observed value of that day, and
/// days with no observation at all take the link's mean for that slot over
/// the days where it was observed.
pub fn interpolate_missing(s: &SpeedSeries) -> Result<SpeedSeries> {
    let spd = s.grid.slots_per_day();
    let days = s.grid.day_count();
    let mut values = s.values.clone();
    for l in 0..s.link_count() {
        let obs = s.link_observed(l);
        if !obs.iter().any(|&o| o) {
            return Err(Error::validation(format!(
                "link `{}` has no observations",
                s.link_ids[l]
            )));
        }
        let row = s.link_values(l);
        let slot_mean: Vec<Option<f64>> = (0..spd)
            .map(|slot| {
                let seen: Vec<f64> = (0..days)
                    .map(|d| d * spd + slot)
                    .filter(|&c| obs[c])
                    .map(|c| row[c])
                    .collect();
                (!seen.is_empty()).then(|| seen.iter().sum::<f64>() / seen.len() as f64)
            })
            .collect();
        let link_mean = {
            let seen: Vec<f64> = row.iter().zip(obs).filter(|(_, &o)| o).map(|(&v, _)| v).collect();
            seen.iter().sum::<f64>() / seen.len() as f64
        };
        let out = &mut values[l * s.columns()..(l + 1) * s.columns()];
        for d in 0..days {
            let base = d * spd;
            let day_obs: Vec<usize> = (0..spd).filter(|&k| obs[base + k]).collect();
            if day_obs.is_empty() {
                for k in 0..spd {
                    out[base + k] = slot_mean[k].unwrap_or(link_mean);
                }
                continue;
            }
            let first = day_obs[0];
            let last = *day_obs.last().expect("non-empty");
            for k in 0..first {
                out[base + k] = row[base + first];
            }
            for k in last + 1..spd {
                out[base + k] = row[base + last];
            }
            for pair in day_obs.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let (va, vb) = (row[base + a], row[base + b]);
                for k in a + 1..b {
                    let frac = (k - a) as f64 / (b - a) as f64;
                    out[base + k] = va + (vb - va) * frac;
                }
            }
        }
    }
    SpeedSeries::from_values(s.grid.clone(), s.link_ids.clone(), values)
}

/// Chronological split on day boundaries: the first `train_days` days and the rest.
pub fn split(s: &SpeedSeries, train_days: usize) -> Result<(SpeedSeries, SpeedSeries)> {
    let days = s.grid.day_count();
    if train_days == 0 || train_days >= days {
        return Err(Error::validation(format!(
            "train_days must be in 1..{days}, got {train_days}"
        )));
    }
    Ok((s.select_days(0..train_days), s.select_days(train_days..days)))
}
