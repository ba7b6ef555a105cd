//! Traffic traces: windowed per-site request counts, their expansion to a
//! per-second grid, and the split into per-terminal demand.
//!
//! The on-disk format is a CSV with columns `timestamp,site_id,count`, one row
//! per site and window. Window length is inferred from the timestamp grid.
//! [`CountTrace::augment`] refines windows to one-second resolution with a
//! piecewise-linear trend plus multiplicative jitter, rounding so every window
//! total is conserved exactly. [`CountTrace::to_demand`] then maps site counts
//! onto terminals by their traffic shares.

use std::io::{Read, Write as IoWrite};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Window length assumed for a trace with a single window, seconds.
pub const NATIVE_WINDOW_S: u32 = 900;

/// Relative spread of the per-second jitter applied during augmentation.
pub const AUGMENT_SIGMA: f64 = 0.1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace has no rows")]
    Empty,
    #[error("duplicate row for site {site} at timestamp {timestamp}")]
    DuplicateCell { site: String, timestamp: i64 },
    #[error("site {site} has no row at timestamp {timestamp}")]
    MissingCell { site: String, timestamp: i64 },
    #[error("timestamps do not form a uniform grid: saw steps {first} and {other}")]
    NonUniformGrid { first: i64, other: i64 },
    #[error("timestamp step must be positive, got {0}")]
    NonPositiveStep(i64),
    #[error("demand expansion needs a one-second trace, got {window_s} s windows")]
    NotPerSecond { window_s: u32 },
    #[error("terminal {terminal} maps to site {site} which the trace does not carry")]
    UnknownSite { terminal: String, site: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    timestamp: i64,
    site_id: String,
    count: u64,
}

/// Per-site request counts on a uniform window grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTrace {
    /// Window length, seconds.
    pub window_s: u32,
    /// Timestamp of the first window.
    pub start_ts: i64,
    /// Site ids, sorted, indexing the outer axis of `counts`.
    pub sites: Vec<String>,
    /// Counts per site per window.
    pub counts: Vec<Vec<u64>>,
}

impl CountTrace {
    pub fn num_windows(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> u64 {
        self.num_windows() as u64 * u64::from(self.window_s)
    }

    pub fn site_index(&self, id: &str) -> Option<usize> {
        self.sites.iter().position(|s| s == id)
    }

    /// Sum over sites of one window's count.
    pub fn window_total(&self, window: usize) -> u64 {
        self.counts.iter().map(|c| c[window]).sum()
    }

    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self, TraceError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, TraceError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for row in rdr.deserialize::<TraceRow>() {
            rows.push(row?);
        }
        if rows.is_empty() {
            return Err(TraceError::Empty);
        }

        let mut timestamps: Vec<i64> = rows.iter().map(|r| r.timestamp).collect();
        timestamps.sort_unstable();
        timestamps.dedup();
        let window_s = infer_window(&timestamps)?;

        let mut sites: Vec<String> = rows.iter().map(|r| r.site_id.clone()).collect();
        sites.sort_unstable();
        sites.dedup();

        let mut counts = vec![vec![None::<u64>; timestamps.len()]; sites.len()];
        for row in &rows {
            let s = sites.binary_search(&row.site_id).expect("site present");
            let w = timestamps.binary_search(&row.timestamp).expect("timestamp present");
            if counts[s][w].replace(row.count).is_some() {
                return Err(TraceError::DuplicateCell {
                    site: row.site_id.clone(),
                    timestamp: row.timestamp,
                });
            }
        }
        let mut dense = vec![vec![0u64; timestamps.len()]; sites.len()];
        for (s, site_row) in counts.iter().enumerate() {
            for (w, cell) in site_row.iter().enumerate() {
                dense[s][w] = cell.ok_or_else(|| TraceError::MissingCell {
                    site: sites[s].clone(),
                    timestamp: timestamps[w],
                })?;
            }
        }

        Ok(CountTrace {
            window_s,
            start_ts: timestamps[0],
            sites,
            counts: dense,
        })
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), TraceError> {
        let file = std::fs::File::create(path)?;
        self.write_to(file)
    }

    pub fn write_to<W: IoWrite>(&self, writer: W) -> Result<(), TraceError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for w in 0..self.num_windows() {
            let ts = self.start_ts + w as i64 * i64::from(self.window_s);
            for (s, site) in self.sites.iter().enumerate() {
                wtr.serialize(TraceRow {
                    timestamp: ts,
                    site_id: site.clone(),
                    count: self.counts[s][w],
                })?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Refines the trace to one-second windows.
    ///
    /// Within each source window the per-second means follow a linear trend
    /// through the neighbouring window means, scaled by lognormal jitter, and
    /// are then rounded with a largest-remainder pass so each window's total
    /// count is preserved exactly.
    pub fn augment(&self, seed: u64) -> CountTrace {
        self.augment_with(seed, AUGMENT_SIGMA)
    }

    /// [`CountTrace::augment`] with an explicit jitter spread; zero disables
    /// jitter, so a constant window spreads into equal seconds.
    pub fn augment_with(&self, seed: u64, sigma: f64) -> CountTrace {
        let win = self.window_s as usize;
        let len_s = self.duration_s() as usize;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut counts = Vec::with_capacity(self.sites.len());
        let log_comp = -0.5 * sigma * sigma;

        for site_counts in &self.counts {
            let means: Vec<f64> = site_counts
                .iter()
                .map(|&c| c as f64 / win as f64)
                .collect();
            let mut seconds = vec![0u64; len_s];
            let mut weights = vec![0.0f64; win];
            for (w, &c) in site_counts.iter().enumerate() {
                for (u, weight) in weights.iter_mut().enumerate() {
                    let trend = trend_at(&means, w, (u as f64 + 0.5) / win as f64);
                    let scale = if sigma > 0.0 {
                        let z: f64 = rng.sample(rand_distr_standard_normal());
                        (sigma * z + log_comp).exp()
                    } else {
                        1.0
                    };
                    *weight = (trend * scale).max(0.0);
                }
                apportion(&weights, c, &mut seconds[w * win..(w + 1) * win]);
            }
            counts.push(seconds);
        }

        CountTrace {
            window_s: 1,
            start_ts: self.start_ts,
            sites: self.sites.clone(),
            counts,
        }
    }

    /// Splits a one-second trace into per-terminal offered rates.
    ///
    /// Each terminal receives its share of its site's count, scaled by the
    /// packet size. The network demand at a tick is defined as the sum of the
    /// terminal demands in map order.
    pub fn to_demand(
        &self,
        packet_bits: f64,
        map: &[TerminalMapEntry],
    ) -> Result<DemandSeries, TraceError> {
        if self.window_s != 1 {
            return Err(TraceError::NotPerSecond {
                window_s: self.window_s,
            });
        }
        let terminals = map
            .iter()
            .map(|entry| {
                let site_idx = self.site_index(&entry.site_id).ok_or_else(|| {
                    TraceError::UnknownSite {
                        terminal: entry.terminal_id.clone(),
                        site: entry.site_id.clone(),
                    }
                })?;
                Ok(TerminalDemand {
                    terminal_id: entry.terminal_id.clone(),
                    site_idx,
                    share: entry.share,
                })
            })
            .collect::<Result<Vec<_>, TraceError>>()?;
        Ok(DemandSeries {
            sites: self.sites.clone(),
            counts: self.counts.clone(),
            packet_bits,
            terminals,
        })
    }
}

/// Standard normal draw helper kept free of extra dependencies.
fn rand_distr_standard_normal() -> impl rand::distributions::Distribution<f64> {
    struct BoxMuller;
    impl rand::distributions::Distribution<f64> for BoxMuller {
        fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }
    BoxMuller
}

fn infer_window(timestamps: &[i64]) -> Result<u32, TraceError> {
    if timestamps.len() < 2 {
        return Ok(NATIVE_WINDOW_S);
    }
    let step = timestamps[1] - timestamps[0];
    if step <= 0 {
        return Err(TraceError::NonPositiveStep(step));
    }
    for pair in timestamps.windows(2) {
        let other = pair[1] - pair[0];
        if other != step {
            return Err(TraceError::NonUniformGrid { first: step, other });
        }
    }
    Ok(step as u32)
}

/// Linear trend through window means, evaluated at fractional position `u`
/// within window `w`. Means are anchored at window centers; the edges clamp.
fn trend_at(means: &[f64], w: usize, u: f64) -> f64 {
    let here = means[w];
    let (other, frac) = if u < 0.5 {
        let prev = if w == 0 { here } else { means[w - 1] };
        (prev, 0.5 - u)
    } else {
        let next = if w + 1 == means.len() { here } else { means[w + 1] };
        (next, u - 0.5)
    };
    here + (other - here) * frac
}

/// Distributes integer `total` across `out` proportionally to `weights`,
/// flooring and then handing remaining units to the largest fractional parts.
fn apportion(weights: &[f64], total: u64, out: &mut [u64]) {
    debug_assert_eq!(weights.len(), out.len());
    if total == 0 {
        out.fill(0);
        return;
    }
    let sum: f64 = weights.iter().sum();
    let targets: Vec<f64> = if sum > 0.0 {
        weights.iter().map(|w| w / sum * total as f64).collect()
    } else {
        vec![total as f64 / out.len() as f64; out.len()]
    };
    let mut assigned = 0u64;
    for (slot, target) in out.iter_mut().zip(&targets) {
        *slot = target.floor() as u64;
        assigned += *slot;
    }
    let deficit = total.saturating_sub(assigned) as usize;
    if deficit == 0 {
        return;
    }
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = targets[a] - targets[a].floor();
        let fb = targets[b] - targets[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for k in 0..deficit {
        out[order[k % order.len()]] += 1;
    }
}

/// How one terminal draws on the trace: which site feeds it and what share of
/// that site's traffic it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalMapEntry {
    pub terminal_id: String,
    pub site_id: String,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct TerminalDemand {
    terminal_id: String,
    site_idx: usize,
    share: f64,
}

/// Per-terminal offered rates at one-second resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSeries {
    sites: Vec<String>,
    counts: Vec<Vec<u64>>,
    packet_bits: f64,
    terminals: Vec<TerminalDemand>,
}

impl DemandSeries {
    pub fn len_s(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn terminal_count(&self) -> usize {
        self.terminals.len()
    }

    pub fn terminal_ids(&self) -> impl Iterator<Item = &str> {
        self.terminals.iter().map(|t| t.terminal_id.as_str())
    }

    pub fn packet_bits(&self) -> f64 {
        self.packet_bits
    }

    /// Offered rate of one terminal at one second, bit/s.
    pub fn demand_bps(&self, terminal: usize, t: usize) -> f64 {
        let spec = &self.terminals[terminal];
        self.counts[spec.site_idx][t] as f64 * self.packet_bits * spec.share
    }

    /// Network demand at one second: the terminal demands summed in order.
    pub fn total_bps(&self, t: usize) -> f64 {
        (0..self.terminals.len())
            .map(|v| self.demand_bps(v, t))
            .sum()
    }

    /// Offered rate of one site at one second, ignoring shares, bit/s.
    pub fn site_rate_bps(&self, site: usize, t: usize) -> f64 {
        self.counts[site][t] as f64 * self.packet_bits
    }

    pub fn site_index(&self, id: &str) -> Option<usize> {
        self.sites.iter().position(|s| s == id)
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), TraceError> {
        let file = std::fs::File::create(path)?;
        self.write_to(file)
    }

    /// Writes rows `tick,terminal_id,bits_per_second`, terminals in map order
    /// within each tick.
    pub fn write_to<W: IoWrite>(&self, writer: W) -> Result<(), TraceError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["tick", "terminal_id", "bits_per_second"])?;
        for t in 0..self.len_s() {
            for (v, spec) in self.terminals.iter().enumerate() {
                wtr.write_record([
                    t.to_string(),
                    spec.terminal_id.clone(),
                    format!("{}", self.demand_bps(v, t)),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Hourly demand shape on working days, relative to the weekly peak.
const WEEKDAY_PROFILE: [f64; 24] = [
    0.20, 0.16, 0.13, 0.11, 0.10, 0.11, 0.14, 0.20, 0.28, 0.34, 0.38, 0.42, 0.46, 0.46, 0.44,
    0.46, 0.52, 0.62, 0.76, 0.88, 1.00, 0.96, 0.72, 0.40,
];

/// Hourly demand shape on weekends.
const WEEKEND_PROFILE: [f64; 24] = [
    0.24, 0.19, 0.15, 0.12, 0.11, 0.11, 0.13, 0.17, 0.26, 0.38, 0.48, 0.56, 0.60, 0.60, 0.58,
    0.56, 0.58, 0.66, 0.78, 0.90, 1.00, 0.98, 0.80, 0.48,
];

/// Builds one week of 900-second windows with a diurnal shape, starting on a
/// Monday midnight. `site_weights` splits the network total across sites and
/// `peak_bps` fixes the busy-hour network rate before jitter.
pub fn synthetic_week_trace(
    seed: u64,
    site_weights: &[(String, f64)],
    peak_bps: f64,
    packet_bits: f64,
) -> CountTrace {
    const WINDOWS: usize = 7 * 86_400 / NATIVE_WINDOW_S as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sigma = 0.04;
    let log_comp = -0.5 * sigma * sigma;

    let mut sites: Vec<String> = site_weights.iter().map(|(s, _)| s.clone()).collect();
    sites.sort_unstable();
    let mut counts = vec![vec![0u64; WINDOWS]; sites.len()];

    for w in 0..WINDOWS {
        let t = w as u64 * u64::from(NATIVE_WINDOW_S);
        let day = (t / 86_400) as usize;
        let hour = (t % 86_400 / 3_600) as usize;
        let shape = if day < 5 {
            WEEKDAY_PROFILE[hour]
        } else {
            WEEKEND_PROFILE[hour]
        };
        let total_rate = peak_bps * shape;
        for (site, weight) in site_weights {
            let s = sites.binary_search(site).expect("site present");
            let z: f64 = rng.sample(rand_distr_standard_normal());
            let jitter = (sigma * z + log_comp).exp();
            let packets =
                total_rate * weight / packet_bits * f64::from(NATIVE_WINDOW_S) * jitter;
            counts[s][w] = packets.round().max(0.0) as u64;
        }
    }

    CountTrace {
        window_s: NATIVE_WINDOW_S,
        start_ts: 0,
        sites,
        counts,
    }
}
