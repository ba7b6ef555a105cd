//! Resource-block counts per numerology and channel bandwidth.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{BandKind, DomainError};

/// One row of the bandwidth configuration table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumerologyEntry {
    pub numerology: u8,
    pub bandwidth_hz: f64,
    pub rb_count: u32,
}

impl NumerologyEntry {
    pub fn band_kind(&self) -> BandKind {
        if self.numerology <= 2 {
            BandKind::MidBand
        } else {
            BandKind::MmWave
        }
    }
}

/// Maximum transmission-bandwidth configurations, keyed by numerology and
/// channel bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumerologyTable {
    entries: Vec<NumerologyEntry>,
}

/// (numerology, bandwidth MHz, resource blocks). Sub-7 GHz rows cover 15 to
/// 60 kHz spacing; the remainder covers 120 kHz upward, including the wideband
/// extension with 240 and 480 kHz spacing.
const STANDARD_ROWS: &[(u8, f64, u32)] = &[
    (0, 5.0, 25),
    (0, 10.0, 52),
    (0, 15.0, 79),
    (0, 20.0, 106),
    (0, 25.0, 133),
    (0, 30.0, 160),
    (0, 40.0, 216),
    (0, 50.0, 270),
    (1, 5.0, 11),
    (1, 10.0, 24),
    (1, 15.0, 38),
    (1, 20.0, 51),
    (1, 25.0, 65),
    (1, 30.0, 78),
    (1, 40.0, 106),
    (1, 50.0, 133),
    (1, 60.0, 162),
    (1, 70.0, 189),
    (1, 80.0, 217),
    (1, 90.0, 245),
    (1, 100.0, 273),
    (2, 10.0, 11),
    (2, 15.0, 18),
    (2, 20.0, 24),
    (2, 25.0, 31),
    (2, 30.0, 38),
    (2, 40.0, 51),
    (2, 50.0, 65),
    (2, 60.0, 79),
    (2, 70.0, 93),
    (2, 80.0, 107),
    (2, 90.0, 121),
    (2, 100.0, 135),
    (3, 50.0, 32),
    (3, 100.0, 66),
    (3, 200.0, 132),
    (3, 400.0, 264),
    (4, 100.0, 32),
    (4, 200.0, 66),
    (4, 400.0, 132),
    (4, 800.0, 264),
    (4, 1600.0, 528),
    (5, 400.0, 66),
    (5, 800.0, 132),
    (5, 1600.0, 264),
];

static STANDARD: OnceLock<NumerologyTable> = OnceLock::new();

impl NumerologyTable {
    /// The built-in table.
    pub fn standard() -> &'static NumerologyTable {
        STANDARD.get_or_init(|| {
            let entries = STANDARD_ROWS
                .iter()
                .map(|&(numerology, mhz, rb_count)| NumerologyEntry {
                    numerology,
                    bandwidth_hz: mhz * 1e6,
                    rb_count,
                })
                .collect();
            NumerologyTable { entries }
        })
    }

    pub fn entries(&self) -> &[NumerologyEntry] {
        &self.entries
    }

    /// Resource blocks for a (numerology, bandwidth) pair. Unknown pairs are an
    /// error rather than an interpolation.
    pub fn lookup(&self, numerology: u8, bandwidth_hz: f64) -> Result<u32, DomainError> {
        self.entries
            .iter()
            .find(|e| e.numerology == numerology && (e.bandwidth_hz - bandwidth_hz).abs() < 0.5)
            .map(|e| e.rb_count)
            .ok_or(DomainError::UnknownNumerology {
                numerology,
                bandwidth_hz,
            })
    }

    /// Entries usable on one band, sorted by resource-block count then numerology.
    pub fn options_for(&self, band: BandKind) -> Vec<NumerologyEntry> {
        let mut opts: Vec<NumerologyEntry> = self
            .entries
            .iter()
            .copied()
            .filter(|e| e.band_kind() == band)
            .collect();
        opts.sort_by(|a, b| {
            (a.rb_count, a.numerology, a.bandwidth_hz as u64)
                .cmp(&(b.rb_count, b.numerology, b.bandwidth_hz as u64))
        });
        opts
    }

    /// Lowest numerology paired with its widest bandwidth on the band. Used as
    /// the allocator's starting configuration.
    pub fn initial_for(&self, band: BandKind) -> NumerologyEntry {
        let opts = self.options_for(band);
        let min_mu = opts.iter().map(|e| e.numerology).min().expect("non-empty band");
        *opts
            .iter()
            .filter(|e| e.numerology == min_mu)
            .max_by(|a, b| a.bandwidth_hz.partial_cmp(&b.bandwidth_hz).unwrap())
            .expect("non-empty numerology")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_entries_present() {
        let t = NumerologyTable::standard();
        assert_eq!(t.lookup(3, 400e6).unwrap(), 264);
        assert_eq!(t.lookup(1, 100e6).unwrap(), 273);
    }

    #[test]
    fn unknown_pair_is_an_error() {
        let t = NumerologyTable::standard();
        assert!(t.lookup(9, 400e6).is_err());
        assert!(t.lookup(0, 400e6).is_err());
    }

    #[test]
    fn rb_count_monotone_in_bandwidth_per_numerology() {
        let t = NumerologyTable::standard();
        for mu in 0..=5u8 {
            let mut rows: Vec<_> = t
                .entries()
                .iter()
                .filter(|e| e.numerology == mu)
                .collect();
            rows.sort_by(|a, b| a.bandwidth_hz.partial_cmp(&b.bandwidth_hz).unwrap());
            for pair in rows.windows(2) {
                assert!(
                    pair[1].rb_count > pair[0].rb_count,
                    "rb count must grow with bandwidth at numerology {mu}"
                );
            }
        }
    }

    #[test]
    fn no_duplicate_keys() {
        let t = NumerologyTable::standard();
        for (i, a) in t.entries().iter().enumerate() {
            for b in &t.entries()[i + 1..] {
                assert!(
                    a.numerology != b.numerology || (a.bandwidth_hz - b.bandwidth_hz).abs() > 0.5
                );
            }
        }
    }

    #[test]
    fn initial_config_is_min_numerology_max_bandwidth() {
        let t = NumerologyTable::standard();
        let mid = t.initial_for(BandKind::MidBand);
        assert_eq!((mid.numerology, mid.rb_count), (0, 270));
        let mm = t.initial_for(BandKind::MmWave);
        assert_eq!((mm.numerology, mm.rb_count), (3, 264));
    }

    #[test]
    fn band_options_sorted_by_rb_count() {
        let t = NumerologyTable::standard();
        for band in [BandKind::MidBand, BandKind::MmWave] {
            let opts = t.options_for(band);
            assert!(!opts.is_empty());
            for pair in opts.windows(2) {
                assert!(pair[0].rb_count <= pair[1].rb_count);
            }
        }
    }
}
