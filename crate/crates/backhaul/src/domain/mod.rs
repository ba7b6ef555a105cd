//! Shared vocabulary types: radios, nodes, terminals, carrier settings, metrics.

mod mcs;
mod numerology;
mod scenario;

pub use mcs::{McsEntry, McsTable, MID_TABLE_MCS_INDEX};
pub use numerology::{NumerologyEntry, NumerologyTable};
pub use scenario::{load_scenario, load_scenario_str, Scenario, ScenarioError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = String;
pub type RadioId = String;
pub type DuId = String;
pub type TerminalId = String;
pub type SiteId = String;

/// Problems with domain values that are not tied to scenario file parsing.
#[derive(Debug, Error)]
pub enum DomainError {
    #[error("no resource-block entry for numerology {numerology} at {bandwidth_hz} Hz")]
    UnknownNumerology { numerology: u8, bandwidth_hz: f64 },
    #[error("invalid carrier parameters: {0}")]
    InvalidCarrier(String),
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("invalid power profile: {0}")]
    InvalidProfile(String),
}

/// Power sub-state of one microwave radio.
///
/// `CompletelyOff` and `DeepSleep` are physically off; the other three draw
/// startup, wake-up, or serving power respectively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadioState {
    CompletelyOff,
    DeepSleep,
    Startup,
    WakeUp,
    Serving,
}

impl RadioState {
    pub const ALL: [RadioState; 5] = [
        RadioState::CompletelyOff,
        RadioState::DeepSleep,
        RadioState::Startup,
        RadioState::WakeUp,
        RadioState::Serving,
    ];

    /// Position of the state inside [`RadioState::ALL`].
    pub fn index(self) -> usize {
        match self {
            RadioState::CompletelyOff => 0,
            RadioState::DeepSleep => 1,
            RadioState::Startup => 2,
            RadioState::WakeUp => 3,
            RadioState::Serving => 4,
        }
    }

    /// True for states that draw more than sleep power (startup, wake-up, serving).
    pub fn is_on(self) -> bool {
        matches!(
            self,
            RadioState::Startup | RadioState::WakeUp | RadioState::Serving
        )
    }

    pub fn is_off(self) -> bool {
        !self.is_on()
    }

    pub fn name(self) -> &'static str {
        match self {
            RadioState::CompletelyOff => "completely_off",
            RadioState::DeepSleep => "deep_sleep",
            RadioState::Startup => "startup",
            RadioState::WakeUp => "wake_up",
            RadioState::Serving => "serving",
        }
    }
}

/// Electrical draw of a radio in each sub-state, in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub completely_off_w: f64,
    pub deep_sleep_w: f64,
    pub startup_w: f64,
    pub wake_up_w: f64,
    pub serving_w: f64,
}

impl PowerProfile {
    pub fn for_state(&self, state: RadioState) -> f64 {
        match state {
            RadioState::CompletelyOff => self.completely_off_w,
            RadioState::DeepSleep => self.deep_sleep_w,
            RadioState::Startup => self.startup_w,
            RadioState::WakeUp => self.wake_up_w,
            RadioState::Serving => self.serving_w,
        }
    }

    /// Checks the ordering 0 = off < sleep < serving and non-negative transients.
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.completely_off_w != 0.0 {
            return Err(DomainError::InvalidProfile(
                "completely-off draw must be exactly 0 W".into(),
            ));
        }
        if !(self.deep_sleep_w > 0.0 && self.deep_sleep_w < self.serving_w) {
            return Err(DomainError::InvalidProfile(
                "need 0 < deep sleep draw < serving draw".into(),
            ));
        }
        if self.startup_w < 0.0 || self.wake_up_w < 0.0 {
            return Err(DomainError::InvalidProfile(
                "transient draws must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// One microwave radio chain with its link parameters and live state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadioUnit {
    pub id: RadioId,
    /// Carrier frequency in Hz.
    pub band_hz: f64,
    /// Channel bandwidth in Hz.
    pub bandwidth_hz: f64,
    pub profile: PowerProfile,
    /// Transmit power while serving, in watts.
    pub tx_power_w: f64,
    /// Regulatory cap on transmit power, in watts.
    pub tx_power_cap_w: f64,
    /// Time a startup takes before the radio can serve, in seconds.
    pub startup_s: f64,
    /// Time a wake-up from deep sleep takes, in seconds.
    pub wakeup_s: f64,
    pub state: RadioState,
    /// Seconds spent in the current state.
    pub time_in_state_s: f64,
    /// Consecutive seconds in deep sleep without a wake request.
    pub idle_sleep_s: f64,
    /// Link rate while serving, in bit/s. Derived from the link budget at load.
    pub serving_rate_bps: f64,
}

impl RadioUnit {
    pub fn power_w(&self) -> f64 {
        self.profile.for_state(self.state)
    }

    /// Consecutive unused deep-sleep time expressed in days.
    pub fn idle_days(&self) -> f64 {
        self.idle_sleep_s / 86_400.0
    }

    /// Capacity contributed to the link right now: the serving rate when serving,
    /// zero in any other state.
    pub fn active_rate_bps(&self) -> f64 {
        if self.state == RadioState::Serving {
            self.serving_rate_bps
        } else {
            0.0
        }
    }
}

/// Hysteresis thresholds and periods steering one node's radio policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyThresholds {
    /// Surplus capacity required before a radio may enter deep sleep, bit/s.
    pub sleep_threshold_bps: f64,
    /// Remaining headroom below which a sleeping radio is woken, bit/s.
    pub wake_threshold_bps: f64,
    /// Unused deep-sleep time after which a radio is switched completely off, seconds.
    pub completely_off_period_s: f64,
    /// Interval between resource-block budget updates, milliseconds.
    pub rb_update_period_ms: f64,
}

impl PolicyThresholds {
    pub fn validate(&self) -> Result<(), DomainError> {
        let all_positive = self.sleep_threshold_bps > 0.0
            && self.wake_threshold_bps > 0.0
            && self.completely_off_period_s > 0.0
            && self.rb_update_period_ms > 0.0;
        if !all_positive {
            return Err(DomainError::InvalidThresholds(
                "thresholds and periods must be strictly positive".into(),
            ));
        }
        if self.wake_threshold_bps > self.sleep_threshold_bps {
            return Err(DomainError::InvalidThresholds(format!(
                "wake threshold {} exceeds sleep threshold {}, hysteresis would invert",
                self.wake_threshold_bps, self.sleep_threshold_bps
            )));
        }
        Ok(())
    }
}

/// A site with one or more microwave radios pointed at a fixed neighbor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MicrowaveNode {
    pub id: NodeId,
    pub radios: Vec<RadioUnit>,
    /// Node on the far end that mirrors this node's radio states, if any.
    pub downstream: Option<NodeId>,
    /// Hop length to the neighbor, meters.
    pub link_distance_m: f64,
    pub thresholds: PolicyThresholds,
}

impl MicrowaveNode {
    /// Sum of serving-state link rates, bit/s.
    pub fn serving_capacity_bps(&self) -> f64 {
        self.radios.iter().map(|r| r.active_rate_bps()).sum()
    }

    /// Capacity of radios currently starting or waking, bit/s. Not usable yet,
    /// but already committed, so the controller must not double-book it.
    pub fn pending_capacity_bps(&self) -> f64 {
        self.radios
            .iter()
            .filter(|r| matches!(r.state, RadioState::Startup | RadioState::WakeUp))
            .map(|r| r.serving_rate_bps)
            .sum()
    }

    pub fn on_count(&self) -> usize {
        self.radios.iter().filter(|r| r.state.is_on()).count()
    }

    pub fn states(&self) -> Vec<RadioState> {
        self.radios.iter().map(|r| r.state).collect()
    }

    pub fn power_w(&self) -> f64 {
        self.radios.iter().map(|r| r.power_w()).sum()
    }
}

/// Which access band a terminal can currently use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvailabilityState {
    BothAvailable,
    MidOnly,
}

/// Availability of the millimeter-wave band at a terminal's location.
///
/// `phi` is the probability that both bands are usable; `state` is the current
/// realization. Scenarios with `phi` of exactly 0 or 1 are static.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandAvailability {
    pub phi: f64,
    pub state: AvailabilityState,
}

impl BandAvailability {
    pub fn fixed(state: AvailabilityState) -> Self {
        let phi = match state {
            AvailabilityState::BothAvailable => 1.0,
            AvailabilityState::MidOnly => 0.0,
        };
        BandAvailability { phi, state }
    }

    /// Redraws the current state from `phi`.
    pub fn resample<R: rand::Rng>(&mut self, rng: &mut R) {
        self.state = if rng.gen::<f64>() < self.phi {
            AvailabilityState::BothAvailable
        } else {
            AvailabilityState::MidOnly
        };
    }
}

/// Frequency range a downlink carrier belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    MidBand,
    MmWave,
}

impl BandKind {
    /// Classifies a carrier frequency by the 7.125 GHz range boundary.
    pub fn from_carrier_hz(carrier_hz: f64) -> BandKind {
        if carrier_hz < 7.125e9 {
            BandKind::MidBand
        } else {
            BandKind::MmWave
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BandKind::MidBand => "mid",
            BandKind::MmWave => "mmwave",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    Cpe,
    IabMt,
}

/// A served endpoint: either customer premises equipment or the mobile
/// termination of a relay station.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Terminal {
    pub id: TerminalId,
    pub kind: TerminalKind,
    pub parent_du: DuId,
    pub distance_m: f64,
    pub band: BandAvailability,
    /// Per resource block noise power at the receiver, watts.
    pub noise_power_w: f64,
    /// Starting per resource block transmit power, watts. Derived at load when
    /// the scenario leaves it out.
    pub initial_rb_power_w: f64,
    /// Trace site this terminal draws demand from.
    pub site: SiteId,
    /// Fraction of the site's traffic attributed to this terminal.
    pub share: f64,
    /// Fallback demand when no trace is attached, bit/s.
    pub nominal_demand_bps: f64,
    /// Squared channel gain toward the parent station per band, derived at load.
    pub gain_mm: f64,
    pub gain_mid: f64,
}

impl Terminal {
    pub fn gain_for(&self, band: BandKind) -> f64 {
        match band {
            BandKind::MmWave => self.gain_mm,
            BandKind::MidBand => self.gain_mid,
        }
    }
}

/// Carrier-level constants used by the rate and sizing formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarrierParams {
    /// Number of aggregated component carriers.
    pub num_carriers: u32,
    /// Spatial layers per carrier.
    pub layers: u32,
    /// Reference modulation order (bits per symbol) for capacity sizing.
    pub modulation_order: f64,
    /// Scaling factor in (0, 1].
    pub scaling: f64,
    /// Peak code rate.
    pub max_code_rate: f64,
    /// Overhead fraction in [0, 1).
    pub overhead: f64,
    /// Subcarrier-spacing exponent; spacing is 15 kHz times 2^numerology.
    pub numerology: u8,
}

impl CarrierParams {
    /// OFDM symbol duration in seconds for the configured numerology.
    pub fn symbol_duration_s(&self) -> f64 {
        1e-3 / (14.0 * f64::from(1u32 << self.numerology))
    }

    /// Subcarrier spacing in Hz.
    pub fn scs_hz(&self) -> f64 {
        15e3 * f64::from(1u32 << self.numerology)
    }

    /// Bandwidth of one resource block (12 subcarriers), Hz.
    pub fn rb_bandwidth_hz(&self) -> f64 {
        12.0 * self.scs_hz()
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.num_carriers == 0 || self.layers == 0 {
            return Err(DomainError::InvalidCarrier(
                "carrier and layer counts must be at least 1".into(),
            ));
        }
        if !(self.scaling > 0.0 && self.scaling <= 1.0) {
            return Err(DomainError::InvalidCarrier("scaling must be in (0, 1]".into()));
        }
        if !(self.overhead >= 0.0 && self.overhead < 1.0) {
            return Err(DomainError::InvalidCarrier("overhead must be in [0, 1)".into()));
        }
        if self.modulation_order <= 0.0 || self.max_code_rate <= 0.0 || self.max_code_rate > 1.0 {
            return Err(DomainError::InvalidCarrier(
                "modulation order and code rate must be positive, code rate at most 1".into(),
            ));
        }
        if self.numerology > 6 {
            return Err(DomainError::InvalidCarrier(format!(
                "numerology {} out of range",
                self.numerology
            )));
        }
        Ok(())
    }

    /// Same constants with a different numerology.
    pub fn with_numerology(mut self, numerology: u8) -> Self {
        self.numerology = numerology;
        self
    }
}

/// One tick of simulator output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub tick: u64,
    pub demand_bps: f64,
    pub delivered_bps: f64,
    pub microwave_power_w: f64,
    pub iab_power_w: f64,
    /// Draw per microwave node, ordered as in the scenario.
    pub node_power_w: Vec<f64>,
    /// Draw per access station, ordered as in the scenario.
    pub du_power_w: Vec<f64>,
    /// Delivered bits per joule this tick; absent while total power is zero.
    pub energy_efficiency: Option<f64>,
    pub satisfied: bool,
}
