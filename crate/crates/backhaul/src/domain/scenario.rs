//! Scenario files: the TOML schema, validation, and resolution of derived
//! quantities (link rates, channel gains, default thresholds and powers).
//!
//! The raw file shape is kept verbatim inside [`Scenario`] so a loaded
//! scenario can be serialized back to an equivalent file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    AvailabilityState, BandAvailability, BandKind, CarrierParams, DomainError, DuId,
    McsTable, MicrowaveNode, NumerologyTable, PolicyThresholds, PowerProfile, RadioState,
    RadioUnit, SiteId, Terminal, TerminalKind, MID_TABLE_MCS_INDEX,
};
use crate::phy::{self, LinkBudget};

/// Scenario shipped with the crate; loads without any external file.
pub const BUNDLED_RURAL_MONTREAL: &str = include_str!("../../scenarios/rural_montreal.toml");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{kind} {id} references unknown {referenced}")]
    DanglingReference {
        kind: &'static str,
        id: String,
        referenced: String,
    },
    #[error("node {0} must have at least one radio")]
    NodeWithoutRadios(String),
    #[error("link {upstream} -> {downstream} joins nodes with {up_count} and {down_count} radios")]
    MismatchedLink {
        upstream: String,
        downstream: String,
        up_count: usize,
        down_count: usize,
    },
    #[error("invalid scenario value: {0}")]
    Invalid(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Phy(#[from] phy::PhyError),
}

fn default_packet_bits() -> f64 {
    12_000.0
}

fn default_peak_bps() -> f64 {
    8.8e9
}

fn default_one() -> f64 {
    1.0
}

fn default_num_carriers() -> u32 {
    1
}

fn default_layers() -> u32 {
    4
}

fn default_modulation_order() -> f64 {
    8.0
}

fn default_max_code_rate() -> f64 {
    948.0 / 1024.0
}

fn default_overhead_mid() -> f64 {
    0.14
}

fn default_overhead_mm() -> f64 {
    0.18
}

fn default_mid_carrier_hz() -> f64 {
    6.0e9
}

fn default_mm_carrier_hz() -> f64 {
    38.0e9
}

fn default_noise_density() -> f64 {
    2.0e-20
}

fn default_du_gain_mid() -> f64 {
    17.0
}

fn default_du_gain_mm() -> f64 {
    24.0
}

fn default_cpe_gain() -> f64 {
    10.0
}

fn default_mt_gain() -> f64 {
    24.0
}

fn default_off_period() -> f64 {
    604_800.0
}

fn default_rb_period_ms() -> f64 {
    1_000.0
}

fn default_startup_s() -> f64 {
    60.0
}

fn default_wakeup_s() -> f64 {
    10.0
}

fn default_du_power_cap() -> f64 {
    40.0
}

fn default_state() -> RadioState {
    RadioState::Serving
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default = "default_packet_bits")]
    packet_size_bits: f64,
    #[serde(default = "default_peak_bps")]
    synthetic_peak_bps: f64,
    #[serde(default)]
    thresholds: RawThresholds,
    #[serde(default)]
    carrier: RawCarrier,
    nodes: Vec<RawNode>,
    radios: Vec<RawRadio>,
    dus: Vec<RawDu>,
    terminals: Vec<RawTerminal>,
    sites: Vec<RawSite>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThresholds {
    /// Omitted: the smallest radio serving rate in the scenario.
    sleep_threshold_bps: Option<f64>,
    /// Omitted: a tenth of the derived sleep threshold.
    wake_threshold_bps: Option<f64>,
    #[serde(default = "default_off_period")]
    completely_off_period_s: f64,
    #[serde(default = "default_rb_period_ms")]
    rb_update_period_ms: f64,
}

impl Default for RawThresholds {
    fn default() -> Self {
        toml::from_str("").expect("all threshold fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCarrier {
    #[serde(default = "default_num_carriers")]
    num_carriers: u32,
    #[serde(default = "default_layers")]
    layers: u32,
    #[serde(default = "default_modulation_order")]
    modulation_order: f64,
    #[serde(default = "default_one")]
    scaling: f64,
    #[serde(default = "default_max_code_rate")]
    max_code_rate: f64,
    #[serde(default = "default_overhead_mid")]
    overhead_mid: f64,
    #[serde(default = "default_overhead_mm")]
    overhead_mm: f64,
    #[serde(default = "default_mid_carrier_hz")]
    mid_carrier_hz: f64,
    #[serde(default = "default_mm_carrier_hz")]
    mm_carrier_hz: f64,
    #[serde(default = "default_noise_density")]
    noise_density_w_per_hz: f64,
    #[serde(default = "default_du_gain_mid")]
    du_gain_mid_dbi: f64,
    #[serde(default = "default_du_gain_mm")]
    du_gain_mm_dbi: f64,
    #[serde(default = "default_cpe_gain")]
    cpe_gain_dbi: f64,
    #[serde(default = "default_mt_gain")]
    mt_gain_dbi: f64,
}

impl Default for RawCarrier {
    fn default() -> Self {
        toml::from_str("").expect("all carrier fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    downstream: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    link_distance_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRadio {
    node: String,
    id: String,
    band_hz: f64,
    bandwidth_hz: f64,
    tx_power_w: f64,
    tx_power_cap_w: f64,
    antenna_gain_dbi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_power_w: Option<f64>,
    #[serde(default = "default_startup_s")]
    startup_s: f64,
    #[serde(default = "default_wakeup_s")]
    wakeup_s: f64,
    #[serde(default = "default_state")]
    initial_state: RadioState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    completely_off_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    deep_sleep_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    startup_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wake_up_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    serving_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDu {
    id: String,
    #[serde(default = "default_du_power_cap")]
    power_cap_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerminal {
    id: String,
    kind: TerminalKind,
    parent_du: String,
    distance_m: f64,
    site: String,
    share: f64,
    phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    antenna_gain_dbi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_rb_power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nominal_demand_bps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSite {
    id: String,
    weight: f64,
}

/// One access band's carrier constants at its initial configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessBandSpec {
    pub kind: BandKind,
    pub carrier_hz: f64,
    /// Carrier constants at the band's initial numerology.
    pub params: CarrierParams,
    /// Resource blocks of the initial (minimum numerology, maximum bandwidth)
    /// configuration.
    pub initial_budget: u32,
    /// Resource-block bandwidth the per-terminal noise figures refer to, Hz.
    pub reference_rb_bandwidth_hz: f64,
    pub du_antenna_gain_dbi: f64,
}

/// One access station and the terminals it serves.
#[derive(Debug, Clone, PartialEq)]
pub struct DuSpec {
    pub id: DuId,
    pub power_cap_w: f64,
    pub terminals: Vec<Terminal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteSpec {
    pub id: SiteId,
    pub weight: f64,
}

/// A fully resolved deployment: validated, with derived rates and defaults
/// filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub packet_size_bits: f64,
    /// Busy-hour network rate used when generating a synthetic trace, bit/s.
    pub synthetic_peak_bps: f64,
    pub nodes: Vec<MicrowaveNode>,
    pub dus: Vec<DuSpec>,
    pub sites: Vec<SiteSpec>,
    pub thresholds: PolicyThresholds,
    pub mid_band: AccessBandSpec,
    pub mm_band: AccessBandSpec,
    raw: RawScenario,
}

impl Scenario {
    /// Serializes the scenario back to its file form.
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(&self.raw).expect("raw scenario serializes")
    }

    pub fn terminals(&self) -> impl Iterator<Item = &Terminal> {
        self.dus.iter().flat_map(|d| d.terminals.iter())
    }

    /// Index of the node that no other node lists as its downstream.
    pub fn controller_index(&self) -> usize {
        let targets: Vec<&str> = self
            .nodes
            .iter()
            .filter_map(|n| n.downstream.as_deref())
            .collect();
        self.nodes
            .iter()
            .position(|n| !targets.contains(&n.id.as_str()))
            .unwrap_or(0)
    }

    /// Node indices from the controller down the sync chain.
    pub fn node_order(&self) -> Vec<usize> {
        let mut order = vec![self.controller_index()];
        loop {
            let last = &self.nodes[*order.last().unwrap()];
            match last
                .downstream
                .as_ref()
                .and_then(|id| self.nodes.iter().position(|n| &n.id == id))
            {
                Some(next) if !order.contains(&next) => order.push(next),
                _ => break,
            }
        }
        order
    }

    /// Backhaul capacity with every radio serving: the tightest hop wins.
    pub fn all_on_capacity_bps(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.radios.iter().map(|r| r.serving_rate_bps).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn site_weights(&self) -> Vec<(SiteId, f64)> {
        self.sites.iter().map(|s| (s.id.clone(), s.weight)).collect()
    }
}

pub fn load_scenario<P: AsRef<Path>>(path: P) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    load_scenario_str(&text)
}

pub fn load_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(text)?;
    resolve(raw)
}

fn band_params(carrier: &RawCarrier, kind: BandKind, numerology: u8) -> CarrierParams {
    CarrierParams {
        num_carriers: carrier.num_carriers,
        layers: carrier.layers,
        modulation_order: carrier.modulation_order,
        scaling: carrier.scaling,
        max_code_rate: carrier.max_code_rate,
        overhead: match kind {
            BandKind::MidBand => carrier.overhead_mid,
            BandKind::MmWave => carrier.overhead_mm,
        },
        numerology,
    }
}

fn resolve(raw: RawScenario) -> Result<Scenario, ScenarioError> {
    if raw.nodes.is_empty() {
        return Err(ScenarioError::Invalid("scenario has no nodes".into()));
    }
    if raw.packet_size_bits <= 0.0 {
        return Err(ScenarioError::Invalid("packet size must be positive".into()));
    }

    let table = NumerologyTable::standard();
    let mid_init = table.initial_for(BandKind::MidBand);
    let mm_init = table.initial_for(BandKind::MmWave);
    let mid_params = band_params(&raw.carrier, BandKind::MidBand, mid_init.numerology);
    let mm_params = band_params(&raw.carrier, BandKind::MmWave, mm_init.numerology);
    mid_params.validate()?;
    mm_params.validate()?;
    let mid_band = AccessBandSpec {
        kind: BandKind::MidBand,
        carrier_hz: raw.carrier.mid_carrier_hz,
        params: mid_params,
        initial_budget: mid_init.rb_count,
        reference_rb_bandwidth_hz: mid_params.rb_bandwidth_hz(),
        du_antenna_gain_dbi: raw.carrier.du_gain_mid_dbi,
    };
    let mm_band = AccessBandSpec {
        kind: BandKind::MmWave,
        carrier_hz: raw.carrier.mm_carrier_hz,
        params: mm_params,
        initial_budget: mm_init.rb_count,
        reference_rb_bandwidth_hz: mm_params.rb_bandwidth_hz(),
        du_antenna_gain_dbi: raw.carrier.du_gain_mm_dbi,
    };
    if BandKind::from_carrier_hz(raw.carrier.mid_carrier_hz) != BandKind::MidBand
        || BandKind::from_carrier_hz(raw.carrier.mm_carrier_hz) != BandKind::MmWave
    {
        return Err(ScenarioError::Invalid(
            "access carriers must sit on their own side of the 7.125 GHz boundary".into(),
        ));
    }

    // Link distances: a node that owns a link shares its length with the far
    // end unless the far end sets its own.
    let mut distances: Vec<Option<f64>> = raw.nodes.iter().map(|n| n.link_distance_m).collect();
    for (i, node) in raw.nodes.iter().enumerate() {
        if let Some(down) = &node.downstream {
            let j = raw
                .nodes
                .iter()
                .position(|n| &n.id == down)
                .ok_or_else(|| ScenarioError::DanglingReference {
                    kind: "node",
                    id: node.id.clone(),
                    referenced: down.clone(),
                })?;
            if j == i {
                return Err(ScenarioError::Invalid(format!(
                    "node {} lists itself as downstream",
                    node.id
                )));
            }
            let d = distances[i].ok_or_else(|| {
                ScenarioError::Invalid(format!(
                    "node {} owns a link but has no link_distance_m",
                    node.id
                ))
            })?;
            if d <= 0.0 {
                return Err(ScenarioError::Invalid(format!(
                    "link distance on {} must be positive",
                    node.id
                )));
            }
            distances[j].get_or_insert(d);
        }
    }

    let mut nodes = Vec::with_capacity(raw.nodes.len());
    for (i, node) in raw.nodes.iter().enumerate() {
        let rows: Vec<&RawRadio> = raw.radios.iter().filter(|r| r.node == node.id).collect();
        if rows.is_empty() {
            return Err(ScenarioError::NodeWithoutRadios(node.id.clone()));
        }
        let distance = distances[i].ok_or_else(|| {
            ScenarioError::Invalid(format!("node {} is not part of any link", node.id))
        })?;
        let mut radios = Vec::with_capacity(rows.len());
        for row in rows {
            let profile = PowerProfile {
                completely_off_w: row.completely_off_w.unwrap_or(0.0),
                deep_sleep_w: row.deep_sleep_w.unwrap_or(3.0),
                startup_w: row.startup_w.unwrap_or(55.0),
                wake_up_w: row.wake_up_w.unwrap_or(50.0),
                serving_w: row.serving_w.unwrap_or(80.0),
            };
            profile.validate()?;
            if row.bandwidth_hz <= 0.0 || row.band_hz <= 0.0 {
                return Err(ScenarioError::Invalid(format!(
                    "radio {} needs positive band and bandwidth",
                    row.id
                )));
            }
            if row.startup_s <= 0.0 || row.wakeup_s <= 0.0 {
                return Err(ScenarioError::Invalid(format!(
                    "radio {} timers must be positive",
                    row.id
                )));
            }
            if row.tx_power_w <= 0.0 || row.tx_power_w > row.tx_power_cap_w {
                return Err(ScenarioError::Invalid(format!(
                    "radio {} transmit power must be positive and within its cap",
                    row.id
                )));
            }
            let noise = row
                .noise_power_w
                .unwrap_or(raw.carrier.noise_density_w_per_hz * row.bandwidth_hz);
            let gain = phy::channel_gain(
                distance,
                row.band_hz,
                row.antenna_gain_dbi,
                row.antenna_gain_dbi,
            )?;
            let snr = phy::snr(&LinkBudget {
                gain_sq: gain,
                tx_power_w: row.tx_power_w,
                noise_power_w: noise,
            })?;
            let serving_rate_bps = phy::shannon_rate(row.bandwidth_hz, snr);
            radios.push(RadioUnit {
                id: row.id.clone(),
                band_hz: row.band_hz,
                bandwidth_hz: row.bandwidth_hz,
                profile,
                tx_power_w: row.tx_power_w,
                tx_power_cap_w: row.tx_power_cap_w,
                startup_s: row.startup_s,
                wakeup_s: row.wakeup_s,
                state: row.initial_state,
                time_in_state_s: 0.0,
                idle_sleep_s: 0.0,
                serving_rate_bps,
            });
        }
        nodes.push(MicrowaveNode {
            id: node.id.clone(),
            radios,
            downstream: node.downstream.clone(),
            link_distance_m: distance,
            thresholds: PolicyThresholds {
                sleep_threshold_bps: 0.0,
                wake_threshold_bps: 0.0,
                completely_off_period_s: raw.thresholds.completely_off_period_s,
                rb_update_period_ms: raw.thresholds.rb_update_period_ms,
            },
        });
    }

    for node in &nodes {
        if let Some(down) = &node.downstream {
            let peer = nodes.iter().find(|n| &n.id == down).expect("checked above");
            if peer.radios.len() != node.radios.len() {
                return Err(ScenarioError::MismatchedLink {
                    upstream: node.id.clone(),
                    downstream: peer.id.clone(),
                    up_count: node.radios.len(),
                    down_count: peer.radios.len(),
                });
            }
        }
    }

    let min_rate = nodes
        .iter()
        .flat_map(|n| n.radios.iter())
        .map(|r| r.serving_rate_bps)
        .fold(f64::INFINITY, f64::min);
    let sleep = raw.thresholds.sleep_threshold_bps.unwrap_or(min_rate);
    let thresholds = PolicyThresholds {
        sleep_threshold_bps: sleep,
        wake_threshold_bps: raw.thresholds.wake_threshold_bps.unwrap_or(0.1 * sleep),
        completely_off_period_s: raw.thresholds.completely_off_period_s,
        rb_update_period_ms: raw.thresholds.rb_update_period_ms,
    };
    thresholds.validate()?;
    for node in &mut nodes {
        node.thresholds = thresholds;
    }

    if raw.sites.is_empty() {
        return Err(ScenarioError::Invalid("scenario lists no sites".into()));
    }
    for site in &raw.sites {
        if site.weight <= 0.0 {
            return Err(ScenarioError::Invalid(format!(
                "site {} weight must be positive",
                site.id
            )));
        }
    }

    let mcs = McsTable::standard();
    let mid_snr = mcs
        .get(MID_TABLE_MCS_INDEX)
        .expect("mid table index exists")
        .snr_threshold;
    let mut dus: Vec<DuSpec> = raw
        .dus
        .iter()
        .map(|d| {
            if d.power_cap_w <= 0.0 {
                return Err(ScenarioError::Invalid(format!(
                    "station {} power cap must be positive",
                    d.id
                )));
            }
            Ok(DuSpec {
                id: d.id.clone(),
                power_cap_w: d.power_cap_w,
                terminals: Vec::new(),
            })
        })
        .collect::<Result<_, _>>()?;

    for t in &raw.terminals {
        let du = dus
            .iter_mut()
            .find(|d| d.id == t.parent_du)
            .ok_or_else(|| ScenarioError::DanglingReference {
                kind: "terminal",
                id: t.id.clone(),
                referenced: t.parent_du.clone(),
            })?;
        if !raw.sites.iter().any(|s| s.id == t.site) {
            return Err(ScenarioError::DanglingReference {
                kind: "terminal",
                id: t.id.clone(),
                referenced: t.site.clone(),
            });
        }
        if t.distance_m <= 0.0 {
            return Err(ScenarioError::Invalid(format!(
                "terminal {} distance must be positive",
                t.id
            )));
        }
        if !(t.share > 0.0 && t.share <= 1.0) {
            return Err(ScenarioError::Invalid(format!(
                "terminal {} share must sit in (0, 1]",
                t.id
            )));
        }
        if !(0.0..=1.0).contains(&t.phi) {
            return Err(ScenarioError::Invalid(format!(
                "terminal {} phi must sit in [0, 1]",
                t.id
            )));
        }
        let own_gain = t.antenna_gain_dbi.unwrap_or(match t.kind {
            TerminalKind::Cpe => raw.carrier.cpe_gain_dbi,
            TerminalKind::IabMt => raw.carrier.mt_gain_dbi,
        });
        let gain_mid = phy::channel_gain(
            t.distance_m,
            mid_band.carrier_hz,
            mid_band.du_antenna_gain_dbi,
            own_gain,
        )?;
        let gain_mm = phy::channel_gain(
            t.distance_m,
            mm_band.carrier_hz,
            mm_band.du_antenna_gain_dbi,
            own_gain,
        )?;
        let state = if t.phi > 0.5 {
            AvailabilityState::BothAvailable
        } else {
            AvailabilityState::MidOnly
        };
        let (pref_gain, pref_noise) = if state == AvailabilityState::BothAvailable {
            (
                gain_mm,
                raw.carrier.noise_density_w_per_hz * mm_band.reference_rb_bandwidth_hz,
            )
        } else {
            (
                gain_mid,
                raw.carrier.noise_density_w_per_hz * mid_band.reference_rb_bandwidth_hz,
            )
        };
        let noise = t.noise_power_w.unwrap_or(pref_noise);
        if noise <= 0.0 {
            return Err(ScenarioError::Invalid(format!(
                "terminal {} noise power must be positive",
                t.id
            )));
        }
        let initial_rb_power_w = t
            .initial_rb_power_w
            .unwrap_or(mid_snr * noise / pref_gain);
        du.terminals.push(Terminal {
            id: t.id.clone(),
            kind: t.kind,
            parent_du: t.parent_du.clone(),
            distance_m: t.distance_m,
            band: BandAvailability {
                phi: t.phi,
                state,
            },
            noise_power_w: noise,
            initial_rb_power_w,
            site: t.site.clone(),
            share: t.share,
            nominal_demand_bps: t.nominal_demand_bps.unwrap_or(0.0),
            gain_mm,
            gain_mid,
        });
    }

    let sites = raw
        .sites
        .iter()
        .map(|s| SiteSpec {
            id: s.id.clone(),
            weight: s.weight,
        })
        .collect();

    Ok(Scenario {
        name: raw.name.clone(),
        packet_size_bits: raw.packet_size_bits,
        synthetic_peak_bps: raw.synthetic_peak_bps,
        nodes,
        dus,
        sites,
        thresholds,
        mid_band,
        mm_band,
        raw,
    })
}
