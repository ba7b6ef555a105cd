//! Link-budget, rate, and power-control formulas.
//!
//! The scalar-only formulas ([`snr`], [`shannon_rate`], [`channel_gain`],
//! [`update_tx_power`]) are generic over [`Scalar`]; everything coupled to the
//! carrier tables works in `f64`.

use thiserror::Error;

use crate::domain::{CarrierParams, McsTable};
use crate::scalar::Scalar;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum PhyError {
    #[error("noise power must be strictly positive")]
    ZeroNoise,
    #[error("no scheme in the table decodes at SNR {snr}")]
    NoFeasibleMcs { snr: f64 },
    #[error("power control diverged: measured SNR is not positive")]
    DivergentPowerControl,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Inputs of a single point-to-point link budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget<S: Scalar = f64> {
    /// Squared magnitude of the channel gain, dimensionless.
    pub gain_sq: S,
    /// Transmit power, watts.
    pub tx_power_w: S,
    /// Receiver noise power, watts.
    pub noise_power_w: S,
}

/// Received signal-to-noise ratio of a link, dimensionless.
pub fn snr<S: Scalar>(link: &LinkBudget<S>) -> Result<S, PhyError> {
    if link.noise_power_w <= S::zero() {
        return Err(PhyError::ZeroNoise);
    }
    if link.gain_sq < S::zero() || link.tx_power_w < S::zero() {
        return Err(PhyError::InvalidInput(
            "gain and transmit power must be non-negative".into(),
        ));
    }
    Ok(link.gain_sq * link.tx_power_w / link.noise_power_w)
}

/// Shannon capacity over `bandwidth_hz` at linear SNR `snr`, bit/s.
pub fn shannon_rate<S: Scalar>(bandwidth_hz: S, snr: S) -> S {
    let one = S::one();
    bandwidth_hz * (one + snr).log2()
}

/// Squared free-space channel gain between isotropic-referenced antennas.
///
/// `tx_gain_dbi` and `rx_gain_dbi` are the antenna gains at each end.
pub fn channel_gain<S: Scalar>(
    distance_m: S,
    carrier_hz: S,
    tx_gain_dbi: S,
    rx_gain_dbi: S,
) -> Result<S, PhyError> {
    if distance_m <= S::zero() || carrier_hz <= S::zero() {
        return Err(PhyError::InvalidInput(
            "distance and carrier frequency must be strictly positive".into(),
        ));
    }
    let c = S::from_f64_lit(SPEED_OF_LIGHT);
    let four_pi = S::from_f64_lit(4.0 * std::f64::consts::PI);
    let amplitude = c / (four_pi * distance_m * carrier_hz);
    let ten = S::from_f64_lit(10.0);
    let ant = ten.powf((tx_gain_dbi + rx_gain_dbi) / ten);
    Ok(ant * amplitude * amplitude)
}

/// Per-carrier peak bits per resource block per symbol period, after overhead.
fn per_rb_symbol_bits(params: &CarrierParams) -> f64 {
    f64::from(params.num_carriers)
        * f64::from(params.layers)
        * params.modulation_order
        * params.scaling
        * params.max_code_rate
        * 12.0
        * (1.0 - params.overhead)
}

/// Peak downlink rate of a station over `rb_budget` resource blocks, in Mbit/s.
/// `active` is the station's scheduling indicator; an inactive station has zero
/// rate.
pub fn max_du_rate_mbps(params: &CarrierParams, rb_budget: u32, active: bool) -> f64 {
    if !active {
        return 0.0;
    }
    1e-6 * per_rb_symbol_bits(params) * f64::from(rb_budget) / params.symbol_duration_s()
}

/// Same as [`max_du_rate_mbps`] in bit/s.
pub fn max_du_rate_bps(params: &CarrierParams, rb_budget: u32, active: bool) -> f64 {
    1e6 * max_du_rate_mbps(params, rb_budget, active)
}

/// Resource blocks needed to carry `demand_bps` at the reference modulation.
/// Zero demand needs zero blocks.
pub fn rbs_required(demand_bps: f64, params: &CarrierParams) -> u32 {
    if demand_bps <= 0.0 {
        return 0;
    }
    let blocks = demand_bps * params.symbol_duration_s() / per_rb_symbol_bits(params);
    blocks.ceil() as u32
}

/// Coded rate of scheme `index` over `rb_count` resource blocks, bit/s.
/// Follows the same per-block accounting as [`max_du_rate_mbps`] with the
/// scheme's own modulation order and code rate.
pub fn mcs_rate_bps(table: &McsTable, index: usize, rb_count: u32, params: &CarrierParams) -> f64 {
    let entry = match table.get(index) {
        Some(e) => e,
        None => return 0.0,
    };
    f64::from(params.num_carriers)
        * f64::from(params.layers)
        * f64::from(entry.modulation_order)
        * params.scaling
        * entry.code_rate
        * 12.0
        * (1.0 - params.overhead)
        * f64::from(rb_count)
        / params.symbol_duration_s()
}

/// Outcome of a scheme selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McsSelection {
    pub index: usize,
    /// Set when no decodable scheme reaches the demand at the given block count.
    pub underserved: bool,
}

/// Picks the lowest-index scheme that decodes at `snr` and carries `demand_bps`
/// over `rb_count` blocks. Falls back to the highest decodable scheme (flagged
/// `underserved`) when none carries the demand. No decodable scheme is an error.
pub fn select_mcs(
    table: &McsTable,
    snr: f64,
    demand_bps: f64,
    rb_count: u32,
    params: &CarrierParams,
) -> Result<McsSelection, PhyError> {
    let mut best_feasible: Option<usize> = None;
    for entry in table.entries() {
        if entry.snr_threshold > snr {
            break;
        }
        let idx = usize::from(entry.index);
        best_feasible = Some(idx);
        if mcs_rate_bps(table, idx, rb_count, params) >= demand_bps {
            return Ok(McsSelection {
                index: idx,
                underserved: false,
            });
        }
    }
    match best_feasible {
        Some(index) => Ok(McsSelection {
            index,
            underserved: true,
        }),
        None => Err(PhyError::NoFeasibleMcs { snr }),
    }
}

/// One step of closed-loop power control toward `snr_target`.
///
/// `allocated` and `mcs_active` are the scheduling and scheme indicators; when
/// either is false the block carries nothing and gets zero power. The caller is
/// responsible for capping the summed result against the station power budget.
pub fn update_tx_power<S: Scalar>(
    rb_power_w: S,
    snr_actual: S,
    snr_target: S,
    allocated: bool,
    mcs_active: bool,
) -> Result<S, PhyError> {
    if !allocated || !mcs_active {
        return Ok(S::zero());
    }
    if snr_actual <= S::zero() {
        return Err(PhyError::DivergentPowerControl);
    }
    if rb_power_w < S::zero() || snr_target < S::zero() {
        return Err(PhyError::InvalidInput(
            "power and target SNR must be non-negative".into(),
        ));
    }
    Ok(snr_target * rb_power_w / snr_actual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::McsTable;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    const EPS: f64 = 1e-9;

    fn mm_params() -> CarrierParams {
        CarrierParams {
            num_carriers: 1,
            layers: 4,
            modulation_order: 8.0,
            scaling: 1.0,
            max_code_rate: 948.0 / 1024.0,
            overhead: 0.18,
            numerology: 3,
        }
    }

    fn mid_params() -> CarrierParams {
        CarrierParams {
            overhead: 0.14,
            numerology: 1,
            ..mm_params()
        }
    }

    #[test]
    fn snr_unit_case() {
        let link = LinkBudget {
            gain_sq: 2e-10,
            tx_power_w: 5.0,
            noise_power_w: 1e-9,
        };
        let d = snr(&link).unwrap();
        assert!((d - 1.0).abs() < EPS, "expected 1.0, got {d}");
    }

    #[test]
    fn snr_zero_noise_rejected() {
        let link = LinkBudget {
            gain_sq: 1.0,
            tx_power_w: 1.0,
            noise_power_w: 0.0,
        };
        assert!(matches!(snr(&link), Err(PhyError::ZeroNoise)));
    }

    #[test]
    fn snr_generic_over_f32() {
        let link = LinkBudget::<f32> {
            gain_sq: 2e-5,
            tx_power_w: 5.0,
            noise_power_w: 1e-4,
        };
        let d = snr(&link).unwrap();
        assert!((d - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shannon_exact_power_of_two() {
        // 500 MHz at SNR 1023 gives log2(1024) = 10 bits per Hz.
        let r = shannon_rate(500e6, 1023.0);
        assert_eq!(r, 5e9);
        assert_eq!(shannon_rate(1.0, 1.0), 1.0);
        assert_eq!(shannon_rate(500e6, 0.0), 0.0);
    }

    #[test]
    fn channel_gain_normalization() {
        // At the distance-frequency product where the wavelength equals
        // 4 pi times the distance, the path term is exactly 1.
        let f = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI);
        let g = channel_gain(1.0, f, 0.0, 0.0).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn channel_gain_inverse_square() {
        let g1 = channel_gain(1000.0, 42e9, 0.0, 0.0).unwrap();
        let g2 = channel_gain(500.0, 42e9, 0.0, 0.0).unwrap();
        assert!((g2 / g1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn channel_gain_matches_db_path_loss_formula() {
        // Independent route: path loss in dB as 20 log10 d + 20 log10 f - 147.55...
        let d = 29_600.0;
        let f = 42e9;
        let fspl_db = 20.0 * d.log10() + 20.0 * f.log10()
            - 20.0 * (SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI)).log10();
        assert!((fspl_db - 154.3386).abs() < 5e-4, "hand value check, got {fspl_db}");
        let g = channel_gain(d, f, 0.0, 0.0).unwrap();
        let g_db = -10.0 * g.log10();
        assert!((g_db - fspl_db).abs() < 1e-9);
    }

    #[test]
    fn channel_gain_includes_antennas() {
        let bare = channel_gain(1000.0, 7e9, 0.0, 0.0).unwrap();
        let dished = channel_gain(1000.0, 7e9, 38.0, 38.0).unwrap();
        assert!((dished / bare - 10f64.powf(7.6)).abs() / 10f64.powf(7.6) < 1e-12);
    }

    #[test]
    fn channel_gain_rejects_bad_geometry() {
        assert!(channel_gain(0.0, 42e9, 0.0, 0.0).is_err());
        assert!(channel_gain(100.0, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn peak_station_rate_hand_value() {
        // 264 blocks, numerology 3, 18 percent overhead: 8619.36768 Mbit/s.
        let r = max_du_rate_mbps(&mm_params(), 264, true);
        assert!((r - 8619.36768).abs() / 8619.36768 < 1e-9, "got {r}");
        assert_eq!(max_du_rate_mbps(&mm_params(), 264, false), 0.0);
    }

    #[test]
    fn rbs_required_hand_value() {
        // 100 Mbit/s at numerology 1 with 14 percent overhead: 11.68 blocks, so 12.
        assert_eq!(rbs_required(100e6, &mid_params()), 12);
        assert_eq!(rbs_required(0.0, &mid_params()), 0);
    }

    #[test]
    fn rbs_required_ceiling_is_tight() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..500 {
            let params = if rng.gen_bool(0.5) { mm_params() } else { mid_params() };
            let demand: f64 = rng.gen_range(1e4..1e10);
            let n = rbs_required(demand, &params);
            assert!(n >= 1);
            let rate_n = max_du_rate_bps(&params, n, true);
            assert!(
                rate_n >= demand * (1.0 - 1e-12),
                "{n} blocks must carry {demand}"
            );
            if n > 1 {
                let rate_less = max_du_rate_bps(&params, n - 1, true);
                assert!(
                    rate_less < demand * (1.0 + 1e-12),
                    "{} blocks must not carry {demand}",
                    n - 1
                );
            }
        }
    }

    #[test]
    fn mcs_rate_matches_reference_at_top_entry() {
        // The top scheme equals the reference modulation and code rate, so its
        // rate must coincide with the station peak over the same blocks.
        let table = McsTable::standard();
        let top = table.len() - 1;
        let params = mm_params();
        let a = mcs_rate_bps(table, top, 50, &params);
        let b = max_du_rate_bps(&params, 50, true);
        assert!((a - b).abs() / b < 1e-12);
    }

    #[test]
    fn select_mcs_prefers_lowest_sufficient_entry() {
        let table = McsTable::standard();
        let params = mid_params();
        let high_snr = table.entries().last().unwrap().snr_threshold * 2.0;

        // Tiny demand with an excellent channel still picks index 0.
        let pick = select_mcs(table, high_snr, 10.0, 4, &params).unwrap();
        assert_eq!(pick.index, 0);
        assert!(!pick.underserved);

        // SNR strictly between thresholds 10 and 11 restricts feasibility to
        // indices up to 10; a demand carried by index 10 picks at most 10.
        let between =
            0.5 * (table.get(10).unwrap().snr_threshold + table.get(11).unwrap().snr_threshold);
        let d10 = mcs_rate_bps(table, 10, 8, &params);
        let pick = select_mcs(table, between, d10, 8, &params).unwrap();
        assert!(pick.index <= 10);
        assert!(!pick.underserved);
        assert!(mcs_rate_bps(table, pick.index, 8, &params) >= d10);
        for lower in 0..pick.index {
            assert!(mcs_rate_bps(table, lower, 8, &params) < d10);
        }
    }

    #[test]
    fn select_mcs_flags_underserved_and_errors_below_floor() {
        let table = McsTable::standard();
        let params = mid_params();
        let between =
            0.5 * (table.get(10).unwrap().snr_threshold + table.get(11).unwrap().snr_threshold);
        let impossible = mcs_rate_bps(table, 28, 8, &params) * 2.0;
        let pick = select_mcs(table, between, impossible, 8, &params).unwrap();
        assert_eq!(pick.index, 10);
        assert!(pick.underserved);

        let below_floor = table.get(0).unwrap().snr_threshold * 0.5;
        assert!(matches!(
            select_mcs(table, below_floor, 1.0, 8, &params),
            Err(PhyError::NoFeasibleMcs { .. })
        ));
    }

    #[test]
    fn power_update_scales_by_snr_ratio() {
        // Measured SNR twice the target halves the power.
        let p = update_tx_power(0.4, 20.0, 10.0, true, true).unwrap();
        assert!((p - 0.2).abs() < EPS);
        // Unallocated blocks get zero regardless of SNR.
        assert_eq!(update_tx_power(0.4, 20.0, 10.0, false, true).unwrap(), 0.0);
        assert_eq!(update_tx_power(0.4, 20.0, 10.0, true, false).unwrap(), 0.0);
    }

    #[test]
    fn power_update_diverges_on_dead_channel() {
        assert!(matches!(
            update_tx_power(0.4, 0.0, 10.0, true, true),
            Err(PhyError::DivergentPowerControl)
        ));
    }

    #[test]
    fn power_update_reaches_target_in_one_step() {
        let gain = 1e-12;
        let noise = 1e-13;
        let p0 = 0.05;
        let actual = gain * p0 / noise;
        let target = 6.0;
        let p1: f64 = update_tx_power(p0, actual, target, true, true).unwrap();
        let after = gain * p1 / noise;
        assert!((after - target).abs() / target < 1e-12);
    }
}
