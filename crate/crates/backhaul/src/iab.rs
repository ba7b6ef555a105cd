//! Access-side resource allocation: splitting each station's block budgets
//! across terminals, adapting schemes and per-block power, and re-sizing the
//! budgets from observed utilization and load.
//!
//! Allocation runs in two alternating blocks. The band assignment follows
//! availability (the wide band whenever a terminal can use it); the per-band
//! step sizes block counts for each demand, trades spare blocks for lower
//! schemes to cut power, and closes the power-control loop. The alternation
//! repeats until the total power objective settles.

use thiserror::Error;

use crate::domain::scenario::{AccessBandSpec, DuSpec};
use crate::domain::{
    BandKind, CarrierParams, DomainError, DuId, McsTable, NumerologyTable, Terminal,
    MID_TABLE_MCS_INDEX,
};
use crate::phy;

/// Smoothing factor of the offered and served rate averages.
pub const EWMA_ALPHA: f64 = 0.1;

/// Relative change of the power objective below which the alternation stops.
pub const DMCP_TOLERANCE: f64 = 1e-6;

pub const DMCP_MAX_ITERS: u32 = 100;

/// Block budgets and numerologies of the non-adaptive configuration.
pub const FIXED_MID_BUDGET_RBS: u32 = 264;
pub const FIXED_MM_BUDGET_RBS: u32 = 273;
pub const FIXED_MID_NUMEROLOGY: u8 = 1;
pub const FIXED_MM_NUMEROLOGY: u8 = 3;

#[derive(Debug, Error)]
pub enum IabError {
    #[error("traffic load is undefined before any bits are served")]
    LoadUndefined,
    #[error("allocation got {got} demands for {expected} terminals")]
    MismatchedDemands { expected: usize, got: usize },
    #[error(transparent)]
    Phy(#[from] phy::PhyError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Whether the station adapts budgets and schemes or stays pinned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationMode {
    Adaptive,
    Fixed,
}

/// Fraction of a block budget in use.
pub fn rb_utilization(allocated_rbs: u32, budget_rbs: u32) -> f64 {
    if budget_rbs == 0 {
        0.0
    } else {
        f64::from(allocated_rbs) / f64::from(budget_rbs)
    }
}

/// Offered-to-served rate ratio. Undefined until something has been served.
pub fn traffic_load(offered_bps: f64, served_bps: f64) -> Result<f64, IabError> {
    if served_bps <= 0.0 {
        return Err(IabError::LoadUndefined);
    }
    Ok(offered_bps / served_bps)
}

/// Next block budget: the current one scaled by the midpoint of mean
/// utilization and load, rounded down.
pub fn update_rb_budget(mean_utilization: f64, load: f64, budget_rbs: u32) -> u32 {
    (((mean_utilization + load) / 2.0) * f64::from(budget_rbs)).floor() as u32
}

/// Serving band for a terminal: the wide band whenever it is available.
pub fn select_band(terminal: &Terminal) -> BandKind {
    match terminal.band.state {
        crate::domain::AvailabilityState::BothAvailable => BandKind::MmWave,
        crate::domain::AvailabilityState::MidOnly => BandKind::MidBand,
    }
}

/// Exponentially smoothed offered and served rates plus the utilization
/// window accumulated since the last budget update.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilizationTracker {
    ewma_offered_bps: f64,
    ewma_served_bps: f64,
    seeded: bool,
    gamma_sum: f64,
    gamma_ticks: u64,
}

impl UtilizationTracker {
    pub fn new() -> Self {
        UtilizationTracker {
            ewma_offered_bps: 0.0,
            ewma_served_bps: 0.0,
            seeded: false,
            gamma_sum: 0.0,
            gamma_ticks: 0,
        }
    }

    pub fn record(&mut self, offered_bps: f64, served_bps: f64, utilization: f64) {
        if self.seeded {
            self.ewma_offered_bps =
                EWMA_ALPHA * offered_bps + (1.0 - EWMA_ALPHA) * self.ewma_offered_bps;
            self.ewma_served_bps =
                EWMA_ALPHA * served_bps + (1.0 - EWMA_ALPHA) * self.ewma_served_bps;
        } else {
            self.ewma_offered_bps = offered_bps;
            self.ewma_served_bps = served_bps;
            self.seeded = true;
        }
        self.gamma_sum += utilization;
        self.gamma_ticks += 1;
    }

    pub fn offered_bps(&self) -> f64 {
        self.ewma_offered_bps
    }

    pub fn served_bps(&self) -> f64 {
        self.ewma_served_bps
    }

    /// Smoothed offered-to-served ratio.
    pub fn load(&self) -> Result<f64, IabError> {
        traffic_load(self.ewma_offered_bps, self.ewma_served_bps)
    }

    /// Mean utilization over the window since the last budget update.
    pub fn mean_utilization(&self) -> f64 {
        if self.gamma_ticks == 0 {
            0.0
        } else {
            self.gamma_sum / self.gamma_ticks as f64
        }
    }

    /// Opens a fresh utilization window; the rate averages persist.
    pub fn start_window(&mut self) {
        self.gamma_sum = 0.0;
        self.gamma_ticks = 0;
    }
}

impl Default for UtilizationTracker {
    fn default() -> Self {
        Self::new()
    }
}

/// One access band of a station: its carrier constants, current block budget
/// and the running averages that drive budget updates.
#[derive(Debug, Clone, PartialEq)]
pub struct DuBand {
    pub kind: BandKind,
    pub params: CarrierParams,
    pub budget_rbs: u32,
    /// Block bandwidth the per-terminal noise figures refer to, Hz.
    pub reference_rb_bandwidth_hz: f64,
    pub tracker: UtilizationTracker,
    /// Blocks the latest demands would need at the anchor scheme; the budget
    /// never shrinks below the table entry covering this.
    last_anchor_rbs: u32,
}

impl DuBand {
    fn from_spec(spec: &AccessBandSpec) -> Self {
        DuBand {
            kind: spec.kind,
            params: spec.params,
            budget_rbs: spec.initial_budget,
            reference_rb_bandwidth_hz: spec.reference_rb_bandwidth_hz,
            tracker: UtilizationTracker::new(),
            last_anchor_rbs: 0,
        }
    }

    /// Per-block noise for a terminal at the band's current numerology.
    fn effective_noise_w(&self, noise_power_w: f64, params: &CarrierParams) -> f64 {
        noise_power_w * params.rb_bandwidth_hz() / self.reference_rb_bandwidth_hz
    }
}

/// What one terminal received in an allocation round.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalAllocation {
    pub terminal_id: String,
    pub band: BandKind,
    pub rb_count: u32,
    pub mcs_index: usize,
    pub rb_power_w: f64,
    pub offered_bps: f64,
    pub served_bps: f64,
    pub underserved: bool,
}

/// One allocation round across both bands of a station.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationDecision {
    /// Index-aligned with the station's terminal list.
    pub terminals: Vec<TerminalAllocation>,
    pub mid_used_rbs: u32,
    pub mm_used_rbs: u32,
    pub mid_budget_rbs: u32,
    pub mm_budget_rbs: u32,
    /// Total transmit power, the allocation objective, watts.
    pub power_w: f64,
    pub offered_bps: f64,
    pub served_bps: f64,
    pub iterations: u32,
    pub converged: bool,
    /// Objective after each alternation round.
    pub objective_history: Vec<f64>,
}

impl AllocationDecision {
    pub fn unserved_bps(&self) -> f64 {
        (self.offered_bps - self.served_bps).max(0.0)
    }

    pub fn utilization(&self, band: BandKind) -> f64 {
        match band {
            BandKind::MidBand => rb_utilization(self.mid_used_rbs, self.mid_budget_rbs),
            BandKind::MmWave => rb_utilization(self.mm_used_rbs, self.mm_budget_rbs),
        }
    }
}

#[derive(Debug, Clone)]
struct TerminalPlan {
    idx: usize,
    band: BandKind,
    rbs: u32,
    mcs: usize,
    power_w: f64,
    served_bps: f64,
    underserved: bool,
}

struct BandPlan {
    plans: Vec<TerminalPlan>,
    used_rbs: u32,
    anchor_rbs: u32,
}

/// Blocks needed to carry `demand_bps` with scheme `index`.
fn blocks_for_demand(table: &McsTable, index: usize, demand_bps: f64, params: &CarrierParams) -> u32 {
    if demand_bps <= 0.0 {
        return 0;
    }
    let per_block = phy::mcs_rate_bps(table, index, 1, params);
    debug_assert!(per_block > 0.0, "scheme index {index} out of table");
    (demand_bps / per_block).ceil() as u32
}

/// An access station: two bands, its terminals, and the closed-loop power
/// state per terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct IabDu {
    pub id: DuId,
    pub power_cap_w: f64,
    pub terminals: Vec<Terminal>,
    pub mid: DuBand,
    pub mm: DuBand,
    fixed_mid_params: CarrierParams,
    fixed_mm_params: CarrierParams,
    rb_power_w: Vec<f64>,
}

impl IabDu {
    pub fn new(spec: &DuSpec, mid: &AccessBandSpec, mm: &AccessBandSpec) -> Self {
        let rb_power_w = spec
            .terminals
            .iter()
            .map(|t| t.initial_rb_power_w)
            .collect();
        IabDu {
            id: spec.id.clone(),
            power_cap_w: spec.power_cap_w,
            terminals: spec.terminals.clone(),
            mid: DuBand::from_spec(mid),
            mm: DuBand::from_spec(mm),
            fixed_mid_params: mid.params.with_numerology(FIXED_MID_NUMEROLOGY),
            fixed_mm_params: mm.params.with_numerology(FIXED_MM_NUMEROLOGY),
            rb_power_w,
        }
    }

    /// Current per-block power commanded for a terminal, watts.
    pub fn rb_power_w(&self, terminal: usize) -> f64 {
        self.rb_power_w[terminal]
    }

    /// Runs one allocation round for the tick and records its statistics.
    pub fn allocate(
        &mut self,
        demands: &[f64],
        mode: AllocationMode,
    ) -> Result<AllocationDecision, IabError> {
        if demands.len() != self.terminals.len() {
            return Err(IabError::MismatchedDemands {
                expected: self.terminals.len(),
                got: demands.len(),
            });
        }
        let decision = match mode {
            AllocationMode::Adaptive => self.dmcp_iterate(demands)?,
            AllocationMode::Fixed => {
                let (decision, mid_plan, mm_plan) = self.single_round(demands, mode)?;
                self.store_powers(&mid_plan, &mm_plan);
                self.mid.last_anchor_rbs = mid_plan.anchor_rbs;
                self.mm.last_anchor_rbs = mm_plan.anchor_rbs;
                decision
            }
        };

        let mut offered = [0.0f64; 2];
        let mut served = [0.0f64; 2];
        for alloc in &decision.terminals {
            let b = (alloc.band == BandKind::MmWave) as usize;
            offered[b] += alloc.offered_bps;
            served[b] += alloc.served_bps;
        }
        self.mid.tracker.record(
            offered[0],
            served[0],
            rb_utilization(decision.mid_used_rbs, decision.mid_budget_rbs),
        );
        self.mm.tracker.record(
            offered[1],
            served[1],
            rb_utilization(decision.mm_used_rbs, decision.mm_budget_rbs),
        );
        Ok(decision)
    }

    /// Alternates the band assignment and per-band sizing blocks until the
    /// power objective settles, committing the power-control state as it goes.
    pub fn dmcp_iterate(&mut self, demands: &[f64]) -> Result<AllocationDecision, IabError> {
        let mut history: Vec<f64> = Vec::new();
        let mut converged = false;
        let mut last = None;
        let mut iterations = 0;
        while iterations < DMCP_MAX_ITERS {
            iterations += 1;
            let (decision, mid_plan, mm_plan) = self.single_round(demands, AllocationMode::Adaptive)?;
            self.store_powers(&mid_plan, &mm_plan);
            self.mid.last_anchor_rbs = mid_plan.anchor_rbs;
            self.mm.last_anchor_rbs = mm_plan.anchor_rbs;
            let objective = decision.power_w;
            if let Some(&prev) = history.last() {
                if (prev - objective).abs() <= DMCP_TOLERANCE * prev.abs().max(1.0) {
                    history.push(objective);
                    last = Some(decision);
                    converged = true;
                    break;
                }
            }
            history.push(objective);
            last = Some(decision);
        }
        let mut decision = last.expect("at least one round ran");
        decision.iterations = iterations;
        decision.converged = converged;
        decision.objective_history = history;
        Ok(decision)
    }

    /// Re-sizes both block budgets from the window statistics, keeping each
    /// inside the configuration table and above the anchor-scheme floor.
    pub fn update_budgets(&mut self) {
        let table = NumerologyTable::standard();
        for band in [&mut self.mid, &mut self.mm] {
            // An idle band reads as zero load rather than undefined.
            let load = band.tracker.load().unwrap_or(0.0);
            let target = update_rb_budget(band.tracker.mean_utilization(), load, band.budget_rbs);
            let options = table.options_for(band.kind);
            let grown = target >= band.budget_rbs;
            let candidate = if grown {
                options
                    .iter()
                    .find(|e| e.rb_count >= target)
                    .or_else(|| options.last())
            } else {
                options
                    .iter()
                    .rev()
                    .find(|e| e.rb_count <= target)
                    .or_else(|| options.first())
            }
            .copied()
            .expect("band has table entries");
            let floor = options
                .iter()
                .find(|e| e.rb_count >= band.last_anchor_rbs)
                .or_else(|| options.last())
                .copied()
                .expect("band has table entries");
            let chosen = if floor.rb_count > candidate.rb_count {
                floor
            } else {
                candidate
            };
            band.budget_rbs = chosen.rb_count;
            band.params = band.params.with_numerology(chosen.numerology);
            band.tracker.start_window();
        }
    }

    fn band_members(&self, demands: &[f64]) -> (Vec<usize>, Vec<usize>) {
        let mut mid = Vec::new();
        let mut mm = Vec::new();
        for (idx, terminal) in self.terminals.iter().enumerate() {
            if demands[idx] <= 0.0 {
                continue;
            }
            match select_band(terminal) {
                BandKind::MidBand => mid.push(idx),
                BandKind::MmWave => mm.push(idx),
            }
        }
        (mid, mm)
    }

    fn single_round(
        &self,
        demands: &[f64],
        mode: AllocationMode,
    ) -> Result<(AllocationDecision, BandPlan, BandPlan), IabError> {
        let (mid_members, mm_members) = self.band_members(demands);
        let (mid_params, mid_budget, mm_params, mm_budget) = match mode {
            AllocationMode::Adaptive => (
                self.mid.params,
                self.mid.budget_rbs,
                self.mm.params,
                self.mm.budget_rbs,
            ),
            AllocationMode::Fixed => (
                self.fixed_mid_params,
                FIXED_MID_BUDGET_RBS,
                self.fixed_mm_params,
                FIXED_MM_BUDGET_RBS,
            ),
        };
        let cap_share_w = self.power_cap_w / f64::from(mid_budget + mm_budget);
        let adapt = mode == AllocationMode::Adaptive;
        let mid_plan = self.plan_band(
            &self.mid,
            &mid_members,
            demands,
            &mid_params,
            mid_budget,
            cap_share_w,
            adapt,
        )?;
        let mm_plan = self.plan_band(
            &self.mm,
            &mm_members,
            demands,
            &mm_params,
            mm_budget,
            cap_share_w,
            adapt,
        )?;

        let mut terminals: Vec<TerminalAllocation> = self
            .terminals
            .iter()
            .enumerate()
            .map(|(idx, t)| TerminalAllocation {
                terminal_id: t.id.clone(),
                band: select_band(t),
                rb_count: 0,
                mcs_index: 0,
                rb_power_w: 0.0,
                offered_bps: demands[idx].max(0.0),
                served_bps: 0.0,
                underserved: false,
            })
            .collect();
        let mut power = 0.0;
        for plan in mid_plan.plans.iter().chain(mm_plan.plans.iter()) {
            let slot = &mut terminals[plan.idx];
            slot.band = plan.band;
            slot.rb_count = plan.rbs;
            slot.mcs_index = plan.mcs;
            slot.rb_power_w = plan.power_w;
            slot.served_bps = plan.served_bps;
            slot.underserved = plan.underserved;
            power += plan.power_w * f64::from(plan.rbs);
        }
        let offered: f64 = terminals.iter().map(|t| t.offered_bps).sum();
        let served: f64 = terminals.iter().map(|t| t.served_bps).sum();
        let decision = AllocationDecision {
            terminals,
            mid_used_rbs: mid_plan.used_rbs,
            mm_used_rbs: mm_plan.used_rbs,
            mid_budget_rbs: mid_budget,
            mm_budget_rbs: mm_budget,
            power_w: power,
            offered_bps: offered,
            served_bps: served,
            iterations: 1,
            converged: true,
            objective_history: vec![power],
        };
        Ok((decision, mid_plan, mm_plan))
    }

    #[allow(clippy::too_many_arguments)]
    fn plan_band(
        &self,
        band: &DuBand,
        members: &[usize],
        demands: &[f64],
        params: &CarrierParams,
        budget: u32,
        cap_share_w: f64,
        adapt: bool,
    ) -> Result<BandPlan, IabError> {
        let table = McsTable::standard();
        let mut anchor_rbs = 0u32;

        struct Candidate {
            idx: usize,
            demand: f64,
            gain: f64,
            noise: f64,
            mcs: usize,
            rbs: u32,
            feasible: bool,
        }
        let mut candidates = Vec::with_capacity(members.len());
        for &idx in members {
            let t = &self.terminals[idx];
            let demand = demands[idx];
            let gain = t.gain_for(band.kind);
            let noise = band.effective_noise_w(t.noise_power_w, params);
            anchor_rbs = anchor_rbs
                .saturating_add(blocks_for_demand(table, MID_TABLE_MCS_INDEX, demand, params));
            // Highest scheme whose target power fits the per-block share.
            let cap_index = table
                .entries()
                .iter()
                .rev()
                .find(|e| e.snr_threshold * noise / gain <= cap_share_w)
                .map(|e| usize::from(e.index));
            let (mcs, feasible) = match cap_index {
                Some(cap) => {
                    let anchor = if adapt {
                        MID_TABLE_MCS_INDEX.min(cap)
                    } else {
                        MID_TABLE_MCS_INDEX.min(cap)
                    };
                    (anchor, true)
                }
                None => (0, false),
            };
            let rbs = if feasible {
                blocks_for_demand(table, mcs, demand, params)
            } else {
                0
            };
            candidates.push(Candidate {
                idx,
                demand,
                gain,
                noise,
                mcs,
                rbs,
                feasible,
            });
        }

        // Smallest requests first when the budget cannot hold everything.
        candidates.sort_by(|a, b| a.rbs.cmp(&b.rbs).then(a.idx.cmp(&b.idx)));
        let mut used = 0u32;
        let mut plans: Vec<TerminalPlan> = Vec::with_capacity(candidates.len());
        for c in &candidates {
            if !c.feasible {
                plans.push(TerminalPlan {
                    idx: c.idx,
                    band: band.kind,
                    rbs: 0,
                    mcs: 0,
                    power_w: 0.0,
                    served_bps: 0.0,
                    underserved: true,
                });
                continue;
            }
            let granted = c.rbs.min(budget - used);
            used += granted;
            let underserved = granted < c.rbs;
            let served = if underserved {
                phy::mcs_rate_bps(table, c.mcs, granted, params).min(c.demand)
            } else {
                c.demand
            };
            plans.push(TerminalPlan {
                idx: c.idx,
                band: band.kind,
                rbs: granted,
                mcs: c.mcs,
                power_w: 0.0,
                served_bps: served,
                underserved,
            });
        }

        // Spend spare blocks on lower schemes; each step trades a few extra
        // blocks for an exponentially lower power target.
        if adapt && plans.iter().all(|p| !p.underserved) {
            let mut spare = budget - used;
            loop {
                let mut changed = false;
                for plan in plans.iter_mut() {
                    if plan.mcs == 0 || plan.rbs == 0 {
                        continue;
                    }
                    let wider = blocks_for_demand(
                        table,
                        plan.mcs - 1,
                        demands[plan.idx],
                        params,
                    );
                    let extra = wider.saturating_sub(plan.rbs);
                    if extra <= spare {
                        plan.mcs -= 1;
                        spare -= extra;
                        used += extra;
                        plan.rbs = wider;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
        }

        // Close the power loop: one multiplicative step lands each block on
        // its scheme threshold exactly under a static channel.
        for plan in plans.iter_mut() {
            if plan.rbs == 0 {
                plan.power_w = 0.0;
                continue;
            }
            let c = candidates
                .iter()
                .find(|c| c.idx == plan.idx)
                .expect("plan came from candidates");
            let target = table.get(plan.mcs).expect("scheme index valid").snr_threshold;
            let mut previous = self.rb_power_w[plan.idx];
            if previous <= 0.0 {
                previous = self.terminals[plan.idx].initial_rb_power_w.max(c.noise / c.gain);
            }
            let snr_now = c.gain * previous / c.noise;
            let next = phy::update_tx_power(previous, snr_now, target, true, true)?;
            plan.power_w = next.min(cap_share_w);
        }

        debug_assert!(used <= budget);
        Ok(BandPlan {
            plans,
            used_rbs: used,
            anchor_rbs,
        })
    }

    fn store_powers(&mut self, mid: &BandPlan, mm: &BandPlan) {
        for power in self.rb_power_w.iter_mut() {
            *power = 0.0;
        }
        for plan in mid.plans.iter().chain(mm.plans.iter()) {
            self.rb_power_w[plan.idx] = plan.power_w;
        }
    }
}
