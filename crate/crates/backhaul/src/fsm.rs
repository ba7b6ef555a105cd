//! Per-node radio state machine: trigger signals, timers, failure draws,
//! retirement of long-idle radios, and upstream/downstream state mirroring.
//!
//! The controller owns all demand-driven decisions. A follower node runs the
//! same timers but changes state only through [`sync_states`].

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{MicrowaveNode, NodeId, RadioId, RadioState, RadioUnit};

#[derive(Debug, Error)]
pub enum FsmError {
    #[error("radio count mismatch: upstream has {upstream}, downstream has {downstream}")]
    RadioCountMismatch { upstream: usize, downstream: usize },
    #[error("failure probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
}

/// Labels for everything a radio can do in one tick.
///
/// `PowerOn` and `PowerOff` are the physical supply actions; they accompany
/// `GoStartup` and `GoDeepSleep`/`GoCompletelyOff` respectively and never
/// appear alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    GoStartup,
    StayOff,
    StartupFail,
    StartupComplete,
    GoDeepSleep,
    StaySleep,
    StayServing,
    GoWakeUp,
    WakeUpFail,
    WakeUpComplete,
    GoCompletelyOff,
    PowerOn,
    PowerOff,
}

impl ActionKind {
    /// True for the supply-level companions, false for state-machine actions.
    pub fn is_physical(self) -> bool {
        matches!(self, ActionKind::PowerOn | ActionKind::PowerOff)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::GoStartup => "go_startup",
            ActionKind::StayOff => "stay_off",
            ActionKind::StartupFail => "startup_fail",
            ActionKind::StartupComplete => "startup_complete",
            ActionKind::GoDeepSleep => "go_deep_sleep",
            ActionKind::StaySleep => "stay_sleep",
            ActionKind::StayServing => "stay_serving",
            ActionKind::GoWakeUp => "go_wake_up",
            ActionKind::WakeUpFail => "wake_up_fail",
            ActionKind::WakeUpComplete => "wake_up_complete",
            ActionKind::GoCompletelyOff => "go_completely_off",
            ActionKind::PowerOn => "power_on",
            ActionKind::PowerOff => "power_off",
        }
    }
}

/// One logged state-machine event for a single radio.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub radio_index: usize,
    pub kind: ActionKind,
    pub from: RadioState,
    pub to: RadioState,
}

/// Success/failure split of the timed transitions plus the legal edge set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub p_fail_startup: f64,
    pub p_fail_wakeup: f64,
}

impl Default for TransitionMatrix {
    fn default() -> Self {
        TransitionMatrix {
            p_fail_startup: 0.0,
            p_fail_wakeup: 0.0,
        }
    }
}

impl TransitionMatrix {
    pub fn validate(&self) -> Result<(), FsmError> {
        for p in [self.p_fail_startup, self.p_fail_wakeup] {
            if !(0.0..=1.0).contains(&p) {
                return Err(FsmError::InvalidProbability(p));
            }
        }
        Ok(())
    }

    /// True when the diagram has an edge from `from` to `to`. Self-loops are
    /// edges: stable states idle on them and timed states run their timers.
    pub fn edge_allowed(from: RadioState, to: RadioState) -> bool {
        use RadioState::*;
        matches!(
            (from, to),
            (CompletelyOff, CompletelyOff)
                | (CompletelyOff, Startup)
                | (Startup, Startup)
                | (Startup, Serving)
                | (Startup, CompletelyOff)
                | (Serving, Serving)
                | (Serving, DeepSleep)
                | (DeepSleep, DeepSleep)
                | (DeepSleep, WakeUp)
                | (DeepSleep, CompletelyOff)
                | (WakeUp, WakeUp)
                | (WakeUp, Serving)
                | (WakeUp, DeepSleep)
        )
    }

    /// Successor distribution for a realized action in a state. `None` for
    /// pairs the diagram does not define.
    pub fn row(&self, state: RadioState, action: ActionKind) -> Option<Vec<(RadioState, f64)>> {
        use ActionKind::*;
        use RadioState::*;
        let to = match (state, action) {
            (CompletelyOff, StayOff) => CompletelyOff,
            (CompletelyOff, GoStartup) | (CompletelyOff, PowerOn) => Startup,
            (Startup, StartupComplete) => Serving,
            (Startup, StartupFail) => CompletelyOff,
            (Serving, StayServing) => Serving,
            (Serving, GoDeepSleep) | (Serving, PowerOff) => DeepSleep,
            (DeepSleep, StaySleep) => DeepSleep,
            (DeepSleep, GoWakeUp) => WakeUp,
            (DeepSleep, GoCompletelyOff) | (DeepSleep, PowerOff) => CompletelyOff,
            (WakeUp, WakeUpComplete) => Serving,
            (WakeUp, WakeUpFail) => DeepSleep,
            _ => return None,
        };
        Some(vec![(to, 1.0)])
    }

    /// Outcome distribution of a timed state at timer expiry, with the failure
    /// branch weighted by the configured probability.
    pub fn completion_row(&self, state: RadioState) -> Option<Vec<(RadioState, f64)>> {
        match state {
            RadioState::Startup => Some(vec![
                (RadioState::Serving, 1.0 - self.p_fail_startup),
                (RadioState::CompletelyOff, self.p_fail_startup),
            ]),
            RadioState::WakeUp => Some(vec![
                (RadioState::Serving, 1.0 - self.p_fail_wakeup),
                (RadioState::DeepSleep, self.p_fail_wakeup),
            ]),
            _ => None,
        }
    }
}

/// Snapshot of one node's radio states; the enum representation keeps the
/// per-radio indicator vector one-hot by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateVector(pub Vec<RadioState>);

impl StateVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indicator x_{m,k}: 1 when radio `m` is in state `k`.
    pub fn indicator(&self, m: usize, k: RadioState) -> u8 {
        u8::from(self.0[m] == k)
    }

    /// Full indicator matrix, one row per radio over the five states.
    pub fn to_matrix(&self) -> Vec<[u8; 5]> {
        self.0
            .iter()
            .map(|s| {
                let mut row = [0u8; 5];
                row[s.index()] = 1;
                row
            })
            .collect()
    }

    /// Radios in startup, wake-up, or serving.
    pub fn count_on(&self) -> usize {
        self.0.iter().filter(|s| s.is_on()).count()
    }
}

/// Result of advancing one node by one tick.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub actions: Vec<Action>,
    pub states: StateVector,
    /// Instantaneous draw after the step, watts.
    pub power_w: f64,
    /// A wake or startup decision fired this tick.
    pub wake_triggered: bool,
}

/// Startup trigger: the serving radios no longer cover a positive demand.
pub fn check_startup_trigger(serving_capacity_bps: f64, demand_bps: f64) -> bool {
    demand_bps > 0.0 && serving_capacity_bps < demand_bps
}

/// Deep-sleep signal: the serving surplus, floored at the sleep threshold.
pub fn compute_sleep_signal(serving_capacity_bps: f64, demand_bps: f64, d_rds_bps: f64) -> f64 {
    (serving_capacity_bps - demand_bps).max(d_rds_bps)
}

/// Wake signal: sleeping capacity net of demand, floored at the wake threshold.
pub fn compute_wake_signal(sleeping_capacity_bps: f64, demand_bps: f64, d_w_bps: f64) -> f64 {
    (sleeping_capacity_bps - demand_bps).max(d_w_bps)
}

fn apply_action(
    radio: &mut RadioUnit,
    index: usize,
    kind: ActionKind,
    to: RadioState,
    actions: &mut Vec<Action>,
) {
    debug_assert!(TransitionMatrix::edge_allowed(radio.state, to));
    actions.push(Action {
        radio_index: index,
        kind,
        from: radio.state,
        to,
    });
    radio.state = to;
    radio.time_in_state_s = 0.0;
    if to == RadioState::DeepSleep {
        radio.idle_sleep_s = 0.0;
    }
}

/// Phases shared by controller and follower: clock advance, timer completions
/// with failure draws, and retirement of radios idle beyond the off period.
fn step_timers<R: Rng>(
    node: &mut MicrowaveNode,
    dt_s: f64,
    matrix: &TransitionMatrix,
    rng: &mut R,
    actions: &mut Vec<Action>,
) {
    for radio in &mut node.radios {
        radio.time_in_state_s += dt_s;
        if radio.state == RadioState::DeepSleep {
            radio.idle_sleep_s += dt_s;
        }
    }
    let off_period = node.thresholds.completely_off_period_s;
    for (i, radio) in node.radios.iter_mut().enumerate() {
        match radio.state {
            RadioState::Startup if radio.time_in_state_s >= radio.startup_s => {
                if matrix.p_fail_startup > 0.0 && rng.gen_bool(matrix.p_fail_startup) {
                    apply_action(radio, i, ActionKind::StartupFail, RadioState::CompletelyOff, actions);
                } else {
                    apply_action(radio, i, ActionKind::StartupComplete, RadioState::Serving, actions);
                }
            }
            RadioState::WakeUp if radio.time_in_state_s >= radio.wakeup_s => {
                if matrix.p_fail_wakeup > 0.0 && rng.gen_bool(matrix.p_fail_wakeup) {
                    apply_action(radio, i, ActionKind::WakeUpFail, RadioState::DeepSleep, actions);
                } else {
                    apply_action(radio, i, ActionKind::WakeUpComplete, RadioState::Serving, actions);
                }
            }
            RadioState::DeepSleep if radio.idle_sleep_s >= off_period => {
                apply_action(radio, i, ActionKind::GoCompletelyOff, RadioState::CompletelyOff, actions);
                actions.push(Action {
                    radio_index: i,
                    kind: ActionKind::PowerOff,
                    from: RadioState::DeepSleep,
                    to: RadioState::CompletelyOff,
                });
            }
            _ => {}
        }
    }
}

/// Advances a demand-driven node by one tick.
///
/// Order: clocks, timer completions, retirement, then wake/sleep decisions.
/// Wake decisions count capacity already committed in startup or wake-up so a
/// radio in flight is not requested twice; sleep decisions use serving
/// capacity only and never leave the node without an on-path radio.
pub fn step_controller<R: Rng>(
    node: &mut MicrowaveNode,
    demand_bps: f64,
    dt_s: f64,
    matrix: &TransitionMatrix,
    rng: &mut R,
) -> StepOutcome {
    let mut actions = Vec::new();
    step_timers(node, dt_s, matrix, rng, &mut actions);

    let wake_threshold = node.thresholds.wake_threshold_bps;
    let sleep_threshold = node.thresholds.sleep_threshold_bps;
    let mut wake_triggered = false;

    let mut committed = node.serving_capacity_bps() + node.pending_capacity_bps();
    while committed - demand_bps < wake_threshold {
        let serving = node.serving_capacity_bps();
        let candidate = node
            .radios
            .iter()
            .enumerate()
            .filter(|(_, r)| match r.state {
                RadioState::DeepSleep => true,
                RadioState::CompletelyOff => check_startup_trigger(serving, demand_bps),
                _ => false,
            })
            .max_by(|a, b| {
                a.1.serving_rate_bps
                    .partial_cmp(&b.1.serving_rate_bps)
                    .unwrap()
                    .then(b.0.cmp(&a.0))
            })
            .map(|(i, r)| (i, r.state));
        let Some((i, state)) = candidate else { break };
        let radio = &mut node.radios[i];
        if state == RadioState::DeepSleep {
            apply_action(radio, i, ActionKind::GoWakeUp, RadioState::WakeUp, &mut actions);
        } else {
            apply_action(radio, i, ActionKind::GoStartup, RadioState::Startup, &mut actions);
            actions.push(Action {
                radio_index: i,
                kind: ActionKind::PowerOn,
                from: RadioState::CompletelyOff,
                to: RadioState::Startup,
            });
        }
        committed += node.radios[i].serving_rate_bps;
        wake_triggered = true;
    }

    if node.on_count() == 0 {
        // A completion failure at zero demand can leave every radio off with
        // the startup trigger quiet; restore the floor with the largest
        // completely-off radio (sleeping radios were already handled above).
        let candidate = node
            .radios
            .iter()
            .enumerate()
            .filter(|(_, r)| r.state == RadioState::CompletelyOff)
            .max_by(|a, b| {
                a.1.serving_rate_bps
                    .partial_cmp(&b.1.serving_rate_bps)
                    .unwrap()
                    .then(b.0.cmp(&a.0))
            })
            .map(|(i, _)| i);
        if let Some(i) = candidate {
            let radio = &mut node.radios[i];
            apply_action(radio, i, ActionKind::GoStartup, RadioState::Startup, &mut actions);
            actions.push(Action {
                radio_index: i,
                kind: ActionKind::PowerOn,
                from: RadioState::CompletelyOff,
                to: RadioState::Startup,
            });
            wake_triggered = true;
        }
    }

    if !wake_triggered {
        let mut order: Vec<usize> = (0..node.radios.len()).collect();
        order.sort_by(|&a, &b| {
            node.radios[a]
                .serving_rate_bps
                .partial_cmp(&node.radios[b].serving_rate_bps)
                .unwrap()
                .then(a.cmp(&b))
        });
        for i in order {
            if node.radios[i].state != RadioState::Serving {
                continue;
            }
            let remaining = node.serving_capacity_bps() - node.radios[i].serving_rate_bps;
            let coverable = remaining - demand_bps >= sleep_threshold;
            if coverable && node.on_count() > 1 {
                let radio = &mut node.radios[i];
                apply_action(radio, i, ActionKind::GoDeepSleep, RadioState::DeepSleep, &mut actions);
                actions.push(Action {
                    radio_index: i,
                    kind: ActionKind::PowerOff,
                    from: RadioState::Serving,
                    to: RadioState::DeepSleep,
                });
            }
        }
    }

    StepOutcome {
        states: StateVector(node.states()),
        power_w: node.power_w(),
        actions,
        wake_triggered,
    }
}

/// Advances a mirroring node by one tick: timers and retirement only. State
/// changes beyond timer completions arrive through [`sync_states`].
pub fn step_follower<R: Rng>(
    node: &mut MicrowaveNode,
    dt_s: f64,
    matrix: &TransitionMatrix,
    rng: &mut R,
) -> StepOutcome {
    let mut actions = Vec::new();
    step_timers(node, dt_s, matrix, rng, &mut actions);
    StepOutcome {
        states: StateVector(node.states()),
        power_w: node.power_w(),
        actions,
        wake_triggered: false,
    }
}

/// Serializable state announcement exchanged between neighbor nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSyncMsg {
    pub node_id: NodeId,
    pub tick: u64,
    pub radio_states: Vec<(RadioId, RadioState)>,
}

impl StateSyncMsg {
    pub fn capture(node: &MicrowaveNode, tick: u64) -> Self {
        StateSyncMsg {
            node_id: node.id.clone(),
            tick,
            radio_states: node
                .radios
                .iter()
                .map(|r| (r.id.clone(), r.state))
                .collect(),
        }
    }

    pub fn states(&self) -> Vec<RadioState> {
        self.radio_states.iter().map(|(_, s)| *s).collect()
    }
}

/// Makes a follower chase the upstream node's physical intent, radio by radio.
///
/// Wake-side actions are issued first so a simultaneous handover (one radio up,
/// another down) never dips below one on-path radio. Radios mid-startup or
/// mid-wake-up are left to finish; a later sync corrects them if needed.
/// An upstream radio that is off in either flavor maps to "off": a deep-sleep
/// follower is not pushed further down to completely off.
pub fn sync_states(
    upstream_states: &[RadioState],
    node: &mut MicrowaveNode,
) -> Result<Vec<Action>, FsmError> {
    if upstream_states.len() != node.radios.len() {
        return Err(FsmError::RadioCountMismatch {
            upstream: upstream_states.len(),
            downstream: node.radios.len(),
        });
    }
    let mut actions = Vec::new();
    for (i, intent) in upstream_states.iter().enumerate() {
        if !intent.is_on() {
            continue;
        }
        let radio = &mut node.radios[i];
        match radio.state {
            RadioState::DeepSleep => {
                apply_action(radio, i, ActionKind::GoWakeUp, RadioState::WakeUp, &mut actions);
            }
            RadioState::CompletelyOff => {
                apply_action(radio, i, ActionKind::GoStartup, RadioState::Startup, &mut actions);
                actions.push(Action {
                    radio_index: i,
                    kind: ActionKind::PowerOn,
                    from: RadioState::CompletelyOff,
                    to: RadioState::Startup,
                });
            }
            _ => {}
        }
    }
    for (i, intent) in upstream_states.iter().enumerate() {
        if intent.is_on() {
            continue;
        }
        if node.radios[i].state == RadioState::Serving && node.on_count() > 1 {
            let radio = &mut node.radios[i];
            apply_action(radio, i, ActionKind::GoDeepSleep, RadioState::DeepSleep, &mut actions);
            actions.push(Action {
                radio_index: i,
                kind: ActionKind::PowerOff,
                from: RadioState::Serving,
                to: RadioState::DeepSleep,
            });
        }
    }
    Ok(actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{PolicyThresholds, PowerProfile};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const EPS: f64 = 1e-9;

    fn profile() -> PowerProfile {
        PowerProfile {
            completely_off_w: 0.0,
            deep_sleep_w: 3.0,
            startup_w: 55.0,
            wake_up_w: 50.0,
            serving_w: 80.0,
        }
    }

    fn radio(id: &str, rate_bps: f64, state: RadioState) -> RadioUnit {
        RadioUnit {
            id: id.into(),
            band_hz: 7e9,
            bandwidth_hz: 64e6,
            profile: profile(),
            tx_power_w: 2.0,
            tx_power_cap_w: 4.0,
            startup_s: 60.0,
            wakeup_s: 10.0,
            state,
            time_in_state_s: 0.0,
            idle_sleep_s: 0.0,
            serving_rate_bps: rate_bps,
        }
    }

    fn node(radios: Vec<RadioUnit>) -> MicrowaveNode {
        MicrowaveNode {
            id: "n0".into(),
            radios,
            downstream: None,
            link_distance_m: 29_600.0,
            thresholds: PolicyThresholds {
                sleep_threshold_bps: 1.3e9,
                wake_threshold_bps: 1.3e8,
                completely_off_period_s: 604_800.0,
                rb_update_period_ms: 1000.0,
            },
        }
    }

    fn two_radio_node() -> MicrowaveNode {
        node(vec![
            radio("r-mid", 1.3e9, RadioState::Serving),
            radio("r-mm", 8.41e9, RadioState::Serving),
        ])
    }

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(11)
    }

    #[test]
    fn whitelist_matches_state_diagram() {
        use RadioState::*;
        let allowed = [
            (CompletelyOff, CompletelyOff),
            (CompletelyOff, Startup),
            (Startup, Startup),
            (Startup, Serving),
            (Startup, CompletelyOff),
            (Serving, Serving),
            (Serving, DeepSleep),
            (DeepSleep, DeepSleep),
            (DeepSleep, WakeUp),
            (DeepSleep, CompletelyOff),
            (WakeUp, WakeUp),
            (WakeUp, Serving),
            (WakeUp, DeepSleep),
        ];
        let mut count = 0;
        for &from in RadioState::ALL.iter() {
            for &to in RadioState::ALL.iter() {
                let expect = allowed.contains(&(from, to));
                assert_eq!(TransitionMatrix::edge_allowed(from, to), expect, "{from:?}->{to:?}");
                count += usize::from(expect);
            }
        }
        assert_eq!(count, allowed.len());
    }

    #[test]
    fn matrix_rows_sum_to_one_on_whitelisted_edges() {
        let m = TransitionMatrix {
            p_fail_startup: 0.3,
            p_fail_wakeup: 0.1,
        };
        m.validate().unwrap();
        for &state in RadioState::ALL.iter() {
            for action in [
                ActionKind::GoStartup,
                ActionKind::StayOff,
                ActionKind::StartupFail,
                ActionKind::StartupComplete,
                ActionKind::GoDeepSleep,
                ActionKind::StaySleep,
                ActionKind::StayServing,
                ActionKind::GoWakeUp,
                ActionKind::WakeUpFail,
                ActionKind::WakeUpComplete,
                ActionKind::GoCompletelyOff,
                ActionKind::PowerOn,
                ActionKind::PowerOff,
            ] {
                if let Some(row) = m.row(state, action) {
                    let sum: f64 = row.iter().map(|(_, p)| p).sum();
                    assert!((sum - 1.0).abs() < EPS);
                    for (to, p) in row {
                        if p > 0.0 {
                            assert!(TransitionMatrix::edge_allowed(state, to));
                        }
                    }
                }
            }
            if let Some(row) = m.completion_row(state) {
                let sum: f64 = row.iter().map(|(_, p)| p).sum();
                assert!((sum - 1.0).abs() < EPS);
                for (to, p) in row {
                    if p > 0.0 {
                        assert!(TransitionMatrix::edge_allowed(state, to));
                    }
                }
            }
        }
        assert!(TransitionMatrix {
            p_fail_startup: 1.5,
            p_fail_wakeup: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn state_vector_is_one_hot() {
        let v = StateVector(vec![RadioState::Serving, RadioState::DeepSleep]);
        for row in v.to_matrix() {
            assert_eq!(row.iter().map(|&b| usize::from(b)).sum::<usize>(), 1);
        }
        assert_eq!(v.indicator(0, RadioState::Serving), 1);
        assert_eq!(v.indicator(1, RadioState::Serving), 0);
        assert_eq!(v.count_on(), 1);
    }

    #[test]
    fn startup_trigger_cases() {
        assert!(check_startup_trigger(0.5e9, 1.2e9));
        assert!(!check_startup_trigger(0.5e9, 0.0));
        assert!(!check_startup_trigger(1.2e9, 1.2e9));
    }

    #[test]
    fn sleep_signal_floors_at_threshold() {
        assert!((compute_sleep_signal(2.0e9, 0.0, 0.5e9) - 2.0e9).abs() < EPS);
        assert!((compute_sleep_signal(0.2e9, 0.0, 0.5e9) - 0.5e9).abs() < EPS);
        assert!((compute_sleep_signal(0.5e9, 0.0, 0.5e9) - 0.5e9).abs() < EPS);
    }

    #[test]
    fn wake_signal_floors_at_threshold() {
        assert!((compute_wake_signal(5.0e9, 1.0e9, 0.5e9) - 4.0e9).abs() < EPS);
        assert!((compute_wake_signal(0.0, 1.0e9, 0.5e9) - 0.5e9).abs() < EPS);
        assert!((compute_wake_signal(1.5e9, 1.0e9, 0.5e9) - 0.5e9).abs() < EPS);
    }

    #[test]
    fn low_demand_sleeps_smallest_radio_first() {
        let mut n = two_radio_node();
        let out = step_controller(&mut n, 1.0e9, 1.0, &TransitionMatrix::default(), &mut rng());
        let kinds: Vec<ActionKind> = out.actions.iter().map(|a| a.kind).collect();
        assert_eq!(kinds, vec![ActionKind::GoDeepSleep, ActionKind::PowerOff]);
        assert_eq!(out.actions[0].radio_index, 0, "smaller radio sleeps first");
        assert_eq!(n.radios[0].state, RadioState::DeepSleep);
        assert_eq!(n.radios[1].state, RadioState::Serving);
        assert!((out.power_w - 83.0).abs() < EPS);
    }

    #[test]
    fn on_floor_refuses_emptying_the_node() {
        let mut n = two_radio_node();
        // Zero demand asks for maximal sleeping; the surplus rule plus the
        // floor keep the larger radio serving.
        let out = step_controller(&mut n, 0.0, 1.0, &TransitionMatrix::default(), &mut rng());
        assert_eq!(out.states.count_on(), 1);
        assert_eq!(n.on_count(), 1);

        // A direct all-off request through sync is also cut short.
        let mut m = two_radio_node();
        sync_states(&[RadioState::DeepSleep, RadioState::DeepSleep], &mut m).unwrap();
        assert_eq!(m.on_count(), 1);
    }

    #[test]
    fn timer_boundary_is_exact() {
        let mut n = node(vec![
            radio("r0", 1.3e9, RadioState::Startup),
            radio("r1", 8.41e9, RadioState::Serving),
        ]);
        let m = TransitionMatrix::default();
        let mut r = rng();
        for tick in 1..=59 {
            step_controller(&mut n, 8.0e9, 1.0, &m, &mut r);
            assert_eq!(n.radios[0].state, RadioState::Startup, "still starting at {tick}");
        }
        let out = step_controller(&mut n, 8.0e9, 1.0, &m, &mut r);
        assert_eq!(n.radios[0].state, RadioState::Serving);
        assert!(out
            .actions
            .iter()
            .any(|a| a.kind == ActionKind::StartupComplete));
    }

    #[test]
    fn wake_timer_is_exact_and_resets_idle_counter() {
        let mut n = node(vec![
            radio("r0", 1.3e9, RadioState::DeepSleep),
            radio("r1", 8.41e9, RadioState::Serving),
        ]);
        n.radios[0].idle_sleep_s = 5_000.0;
        let m = TransitionMatrix::default();
        let mut r = rng();
        // Demand above the wake margin triggers the wake immediately.
        let out = step_controller(&mut n, 8.4e9, 1.0, &m, &mut r);
        assert!(out.wake_triggered);
        assert_eq!(n.radios[0].state, RadioState::WakeUp);
        assert_eq!(n.radios[0].idle_sleep_s, 0.0);
        for _ in 1..=9 {
            step_controller(&mut n, 8.4e9, 1.0, &m, &mut r);
            assert_eq!(n.radios[0].state, RadioState::WakeUp);
        }
        step_controller(&mut n, 8.4e9, 1.0, &m, &mut r);
        assert_eq!(n.radios[0].state, RadioState::Serving);
    }

    #[test]
    fn pending_capacity_blocks_duplicate_wake_requests() {
        let mut n = node(vec![
            radio("r0", 8.41e9, RadioState::WakeUp),
            radio("r1", 1.3e9, RadioState::DeepSleep),
            radio("r2", 1.0e9, RadioState::Serving),
        ]);
        let out = step_controller(&mut n, 5.0e9, 1.0, &TransitionMatrix::default(), &mut rng());
        assert!(!out.wake_triggered, "committed capacity already covers demand");
        assert_eq!(n.radios[1].state, RadioState::DeepSleep);
    }

    #[test]
    fn wake_picks_largest_sleeper() {
        let mut n = node(vec![
            radio("r0", 1.3e9, RadioState::DeepSleep),
            radio("r1", 8.41e9, RadioState::DeepSleep),
            radio("r2", 1.0e9, RadioState::Serving),
        ]);
        let out = step_controller(&mut n, 5.0e9, 1.0, &TransitionMatrix::default(), &mut rng());
        assert!(out.wake_triggered);
        assert_eq!(n.radios[1].state, RadioState::WakeUp);
        assert_eq!(n.radios[0].state, RadioState::DeepSleep);
    }

    #[test]
    fn completely_off_radio_needs_the_startup_trigger() {
        // Margin rule alone must not boot a completely-off radio.
        let mut n = node(vec![
            radio("r0", 1.3e9, RadioState::CompletelyOff),
            radio("r1", 8.41e9, RadioState::Serving),
        ]);
        let m = TransitionMatrix::default();
        let out = step_controller(&mut n, 8.35e9, 1.0, &m, &mut rng());
        assert!(out.actions.is_empty());
        assert_eq!(n.radios[0].state, RadioState::CompletelyOff);

        // Demand above serving capacity boots it, with the supply action logged.
        let out = step_controller(&mut n, 8.5e9, 1.0, &m, &mut rng());
        let kinds: Vec<ActionKind> = out.actions.iter().map(|a| a.kind).collect();
        assert_eq!(kinds, vec![ActionKind::GoStartup, ActionKind::PowerOn]);
        assert_eq!(n.radios[0].state, RadioState::Startup);
    }

    #[test]
    fn startup_and_wakeup_failures_follow_the_diagram() {
        let m = TransitionMatrix {
            p_fail_startup: 1.0,
            p_fail_wakeup: 1.0,
        };
        let mut n = node(vec![
            radio("r0", 1.3e9, RadioState::Startup),
            radio("r1", 8.41e9, RadioState::Serving),
        ]);
        n.radios[0].time_in_state_s = 59.0;
        let out = step_controller(&mut n, 8.0e9, 1.0, &m, &mut rng());
        assert_eq!(n.radios[0].state, RadioState::CompletelyOff);
        assert!(out.actions.iter().any(|a| a.kind == ActionKind::StartupFail));

        let mut n = node(vec![
            radio("r0", 1.3e9, RadioState::WakeUp),
            radio("r1", 8.41e9, RadioState::Serving),
        ]);
        n.radios[0].time_in_state_s = 9.0;
        let out = step_controller(&mut n, 8.0e9, 1.0, &m, &mut rng());
        assert_eq!(n.radios[0].state, RadioState::DeepSleep);
        assert!(out.actions.iter().any(|a| a.kind == ActionKind::WakeUpFail));
    }

    #[test]
    fn idle_radio_retires_at_exactly_the_off_period() {
        let mut n = two_radio_node();
        n.thresholds.completely_off_period_s = 100.0;
        n.radios[0].state = RadioState::DeepSleep;
        let m = TransitionMatrix::default();
        let mut r = rng();
        // Demand high enough to forbid sleeping the big radio, low enough to
        // leave the small one in deep sleep: between wake and sleep margins.
        for tick in 1..=99 {
            step_controller(&mut n, 8.0e9, 1.0, &m, &mut r);
            assert_eq!(n.radios[0].state, RadioState::DeepSleep, "tick {tick}");
        }
        let out = step_controller(&mut n, 8.0e9, 1.0, &m, &mut r);
        assert_eq!(n.radios[0].state, RadioState::CompletelyOff);
        assert!(out
            .actions
            .iter()
            .any(|a| a.kind == ActionKind::GoCompletelyOff));
        assert!(out.actions.iter().any(|a| a.kind == ActionKind::PowerOff));
    }

    #[test]
    fn sync_examples_from_the_state_diagram() {
        // Upstream sleeps its second radio: follower follows.
        let mut n = two_radio_node();
        let acts = sync_states(&[RadioState::Serving, RadioState::DeepSleep], &mut n).unwrap();
        assert_eq!(acts.len(), 2);
        assert_eq!(acts[0].kind, ActionKind::GoDeepSleep);
        assert_eq!(acts[0].radio_index, 1);
        assert_eq!(n.radios[1].state, RadioState::DeepSleep);

        // Identical vectors are a fixed point.
        let mut n = two_radio_node();
        let acts = sync_states(&[RadioState::Serving, RadioState::Serving], &mut n).unwrap();
        assert!(acts.is_empty());

        // A sleeping follower radio chases an upstream serving radio through
        // wake-up and reaches serving after the wake timer.
        let mut n = node(vec![
            radio("r0", 1.3e9, RadioState::Serving),
            radio("r1", 8.41e9, RadioState::DeepSleep),
        ]);
        let acts = sync_states(&[RadioState::Serving, RadioState::Serving], &mut n).unwrap();
        assert_eq!(acts[0].kind, ActionKind::GoWakeUp);
        let m = TransitionMatrix::default();
        let mut r = rng();
        for _ in 0..10 {
            step_follower(&mut n, 1.0, &m, &mut r);
        }
        assert_eq!(n.radios[1].state, RadioState::Serving);
    }

    #[test]
    fn sync_rejects_mismatched_radio_counts() {
        let mut n = two_radio_node();
        let err = sync_states(&[RadioState::Serving], &mut n).unwrap_err();
        assert!(matches!(err, FsmError::RadioCountMismatch { .. }));
    }

    #[test]
    fn sync_handover_never_dips_below_one_on_radio() {
        // Upstream swapped which radio serves; the follower wakes one and
        // sleeps the other in the same pass.
        let mut n = node(vec![
            radio("r0", 1.3e9, RadioState::Serving),
            radio("r1", 8.41e9, RadioState::DeepSleep),
        ]);
        let acts = sync_states(&[RadioState::DeepSleep, RadioState::WakeUp], &mut n).unwrap();
        assert_eq!(n.on_count(), 1);
        assert_eq!(n.radios[0].state, RadioState::DeepSleep);
        assert_eq!(n.radios[1].state, RadioState::WakeUp);
        assert_eq!(acts.first().unwrap().kind, ActionKind::GoWakeUp);
    }

    #[test]
    fn sync_converges_within_the_longest_timer() {
        let mut upstream = two_radio_node();
        upstream.radios[0].state = RadioState::Serving;
        upstream.radios[1].state = RadioState::DeepSleep;
        let mut follower = node(vec![
            radio("r0", 1.3e9, RadioState::CompletelyOff),
            radio("r1", 8.41e9, RadioState::Serving),
        ]);
        let m = TransitionMatrix::default();
        let mut r = rng();
        let horizon = follower.radios[0]
            .startup_s
            .max(follower.radios[0].wakeup_s) as usize;
        sync_states(&upstream.states(), &mut follower).unwrap();
        for _ in 0..horizon {
            step_follower(&mut follower, 1.0, &m, &mut r);
            sync_states(&upstream.states(), &mut follower).unwrap();
        }
        for (u, f) in upstream.radios.iter().zip(&follower.radios) {
            assert_eq!(u.state.is_on(), f.state.is_on(), "physical states match");
        }
    }

    #[test]
    fn sync_message_round_trips_through_json() {
        let n = two_radio_node();
        let msg = StateSyncMsg::capture(&n, 42);
        let text = serde_json::to_string(&msg).unwrap();
        let back: StateSyncMsg = serde_json::from_str(&text).unwrap();
        assert_eq!(back, msg);
        assert_eq!(back.states(), n.states());
    }

    #[test]
    fn every_state_is_reachable_from_completely_off() {
        let mut n = node(vec![
            radio("r0", 1.3e9, RadioState::CompletelyOff),
            radio("r1", 8.41e9, RadioState::CompletelyOff),
        ]);
        n.thresholds.completely_off_period_s = 200.0;
        let m = TransitionMatrix::default();
        let mut r = rng();
        let mut seen = std::collections::HashSet::new();
        let mut record = |n: &MicrowaveNode| {
            for radio in &n.radios {
                seen.insert(radio.state);
            }
        };
        record(&n);
        // Positive demand boots both radios out of completely off.
        for _ in 0..61 {
            step_controller(&mut n, 9.0e9, 1.0, &m, &mut r);
            record(&n);
        }
        // Low demand sends the small radio to deep sleep.
        for _ in 0..50 {
            step_controller(&mut n, 2.0e9, 1.0, &m, &mut r);
            record(&n);
        }
        // Demand close to the big radio's rate pulls it back through wake-up.
        for _ in 0..15 {
            step_controller(&mut n, 8.4e9, 1.0, &m, &mut r);
            record(&n);
        }
        // Back to sleep and held there past the off period: it retires.
        for _ in 0..260 {
            step_controller(&mut n, 2.0e9, 1.0, &m, &mut r);
            record(&n);
        }
        // The startup trigger boots the retired radio again.
        for _ in 0..20 {
            step_controller(&mut n, 9.5e9, 1.0, &m, &mut r);
            record(&n);
        }
        for state in RadioState::ALL {
            assert!(seen.contains(&state), "never visited {state:?}");
        }
    }

    #[test]
    fn fuzz_run_preserves_invariants() {
        let m = TransitionMatrix {
            p_fail_startup: 0.02,
            p_fail_wakeup: 0.02,
        };
        let mut upstream = two_radio_node();
        upstream.thresholds.completely_off_period_s = 5_000.0;
        let mut follower = two_radio_node();
        follower.thresholds.completely_off_period_s = 5_000.0;
        let mut r = ChaCha20Rng::seed_from_u64(1234);
        let mut demand_rng = ChaCha20Rng::seed_from_u64(99);
        let mut prev_upstream = upstream.states();

        for tick in 0..100_000u64 {
            let demand: f64 = if demand_rng.gen_bool(0.05) {
                0.0
            } else {
                demand_rng.gen_range(0.0..1.05e10)
            };
            let up = step_controller(&mut upstream, demand, 1.0, &m, &mut r);
            let down = step_follower(&mut follower, 1.0, &m, &mut r);
            let sync_actions = sync_states(&prev_upstream, &mut follower).unwrap();

            for a in up
                .actions
                .iter()
                .chain(down.actions.iter())
                .chain(sync_actions.iter())
            {
                assert!(
                    TransitionMatrix::edge_allowed(a.from, a.to),
                    "tick {tick}: illegal edge {:?}->{:?}",
                    a.from,
                    a.to
                );
            }
            for v in [&up.states, &down.states] {
                for row in v.to_matrix() {
                    assert_eq!(row.iter().map(|&b| usize::from(b)).sum::<usize>(), 1);
                }
            }
            assert!(upstream.on_count() >= 1, "tick {tick}: upstream floor");
            assert!(follower.on_count() >= 1, "tick {tick}: follower floor");
            assert!(up.power_w >= 0.0 && down.power_w >= 0.0);
            prev_upstream = upstream.states();
        }
    }
}
