use std::collections::BTreeMap;

use ran_sim::a3::A3Config;
use ran_sim::kpm::feature;
use ran_sim::{EventKind, KpmReport, ReportKind, SimConfig, SimEvent, World};
use serde::{Deserialize, Serialize};

use crate::baselines::{ControllerKind, Decision, RlfConfig, RuleController};
use crate::error::{AgentError, Result};
use crate::mask::{compute_masks, ActionMask, MaskConfig};
use crate::policy::HandoverAction;
use crate::reward::{compute_reward, DelayMeter, DelayRecord};

fn default_decision_period_ms() -> f64 {
    120.0
}

fn default_kappa() -> Option<f64> {
    Some(1.0)
}

/// A simulator configuration plus everything the controllers need.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub sim: SimConfig,
    #[serde(default = "default_decision_period_ms")]
    pub decision_period_ms: f64,
    #[serde(default)]
    pub mask: MaskConfig,
    /// Reservation factor for learned handovers; `None` reserves nothing.
    #[serde(default = "default_kappa")]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub a3: A3Config,
    #[serde(default)]
    pub rlf: RlfConfig,
}

impl Scenario {
    pub fn new(sim: SimConfig) -> Self {
        Scenario {
            sim,
            decision_period_ms: default_decision_period_ms(),
            mask: MaskConfig::default(),
            kappa: default_kappa(),
            a3: A3Config::default(),
            rlf: RlfConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let timing = self.sim.timing()?;
        self.mask.validate()?;
        self.a3.validate()?;
        let us = self.decision_period_ms * 1000.0;
        if !(us > 0.0) || (us - us.round()).abs() > 1e-6 || us.round() as u64 % timing.tti_us != 0 {
            return Err(AgentError::config(
                "decision_period_ms",
                "must be a positive multiple of tti_ms",
            ));
        }
        if let Some(k) = self.kappa {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(AgentError::config(
                    "kappa",
                    format!("must be finite and >= 0, got {k}"),
                ));
            }
        }
        if !(self.rlf.window_ms >= 0.0) {
            return Err(AgentError::config("rlf.window_ms", "must be >= 0"));
        }
        Ok(())
    }

    pub fn decision_us(&self) -> u64 {
        (self.decision_period_ms * 1000.0).round() as u64
    }

    pub fn n_ues(&self) -> usize {
        self.sim.ues.len()
    }

    pub fn n_cells(&self) -> usize {
        self.sim.cells.len()
    }

    pub fn with_seed(&self, seed: u64) -> Scenario {
        let mut s = self.clone();
        s.sim.seed = seed;
        s
    }

    /// Decision steps covering `duration_ms`, rounded down.
    pub fn steps_for(&self, duration_ms: f64) -> usize {
        (duration_ms / self.decision_period_ms).floor().max(0.0) as usize
    }
}

/// Run-level counters.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EnvMetrics {
    /// End-to-end delay of every delivered packet, both directions, in ms.
    #[serde(skip)]
    pub delays_ms: Vec<f64>,
    pub generated: u64,
    pub dropped: u64,
    pub handovers: u64,
    pub rlf: u64,
    pub rejected: u64,
    pub decisions: u64,
    /// Non-serving cells removed by the action mask, summed over decisions.
    pub mask_vetoes: u64,
    /// Executed handovers toward cells that the full mask would have removed.
    pub mask_violations: u64,
    pub reward_sum: f64,
    pub regret_steps: u64,
    pub reward_steps: u64,
}

impl EnvMetrics {
    pub fn loss_rate(&self) -> f64 {
        if self.generated == 0 {
            0.0
        } else {
            self.dropped as f64 / self.generated as f64
        }
    }

    pub fn merge(&mut self, other: &EnvMetrics) {
        self.delays_ms.extend_from_slice(&other.delays_ms);
        self.generated += other.generated;
        self.dropped += other.dropped;
        self.handovers += other.handovers;
        self.rlf += other.rlf;
        self.rejected += other.rejected;
        self.decisions += other.decisions;
        self.mask_vetoes += other.mask_vetoes;
        self.mask_violations += other.mask_violations;
        self.reward_sum += other.reward_sum;
        self.regret_steps += other.regret_steps;
        self.reward_steps += other.reward_steps;
    }
}

/// Latest normalized KPM values, used for the snapshot observation.
#[derive(Clone, Debug, Default)]
struct KpmCache {
    ue: BTreeMap<usize, Vec<f64>>,
    cell: BTreeMap<usize, Vec<f64>>,
    edge: BTreeMap<(usize, usize), (u64, Vec<f64>)>,
    edge_time: BTreeMap<usize, u64>,
}

impl KpmCache {
    fn absorb(&mut self, reports: &[KpmReport]) {
        for r in reports {
            match r.kind {
                ReportKind::Ue { ue } => {
                    self.ue.insert(
                        ue,
                        feature::UE
                            .iter()
                            .map(|&id| r.value(id).unwrap_or(0.0))
                            .collect(),
                    );
                }
                ReportKind::Cell { cell } => {
                    self.cell.insert(
                        cell,
                        feature::CELL
                            .iter()
                            .map(|&id| r.value(id).unwrap_or(0.0))
                            .collect(),
                    );
                }
                ReportKind::Edge { ue, cell } => {
                    let v = feature::EDGE
                        .iter()
                        .map(|&id| r.value(id).unwrap_or(0.0))
                        .collect();
                    self.edge.insert((ue, cell), (r.timestamp_us, v));
                    self.edge_time.insert(ue, r.timestamp_us);
                }
            }
        }
    }
}

/// Width of the instantaneous-KPM observation before padding.
pub fn snapshot_width(n_cells: usize) -> usize {
    feature::UE.len() + 4 * n_cells
}

/// One simulator instance with per-UE controllers. Rule controllers act on
/// every measurement; learned UEs are driven from outside through
/// [`HoEnv::apply`] between calls to [`HoEnv::advance`].
#[derive(Clone, Debug)]
pub struct HoEnv {
    scenario: Scenario,
    world: World,
    kinds: Vec<ControllerKind>,
    rules: Vec<RuleController>,
    meters: Vec<DelayMeter>,
    pending: Vec<KpmReport>,
    snapshot: KpmCache,
    metrics: EnvMetrics,
    last_measure_us: Vec<u64>,
    event_log: Option<Vec<SimEvent>>,
}

impl HoEnv {
    pub fn new(scenario: &Scenario, kinds: Vec<ControllerKind>) -> Result<Self> {
        scenario.validate()?;
        if kinds.len() != scenario.n_ues() {
            return Err(AgentError::config(
                "controllers",
                format!("{} controllers for {} UEs", kinds.len(), scenario.n_ues()),
            ));
        }
        for k in &kinds {
            k.validate()?;
        }
        let mut world = World::new(scenario.sim.clone())?;
        let pending = world.emit_kpm();
        let mut snapshot = KpmCache::default();
        snapshot.absorb(&pending);
        let meters = world
            .ues()
            .iter()
            .map(|u| DelayMeter::start(&u.stats))
            .collect();
        let rules = kinds
            .iter()
            .map(|k| RuleController::new(k.clone(), scenario.a3, scenario.rlf))
            .collect();
        Ok(HoEnv {
            scenario: scenario.clone(),
            last_measure_us: vec![0; scenario.n_ues()],
            world,
            kinds,
            rules,
            meters,
            pending,
            snapshot,
            metrics: EnvMetrics::default(),
            event_log: None,
        })
    }

    /// Every UE under the same controller.
    pub fn uniform(scenario: &Scenario, kind: ControllerKind) -> Result<Self> {
        Self::new(scenario, vec![kind; scenario.n_ues()])
    }

    /// Keeps every simulator event for export.
    pub fn record_events(&mut self) {
        self.event_log.get_or_insert_with(Vec::new);
    }

    pub fn events(&self) -> &[SimEvent] {
        self.event_log.as_deref().unwrap_or(&[])
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn now_us(&self) -> u64 {
        self.world.now_us()
    }

    pub fn kind(&self, ue: usize) -> &ControllerKind {
        &self.kinds[ue]
    }

    pub fn learned_ues(&self) -> Vec<usize> {
        (0..self.kinds.len())
            .filter(|&i| self.kinds[i].is_learned())
            .collect()
    }

    pub fn metrics(&self) -> &EnvMetrics {
        &self.metrics
    }

    /// KPM reports produced since the last call, in emission order.
    pub fn take_reports(&mut self) -> Vec<KpmReport> {
        std::mem::take(&mut self.pending)
    }

    /// The real feasibility mask for `ue`.
    pub fn full_mask(&self, ue: usize) -> ActionMask {
        compute_masks(
            self.world.ue(ue),
            self.world.radio(ue),
            self.world.cells(),
            &self.scenario.mask,
        )
    }

    /// The mask the UE's controller acts under.
    pub fn mask(&self, ue: usize) -> ActionMask {
        let u = self.world.ue(ue);
        if self.kinds[ue].uses_mask() {
            self.full_mask(ue)
        } else {
            ActionMask::unmasked(
                self.world.cells().len(),
                u.serving,
                u.ho_state == ran_sim::HoState::Idle,
            )
        }
    }

    /// `[UE KPM || per cell (rsrp, serving, ul util, dl util)]`, zero padded
    /// to `width`.
    pub fn snapshot_observation(&self, ue: usize, width: usize) -> Result<Vec<f64>> {
        let n = self.world.cells().len();
        if snapshot_width(n) > width {
            return Err(AgentError::config(
                "policy.obs_dim",
                format!(
                    "snapshot needs {} values, observation holds {width}",
                    snapshot_width(n)
                ),
            ));
        }
        let mut obs = self
            .snapshot
            .ue
            .get(&ue)
            .cloned()
            .unwrap_or_else(|| vec![0.0; feature::UE.len()]);
        let latest = self.snapshot.edge_time.get(&ue).copied();
        for cell in 0..n {
            match self.snapshot.edge.get(&(ue, cell)) {
                Some((t, v)) if Some(*t) == latest => obs.extend([v[0], v[3]]),
                _ => obs.extend([0.0, 0.0]),
            }
            match self.snapshot.cell.get(&cell) {
                Some(v) => obs.extend([v[4], v[5]]),
                None => obs.extend([0.0, 0.0]),
            }
        }
        obs.resize(width, 0.0);
        Ok(obs)
    }

    /// Executes a learned decision. Stay actions only count the decision.
    pub fn apply(&mut self, ue: usize, action: HandoverAction, mask: &ActionMask) -> Result<()> {
        self.metrics.decisions += 1;
        let serving = self.world.ue(ue).serving;
        self.metrics.mask_vetoes += (0..mask.combined.len())
            .filter(|&j| j != serving && !mask.combined[j])
            .count() as u64;
        if !action.ho {
            return Ok(());
        }
        if !mask.combined[action.target] || !mask.ho_allowed {
            return Err(AgentError::Contract(format!(
                "ue {ue}: handover to masked cell {}",
                action.target
            )));
        }
        if !self.full_mask(ue).combined[action.target] {
            self.metrics.mask_violations += 1;
        }
        self.world
            .execute_handover(ue, action.target, self.scenario.kappa)?;
        Ok(())
    }

    /// Advances `ttis` TTIs; rule controllers act after every measurement.
    pub fn advance(&mut self, ttis: u64) -> Result<()> {
        let meas = self.world.timing().measurement_us;
        for _ in 0..ttis {
            let t = self.world.now_us();
            let measured = t > 0 && t % meas == 0;
            let events = self.world.step();
            self.record(&events);
            let reports = self.world.take_kpm();
            self.snapshot.absorb(&reports);
            self.pending.extend(reports);
            if measured {
                self.run_rules(t)?;
            }
        }
        Ok(())
    }

    fn run_rules(&mut self, t: u64) -> Result<()> {
        for ue in 0..self.rules.len() {
            if self.kinds[ue].is_learned() {
                continue;
            }
            let elapsed = t - self.last_measure_us[ue];
            self.last_measure_us[ue] = t;
            match self.rules[ue].decide(&mut self.world, ue, elapsed) {
                Some(Decision::Handover { target, kappa }) => {
                    self.world.execute_handover(ue, target, kappa)?;
                }
                Some(Decision::Reestablish { target }) => {
                    self.world.reestablish(ue, target)?;
                }
                None => {}
            }
        }
        Ok(())
    }

    fn record(&mut self, events: &[SimEvent]) {
        for e in events {
            match &e.kind {
                EventKind::PacketDelivered { delay_us, .. } => {
                    self.metrics.delays_ms.push(*delay_us as f64 / 1000.0)
                }
                EventKind::HandoverExecuted { .. } => self.metrics.handovers += 1,
                EventKind::RadioLinkFailure { .. } => self.metrics.rlf += 1,
                EventKind::HandoverRejected { .. } => self.metrics.rejected += 1,
                _ => {}
            }
        }
        if let Some(log) = &mut self.event_log {
            log.extend_from_slice(events);
        }
    }

    /// Advances one decision period and returns every UE's delay record.
    pub fn step_decision(&mut self) -> Result<Vec<DelayRecord>> {
        let ttis = self.scenario.decision_us() / self.world.timing().tti_us;
        self.advance(ttis)?;
        self.rewards()
    }

    /// Per-UE delay regret since the previous call.
    pub fn rewards(&mut self) -> Result<Vec<DelayRecord>> {
        let mut out = Vec::with_capacity(self.meters.len());
        for ue in 0..self.meters.len() {
            let u = self.world.ue(ue);
            let [ul, dl] = self.meters[ue].lap(&u.stats);
            let rec = compute_reward(ul, dl, u.delay_requirement_ms)?;
            self.metrics.reward_sum += rec.reward;
            self.metrics.reward_steps += 1;
            self.metrics.regret_steps += (rec.regret > 0.0) as u64;
            out.push(rec);
        }
        Ok(out)
    }

    /// Final counters, with traffic totals taken from the simulator.
    pub fn finish(&self) -> EnvMetrics {
        let mut m = self.metrics.clone();
        m.generated = self
            .world
            .ues()
            .iter()
            .map(|u| u.stats.generated.iter().sum::<u64>())
            .sum();
        m.dropped = self
            .world
            .ues()
            .iter()
            .map(|u| u.stats.dropped.iter().sum::<u64>())
            .sum();
        m
    }
}
