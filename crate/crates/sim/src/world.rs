use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::a3::{evaluate_a3, A3Config};
use crate::cell::{apply_reservation, compute_cell_load, CellState, ReservationRequest};
use crate::config::{SimConfig, Timing};
use crate::error::{Result, SimError};
use crate::event::{EventKind, SimEvent};
use crate::kpm::{feature, KpmReport, ReportKind};
use crate::mobility::Mobility;
use crate::queue::{Direction, Packet, QueueState};
use crate::radio::{self, bytes_per_prb, Ar1, RadioSample, ShadowingState};
use crate::scheduler::{schedule_prbs, UeDemand};
use crate::traffic::TrafficSource;
use crate::ue::{HoState, UeState, UeStats};

const STREAM_TRAFFIC: u64 = 1 << 20;
const STREAM_SHADOW: u64 = 2 << 20;
const STREAM_BACKGROUND: u64 = 3 << 20;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HandoverOutcome {
    Started { reserved_prbs: u32 },
    Rejected,
}

/// Packet bookkeeping for one UE; `generated = delivered + dropped + queued + in_flight`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PacketAccount {
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub queued: u64,
    pub in_flight: u64,
}

#[derive(Clone, Debug, Default)]
struct UeInterval {
    delivered_bytes: [u64; 2],
    generated_bytes: [u64; 2],
    prbs: [u64; 2],
    ul_delay_sum_ms: f64,
    ul_delivered: u64,
    dl_generated: u64,
    dl_dropped: u64,
}

#[derive(Clone, Debug, Default)]
struct CellInterval {
    delivered_bytes: [u64; 2],
    prbs: [u64; 2],
}

#[derive(Clone, Debug)]
struct Background {
    mean: f64,
    noise: Ar1,
    rng: ChaCha8Rng,
}

/// Complete simulator state. Identical configuration (seed included) yields
/// a bit-identical event stream.
#[derive(Clone, Debug)]
pub struct World {
    cfg: SimConfig,
    timing: Timing,
    now_us: u64,
    cells: Vec<CellState>,
    ues: Vec<UeState>,
    mobility: Vec<Mobility>,
    sources: Vec<TrafficSource>,
    shadowing: ShadowingState,
    radio: Vec<RadioSample>,
    background: Vec<Background>,
    ue_interval: Vec<UeInterval>,
    cell_interval: Vec<CellInterval>,
    interval_ticks: [u64; 2],
    outbox: Vec<SimEvent>,
    kpm_outbox: Vec<KpmReport>,
    last_kpm_us: Option<u64>,
}

impl World {
    pub fn new(cfg: SimConfig) -> Result<World> {
        let timing = cfg.timing()?;
        let n_cells = cfg.cells.len();
        let n_ues = cfg.ues.len();
        let mut cells: Vec<CellState> = cfg
            .cells
            .iter()
            .enumerate()
            .map(|(j, c)| CellState::new(j, c.position, c.prb_capacity))
            .collect();
        for (cell, c) in cells.iter_mut().zip(&cfg.cells) {
            cell.load = c.background_load;
            cell.load_avg = c.background_load;
        }
        let shadowing = ShadowingState::new(
            n_ues,
            n_cells,
            cfg.radio.shadow_phi,
            cfg.radio.shadow_sigma_db,
            (0..n_ues)
                .map(|i| stream(cfg.seed, STREAM_SHADOW + i as u64))
                .collect(),
        );
        let background = cfg
            .cells
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let mut rng = stream(cfg.seed, STREAM_BACKGROUND + j as u64);
                let s = &cfg.scheduler;
                let noise = Ar1::stationary(s.background_phi, s.background_noise_std, &mut rng);
                Background {
                    mean: c.background_load,
                    noise,
                    rng,
                }
            })
            .collect();

        let mut world = World {
            timing,
            now_us: 0,
            ues: Vec::with_capacity(n_ues),
            mobility: cfg.ues.iter().map(|u| u.mobility.clone()).collect(),
            sources: cfg
                .ues
                .iter()
                .enumerate()
                .map(|(i, u)| {
                    TrafficSource::new(
                        u.traffic.clone(),
                        stream(cfg.seed, STREAM_TRAFFIC + i as u64),
                    )
                })
                .collect(),
            shadowing,
            radio: Vec::with_capacity(n_ues),
            background,
            ue_interval: vec![UeInterval::default(); n_ues],
            cell_interval: vec![CellInterval::default(); n_cells],
            interval_ticks: [0, 0],
            outbox: Vec::new(),
            kpm_outbox: Vec::new(),
            last_kpm_us: None,
            cells: Vec::new(),
            cfg,
        };
        for (i, u) in world.cfg.ues.iter().enumerate() {
            let (position, velocity) = u.mobility.state_at(0.0);
            let ue = UeState {
                id: i,
                position,
                velocity,
                serving: u.initial_cell.unwrap_or(0),
                traffic: u.traffic.clone(),
                ul_queue: QueueState::new(timing.drop_deadline_us),
                dl_queue: QueueState::new(timing.drop_deadline_us),
                delay_requirement_ms: u.delay_requirement_ms,
                ho_state: HoState::Idle,
                a3_timer: vec![0; n_cells],
                cold_start_until_us: 0,
                prb_usage_avg: 0.0,
                pf_avg_bytes: 0.0,
                stats: UeStats::default(),
            };
            world.ues.push(ue);
        }
        world.cells = cells;
        for i in 0..n_ues {
            let rsrp = world.rsrp_row(i);
            let serving = world.cfg.ues[i]
                .initial_cell
                .unwrap_or_else(|| radio::argmax(&rsrp));
            world.ues[i].serving = serving;
            world.cells[serving].attached.insert(i);
            world.radio.push(RadioSample {
                ue: i,
                timestamp_us: 0,
                serving,
                rsrp_dbm: Vec::new(),
                rsrq_db: Vec::new(),
                sinr_db: Vec::new(),
                cqi: 0,
                reported: Vec::new(),
            });
            world.measure(i);
        }
        Ok(world)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn timing(&self) -> &Timing {
        &self.timing
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn ues(&self) -> &[UeState] {
        &self.ues
    }

    pub fn ue(&self, i: usize) -> &UeState {
        &self.ues[i]
    }

    pub fn radio(&self, ue: usize) -> &RadioSample {
        &self.radio[ue]
    }

    pub fn radio_samples(&self) -> &[RadioSample] {
        &self.radio
    }

    /// True when the upcoming step starts a measurement period.
    pub fn is_measurement_boundary(&self) -> bool {
        self.now_us % self.timing.measurement_us == 0
    }

    pub fn packet_account(&self, ue: usize) -> PacketAccount {
        let u = &self.ues[ue];
        let in_flight = (u.ul_queue.in_flight() + u.dl_queue.in_flight()) as u64;
        PacketAccount {
            generated: u.stats.generated.iter().sum(),
            delivered: u.stats.delivered.iter().sum(),
            dropped: u.stats.dropped.iter().sum(),
            queued: (u.ul_queue.len() + u.dl_queue.len()) as u64 - in_flight,
            in_flight,
        }
    }

    fn rsrp_row(&self, ue: usize) -> Vec<f64> {
        let pos = self.ues[ue].position;
        self.cells
            .iter()
            .map(|c| {
                radio::compute_rsrp(
                    &self.cfg.radio,
                    c.position,
                    pos,
                    self.shadowing.get(ue, c.id),
                )
            })
            .collect()
    }

    fn measure(&mut self, ue: usize) {
        let rsrp = self.rsrp_row(ue);
        let loads: Vec<f64> = self.cells.iter().map(|c| c.load_avg).collect();
        self.radio[ue] = radio::measure(
            &self.cfg.radio,
            ue,
            self.ues[ue].serving,
            self.now_us,
            rsrp,
            &loads,
        );
    }

    /// Runs the A3 rule for `ue` against its latest measurement.
    pub fn evaluate_a3(&mut self, ue: usize, cfg: &A3Config, elapsed_us: u64) -> Option<usize> {
        evaluate_a3(&mut self.ues[ue], &self.radio[ue], cfg, elapsed_us)
    }

    /// Ceiling of the UE's recent PRB usage per TTI.
    pub fn recent_prb_usage(&self, ue: usize) -> u32 {
        (self.ues[ue].prb_usage_avg - 1e-9).ceil().max(0.0) as u32
    }

    /// Starts Phase 2 toward `target`. With `kappa`, the target reserves
    /// `ceil(kappa * b_serv)` PRBs with priority until the reservation expires.
    /// A UE that is already handing over is rejected with a warning event.
    pub fn execute_handover(
        &mut self,
        ue: usize,
        target: usize,
        kappa: Option<f64>,
    ) -> Result<HandoverOutcome> {
        if ue >= self.ues.len() {
            return Err(SimError::UnknownUe(ue));
        }
        if target >= self.cells.len() {
            return Err(SimError::UnknownCell(target));
        }
        let serving = self.ues[ue].serving;
        if target == serving {
            return Err(SimError::Handover(format!(
                "ue {ue} is already served by cell {target}"
            )));
        }
        if self.ues[ue].ho_state != HoState::Idle {
            log::warn!(
                "t={}us: handover of ue {ue} rejected, state {:?}",
                self.now_us,
                self.ues[ue].ho_state
            );
            self.outbox.push(SimEvent {
                time_us: self.now_us,
                ue: Some(ue),
                cell: Some(target),
                kind: EventKind::HandoverRejected {
                    reason: format!("{:?}", self.ues[ue].ho_state),
                },
            });
            return Ok(HandoverOutcome::Rejected);
        }
        let execute_at_us = self.now_us + self.timing.phase2_us;
        let mut reserved_prbs = 0;
        if let Some(kappa) = kappa {
            let req = ReservationRequest {
                ue,
                b_serv: self.recent_prb_usage(ue),
                kappa,
                expiry_us: execute_at_us
                    + self.timing.interruption_us
                    + self.timing.reservation_hold_us,
            };
            reserved_prbs =
                apply_reservation(&mut self.cells[target], &req, &self.cfg.reservation)?;
        }
        self.ues[ue].ho_state = HoState::Preparing {
            target,
            execute_at_us,
        };
        self.ues[ue].reset_a3();
        self.outbox.push(SimEvent {
            time_us: self.now_us,
            ue: Some(ue),
            cell: Some(serving),
            kind: EventKind::HandoverTriggered {
                from: serving,
                to: target,
                reserved_prbs,
            },
        });
        Ok(HandoverOutcome::Started { reserved_prbs })
    }

    /// Radio-link-failure recovery: immediate re-attach to `target` with the
    /// recovery interruption and no preparation.
    pub fn reestablish(&mut self, ue: usize, target: usize) -> Result<HandoverOutcome> {
        if ue >= self.ues.len() {
            return Err(SimError::UnknownUe(ue));
        }
        if target >= self.cells.len() {
            return Err(SimError::UnknownCell(target));
        }
        if self.ues[ue].ho_state != HoState::Idle {
            return Ok(HandoverOutcome::Rejected);
        }
        let from = self.ues[ue].serving;
        self.outbox.push(SimEvent {
            time_us: self.now_us,
            ue: Some(ue),
            cell: Some(from),
            kind: EventKind::RadioLinkFailure { from, to: target },
        });
        let until = self.now_us + self.timing.rlf_recovery_us;
        self.attach(ue, target, until);
        self.outbox.push(SimEvent {
            time_us: self.now_us,
            ue: Some(ue),
            cell: Some(target),
            kind: EventKind::HandoverExecuted {
                interruption_us: self.timing.rlf_recovery_us,
            },
        });
        Ok(HandoverOutcome::Started { reserved_prbs: 0 })
    }

    fn attach(&mut self, ue: usize, target: usize, until_us: u64) {
        let from = self.ues[ue].serving;
        self.cells[from].attached.remove(&ue);
        self.cells[from].allocations.remove(&ue);
        self.cells[target].attached.insert(ue);
        let u = &mut self.ues[ue];
        u.serving = target;
        u.ho_state = HoState::Interrupted { until_us };
        u.reset_a3();
        u.stats.handovers += 1;
        self.measure(ue);
    }

    fn interruption_us(&self, ue: usize, target: usize) -> u64 {
        let h = &self.cfg.handover;
        let rsrp = self.radio[ue].rsrp_dbm[target];
        let penalty_ms = if rsrp < h.weak_rsrp_threshold_dbm {
            ((h.weak_rsrp_threshold_dbm - rsrp) * h.weak_rsrp_penalty_ms_per_db)
                .min(h.weak_rsrp_penalty_max_ms)
        } else {
            0.0
        };
        self.timing.interruption_us + (penalty_ms * 1000.0).round() as u64
    }

    /// Drains KPM reports produced by `step` and `emit_kpm`.
    pub fn take_kpm(&mut self) -> Vec<KpmReport> {
        std::mem::take(&mut self.kpm_outbox)
    }

    /// Advances one TTI.
    pub fn step(&mut self) -> Vec<SimEvent> {
        let mut events = std::mem::take(&mut self.outbox);
        let t = self.now_us;
        let tti = self.timing.tti_us;
        let secs = t as f64 * 1e-6;

        for (u, m) in self.ues.iter_mut().zip(&self.mobility) {
            (u.position, u.velocity) = m.state_at(secs);
        }
        if t > 0 && t % self.timing.measurement_us == 0 {
            self.shadowing.advance();
            for i in 0..self.ues.len() {
                self.measure(i);
            }
        }

        for i in 0..self.ues.len() {
            match self.ues[i].ho_state {
                HoState::Preparing {
                    target,
                    execute_at_us,
                } if t >= execute_at_us => {
                    let interruption = self.interruption_us(i, target);
                    self.attach(i, target, t + interruption);
                    events.push(SimEvent {
                        time_us: t,
                        ue: Some(i),
                        cell: Some(target),
                        kind: EventKind::HandoverExecuted {
                            interruption_us: interruption,
                        },
                    });
                }
                HoState::Interrupted { until_us } if t >= until_us => {
                    let serving = self.ues[i].serving;
                    self.ues[i].ho_state = HoState::Idle;
                    if !self.cells[serving].reserved.contains_key(&i) {
                        self.ues[i].cold_start_until_us = t + self.timing.cold_start_us;
                    }
                    events.push(SimEvent {
                        time_us: t,
                        ue: Some(i),
                        cell: Some(serving),
                        kind: EventKind::HandoverCompleted,
                    });
                }
                _ => {}
            }
        }

        for i in 0..self.ues.len() {
            let (n_ul, n_dl) = self.sources[i].arrivals(t, tti);
            let size = self.sources[i].profile().packet_bytes;
            let u = &mut self.ues[i];
            for _ in 0..n_ul {
                u.ul_queue.push(Packet {
                    arrival_us: t,
                    eligible_us: t + self.timing.ul_grant_delay_us,
                    size,
                    sent: 0,
                });
            }
            for _ in 0..n_dl {
                u.dl_queue.push(Packet {
                    arrival_us: t,
                    eligible_us: t,
                    size,
                    sent: 0,
                });
            }
            let counts = [n_ul as u64, n_dl as u64];
            let iv = &mut self.ue_interval[i];
            for d in 0..2 {
                u.stats.generated[d] += counts[d];
                u.stats.generated_bytes[d] += counts[d] * size as u64;
                iv.generated_bytes[d] += counts[d] * size as u64;
            }
            iv.dl_generated += counts[1];
            for dir in Direction::BOTH {
                for p in u.queue_mut(dir).drop_expired(t) {
                    u.stats.dropped[dir.index()] += 1;
                    if dir == Direction::Downlink {
                        iv.dl_dropped += 1;
                    }
                    events.push(SimEvent {
                        time_us: t,
                        ue: Some(i),
                        cell: Some(u.serving),
                        kind: EventKind::PacketDropped {
                            dir,
                            bytes: p.size,
                            age_us: t - p.arrival_us,
                        },
                    });
                }
            }
        }

        for j in 0..self.cells.len() {
            self.schedule_cell(j, t, &mut events);
        }

        let end = t + tti;
        let alpha = 1.0 / self.cfg.scheduler.pf_window_ttis;
        for u in &mut self.ues {
            let hol = u.hol_delay_ms(end);
            u.stats.hol_sum_ms[0] += hol[0];
            u.stats.hol_sum_ms[1] += hol[1];
            u.stats.hol_samples += 1;
            let granted = self.cells[u.serving]
                .allocations
                .get(&u.id)
                .map_or(0, |g| g[0] + g[1]);
            u.prb_usage_avg += alpha * (granted as f64 - u.prb_usage_avg);
        }
        self.interval_ticks[0] += 1;
        self.interval_ticks[1] += 1;
        self.now_us = end;

        let reports = self.emit_kpm();
        if !reports.is_empty() {
            events.push(SimEvent {
                time_us: end,
                ue: None,
                cell: None,
                kind: EventKind::KpmEmitted {
                    reports: reports.len(),
                },
            });
            self.kpm_outbox.extend(reports);
        }
        events
    }

    fn schedule_cell(&mut self, j: usize, t: u64, events: &mut Vec<SimEvent>) {
        let tti = self.timing.tti_us;
        for (ue, r) in self.cells[j].expire_reservations(t) {
            if !self.cells[j].attached.contains(&ue) {
                events.push(SimEvent {
                    time_us: t,
                    ue: Some(ue),
                    cell: Some(j),
                    kind: EventKind::ReservationExpired { prbs: r.prbs },
                });
            }
        }
        let cell = &self.cells[j];
        let active = |u: &usize| cell.attached.contains(u) && !self.ues[*u].is_interrupted();
        let withheld: u32 = cell
            .reserved
            .iter()
            .filter(|(u, _)| !active(u))
            .map(|(_, r)| r.prbs)
            .sum();

        let bg = &mut self.background[j];
        bg.noise.step(&mut bg.rng);
        let bg_load = (bg.mean + bg.noise.value).clamp(0.0, 1.0);
        let bg_demand = if bg.mean > 0.0 {
            (bg_load * cell.capacity as f64).round() as u32
        } else {
            0
        };

        let demands: Vec<UeDemand> = cell
            .attached
            .iter()
            .filter(|u| !self.ues[**u].is_interrupted())
            .map(|&u| {
                let ue = &self.ues[u];
                UeDemand {
                    ue: u,
                    demand_bytes: [ue.ul_queue.eligible_bytes(t), ue.dl_queue.eligible_bytes(t)],
                    hol_us: [
                        ue.ul_queue.head_of_line_delay_us(t),
                        ue.dl_queue.head_of_line_delay_us(t),
                    ],
                    bytes_per_prb: bytes_per_prb(self.radio[u].cqi),
                    avg_bytes: ue.pf_avg_bytes,
                    reserved: cell.reserved.get(&u).map_or(0, |r| r.prbs),
                    cap: (t < ue.cold_start_until_us)
                        .then_some(self.cfg.handover.cold_start_grant_prbs),
                }
            })
            .collect();
        let schedule = schedule_prbs(cell.capacity, withheld, bg_demand, &demands);
        debug_assert!(schedule.total() + withheld <= cell.capacity);

        let alpha = 1.0 / self.cfg.scheduler.pf_window_ttis;
        let attached: Vec<usize> = cell.attached.iter().copied().collect();
        let end = t + tti;
        for u in attached {
            let grant = schedule.grants.get(&u).copied().unwrap_or([0, 0]);
            let bpp = bytes_per_prb(self.radio[u].cqi);
            let ue = &mut self.ues[u];
            let iv = &mut self.ue_interval[u];
            let civ = &mut self.cell_interval[j];
            let mut served = 0u64;
            for dir in Direction::BOTH {
                let d = dir.index();
                if grant[d] == 0 {
                    continue;
                }
                let bytes = (grant[d] as f64 * bpp).floor() as u64;
                ue.stats.prbs[d] += grant[d] as u64;
                iv.prbs[d] += grant[d] as u64;
                civ.prbs[d] += grant[d] as u64;
                for p in ue.queue_mut(dir).serve(bytes, t) {
                    let delay_us = end - p.arrival_us;
                    ue.stats.delivered[d] += 1;
                    ue.stats.delivered_bytes[d] += p.size as u64;
                    iv.delivered_bytes[d] += p.size as u64;
                    civ.delivered_bytes[d] += p.size as u64;
                    served += p.size as u64;
                    if dir == Direction::Uplink {
                        iv.ul_delay_sum_ms += delay_us as f64 / 1000.0;
                        iv.ul_delivered += 1;
                    }
                    events.push(SimEvent {
                        time_us: end,
                        ue: Some(u),
                        cell: Some(j),
                        kind: EventKind::PacketDelivered {
                            dir,
                            bytes: p.size,
                            delay_us,
                        },
                    });
                }
            }
            ue.pf_avg_bytes += alpha * (served as f64 - ue.pf_avg_bytes);
        }
        self.cell_interval[j].prbs[1] += schedule.background as u64;

        let cell = &mut self.cells[j];
        cell.allocations = schedule.grants;
        cell.background_prbs = schedule.background;
        cell.load = compute_cell_load(cell);
        cell.load_avg += 0.1 * (cell.load - cell.load_avg);
    }

    /// Reports for the current time: edge reports on the radio grid and
    /// UE/cell counters (deltas since the previous cell report) on the cell
    /// grid. Emitting twice at the same instant yields nothing the second time.
    pub fn emit_kpm(&mut self) -> Vec<KpmReport> {
        let now = self.now_us;
        if self.last_kpm_us == Some(now) {
            return Vec::new();
        }
        self.last_kpm_us = Some(now);
        let ranges = &self.cfg.kpm_ranges;
        let mut out = Vec::new();
        if now % self.timing.kpm_radio_us == 0 {
            for s in &self.radio {
                let cells = std::iter::once(s.serving).chain(s.reported.iter().copied());
                for c in cells {
                    let raw = [
                        (feature::EDGE_RSRP, s.rsrp_dbm[c]),
                        (feature::EDGE_RSRQ, s.rsrq_db[c]),
                        (feature::EDGE_SINR, s.sinr_db[c]),
                        (
                            feature::EDGE_SERVING,
                            if c == s.serving { 1.0 } else { 0.0 },
                        ),
                    ];
                    out.push(KpmReport::build(
                        now,
                        ReportKind::Edge { ue: s.ue, cell: c },
                        &raw,
                        ranges,
                    ));
                }
            }
        }
        if now % self.timing.kpm_cell_us == 0 {
            let ticks = self.interval_ticks[1].max(1);
            let window_s = (ticks * self.timing.tti_us) as f64 * 1e-6;
            let mbps = |bytes: u64| bytes as f64 * 8.0 / window_s / 1e6;
            let per_tti = |prbs: u64| prbs as f64 / ticks as f64;
            for (i, u) in self.ues.iter().enumerate() {
                let iv = &self.ue_interval[i];
                let hol = u.hol_delay_ms(now);
                let s = &self.radio[i];
                let raw = [
                    (feature::UE_UL_THROUGHPUT, mbps(iv.delivered_bytes[0])),
                    (feature::UE_DL_THROUGHPUT, mbps(iv.delivered_bytes[1])),
                    (feature::UE_UL_QUEUE_DELAY, hol[0]),
                    (feature::UE_DL_QUEUE_DELAY, hol[1]),
                    (
                        feature::UE_UL_AIR_DELAY,
                        if iv.ul_delivered > 0 {
                            iv.ul_delay_sum_ms / iv.ul_delivered as f64
                        } else {
                            0.0
                        },
                    ),
                    (
                        feature::UE_DL_DROP_RATE,
                        if iv.dl_generated > 0 {
                            iv.dl_dropped as f64 / iv.dl_generated as f64
                        } else {
                            0.0
                        },
                    ),
                    (feature::UE_UL_PRB, per_tti(iv.prbs[0])),
                    (feature::UE_DL_PRB, per_tti(iv.prbs[1])),
                    (feature::UE_UL_VOLUME, iv.generated_bytes[0] as f64),
                    (feature::UE_DL_VOLUME, iv.generated_bytes[1] as f64),
                    (feature::UE_CQI, s.cqi as f64),
                    (feature::UE_RSRP, s.serving_rsrp()),
                    (feature::UE_SINR, s.sinr_db[s.serving]),
                ];
                out.push(KpmReport::build(
                    now,
                    ReportKind::Ue { ue: i },
                    &raw,
                    ranges,
                ));
            }
            for (j, c) in self.cells.iter().enumerate() {
                let iv = &self.cell_interval[j];
                let cap = c.capacity as f64;
                let raw = [
                    (feature::CELL_UL_THROUGHPUT, mbps(iv.delivered_bytes[0])),
                    (feature::CELL_DL_THROUGHPUT, mbps(iv.delivered_bytes[1])),
                    (feature::CELL_UL_PRB, per_tti(iv.prbs[0])),
                    (feature::CELL_DL_PRB, per_tti(iv.prbs[1])),
                    (feature::CELL_UL_UTILIZATION, per_tti(iv.prbs[0]) / cap),
                    (feature::CELL_DL_UTILIZATION, per_tti(iv.prbs[1]) / cap),
                ];
                out.push(KpmReport::build(
                    now,
                    ReportKind::Cell { cell: j },
                    &raw,
                    ranges,
                ));
            }
            self.ue_interval
                .iter_mut()
                .for_each(|v| *v = UeInterval::default());
            self.cell_interval
                .iter_mut()
                .for_each(|v| *v = CellInterval::default());
            self.interval_ticks[1] = 0;
        }
        out
    }
}
