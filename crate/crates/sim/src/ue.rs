use crate::queue::{Direction, QueueState};
use crate::traffic::TrafficProfile;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HoState {
    Idle,
    /// Phase 2: target admission, attach at `execute_at_us`.
    Preparing {
        target: usize,
        execute_at_us: u64,
    },
    /// Phase 3: attached to the new cell, no data served.
    Interrupted {
        until_us: u64,
    },
}

/// Cumulative per-UE counters; consumers take differences.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UeStats {
    pub generated: [u64; 2],
    pub delivered: [u64; 2],
    pub dropped: [u64; 2],
    pub generated_bytes: [u64; 2],
    pub delivered_bytes: [u64; 2],
    pub prbs: [u64; 2],
    /// Sum of per-TTI head-of-line delay samples, milliseconds.
    pub hol_sum_ms: [f64; 2],
    pub hol_samples: u64,
    pub handovers: u64,
}

#[derive(Clone, Debug)]
pub struct UeState {
    pub id: usize,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub serving: usize,
    pub traffic: TrafficProfile,
    pub ul_queue: QueueState,
    pub dl_queue: QueueState,
    pub delay_requirement_ms: f64,
    pub ho_state: HoState,
    /// Per-cell time the A3 entry condition has held, microseconds.
    pub a3_timer: Vec<u64>,
    /// Grants are capped until this time after an unreserved attach.
    pub cold_start_until_us: u64,
    /// Exponential average of PRBs granted per TTI.
    pub prb_usage_avg: f64,
    pub pf_avg_bytes: f64,
    pub stats: UeStats,
}

impl UeState {
    pub fn queue(&self, dir: Direction) -> &QueueState {
        match dir {
            Direction::Uplink => &self.ul_queue,
            Direction::Downlink => &self.dl_queue,
        }
    }

    pub fn queue_mut(&mut self, dir: Direction) -> &mut QueueState {
        match dir {
            Direction::Uplink => &mut self.ul_queue,
            Direction::Downlink => &mut self.dl_queue,
        }
    }

    /// `[uplink, downlink]` head-of-line delay in milliseconds.
    pub fn hol_delay_ms(&self, now_us: u64) -> [f64; 2] {
        Direction::BOTH.map(|d| self.queue(d).head_of_line_delay_us(now_us) as f64 / 1000.0)
    }

    pub fn is_interrupted(&self) -> bool {
        matches!(self.ho_state, HoState::Interrupted { .. })
    }

    pub fn reset_a3(&mut self) {
        self.a3_timer.iter_mut().for_each(|t| *t = 0);
    }
}
