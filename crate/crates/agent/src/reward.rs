use ran_sim::UeStats;
use serde::Serialize;

use crate::error::{AgentError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DelayRecord {
    pub tau_ul_ms: f64,
    pub tau_dl_ms: f64,
    pub tau_ms: f64,
    pub requirement_ms: f64,
    pub regret: f64,
    pub reward: f64,
}

/// `J = max((tau - D) / D, 0)` with `tau = tau_ul + tau_dl`, `R = -J`.
pub fn compute_reward(tau_ul_ms: f64, tau_dl_ms: f64, requirement_ms: f64) -> Result<DelayRecord> {
    if !(requirement_ms > 0.0) {
        return Err(AgentError::config(
            "delay_requirement_ms",
            format!("must be > 0, got {requirement_ms}"),
        ));
    }
    let tau_ms = tau_ul_ms + tau_dl_ms;
    let regret = ((tau_ms - requirement_ms) / requirement_ms).max(0.0);
    Ok(DelayRecord {
        tau_ul_ms,
        tau_dl_ms,
        tau_ms,
        requirement_ms,
        regret,
        reward: -regret,
    })
}

/// Mean head-of-line delay per direction between two snapshots of the
/// cumulative UE counters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DelayMeter {
    sum_ms: [f64; 2],
    samples: u64,
}

impl DelayMeter {
    pub fn start(stats: &UeStats) -> Self {
        DelayMeter {
            sum_ms: stats.hol_sum_ms,
            samples: stats.hol_samples,
        }
    }

    /// `[ul, dl]` mean since `start`, then restarts from `stats`.
    pub fn lap(&mut self, stats: &UeStats) -> [f64; 2] {
        let n = stats.hol_samples - self.samples;
        let out = if n == 0 {
            [0.0, 0.0]
        } else {
            [
                (stats.hol_sum_ms[0] - self.sum_ms[0]) / n as f64,
                (stats.hol_sum_ms[1] - self.sum_ms[1]) / n as f64,
            ]
        };
        *self = DelayMeter::start(stats);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regret_examples() {
        let r = compute_reward(10.0, 20.0, 20.0).unwrap();
        assert!((r.regret - 0.5).abs() < 1e-15);
        assert_eq!(r.reward, -0.5);
        assert_eq!(compute_reward(5.0, 10.0, 20.0).unwrap().regret, 0.0);
        assert_eq!(compute_reward(20.0, 0.0, 20.0).unwrap().regret, 0.0);
    }

    #[test]
    fn requirement_must_be_positive() {
        assert!(matches!(
            compute_reward(1.0, 1.0, 0.0),
            Err(AgentError::Config { .. })
        ));
        assert!(compute_reward(1.0, 1.0, -3.0).is_err());
    }

    #[test]
    fn meter_takes_interval_means() {
        let mut s = UeStats::default();
        let mut m = DelayMeter::start(&s);
        s.hol_sum_ms = [10.0, 30.0];
        s.hol_samples = 5;
        assert_eq!(m.lap(&s), [2.0, 6.0]);
        assert_eq!(m.lap(&s), [0.0, 0.0]);
    }
}
