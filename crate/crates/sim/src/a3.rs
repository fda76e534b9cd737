use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::radio::RadioSample;
use crate::ue::UeState;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct A3Config {
    pub hysteresis_db: f64,
    pub time_to_trigger_ms: f64,
}

impl Default for A3Config {
    fn default() -> Self {
        A3Config {
            hysteresis_db: 3.0,
            time_to_trigger_ms: 120.0,
        }
    }
}

impl A3Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.hysteresis_db >= 0.0 && self.hysteresis_db.is_finite()) {
            return Err(SimError::config(
                "a3.hysteresis_db",
                "must be finite and >= 0",
            ));
        }
        if !(self.time_to_trigger_ms >= 0.0 && self.time_to_trigger_ms.is_finite()) {
            return Err(SimError::config(
                "a3.time_to_trigger_ms",
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

/// Advances the per-neighbor entry timers by `elapsed_us` where the neighbor
/// beats serving by more than the hysteresis, zeroes the rest, and returns
/// the neighbor whose timer reached the time-to-trigger. Ties go to the
/// strongest RSRP, then the lowest cell id.
pub fn evaluate_a3(
    ue: &mut UeState,
    radio: &RadioSample,
    cfg: &A3Config,
    elapsed_us: u64,
) -> Option<usize> {
    let serving = radio.serving_rsrp();
    let ttt_us = (cfg.time_to_trigger_ms * 1000.0).round() as u64;
    let mut best: Option<usize> = None;
    for (j, &rsrp) in radio.rsrp_dbm.iter().enumerate() {
        if j == radio.serving {
            ue.a3_timer[j] = 0;
            continue;
        }
        if rsrp > serving + cfg.hysteresis_db {
            ue.a3_timer[j] += elapsed_us;
        } else {
            ue.a3_timer[j] = 0;
            continue;
        }
        if ue.a3_timer[j] >= ttt_us && best.is_none_or(|b| rsrp > radio.rsrp_dbm[b]) {
            best = Some(j);
        }
    }
    best
}
