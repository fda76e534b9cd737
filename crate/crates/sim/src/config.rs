//! Scenario configuration. Durations are given in milliseconds and converted
//! to integer microseconds once, at validation time.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::kpm::KpmRanges;
use crate::mobility::Mobility;
use crate::traffic::TrafficProfile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub cells: Vec<CellConfig>,
    pub ues: Vec<UeConfig>,
    #[serde(default = "defaults::tti_ms")]
    pub tti_ms: f64,
    #[serde(default = "defaults::kpm_radio_period_ms")]
    pub kpm_radio_period_ms: f64,
    #[serde(default = "defaults::kpm_cell_period_ms")]
    pub kpm_cell_period_ms: f64,
    /// Cadence of radio measurements, shadowing updates and A3 evaluation.
    #[serde(default = "defaults::measurement_period_ms")]
    pub measurement_period_ms: f64,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub handover: HandoverConfig,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub reservation: ReservationConfig,
    #[serde(default)]
    pub kpm_ranges: KpmRanges,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub position: [f64; 2],
    pub prb_capacity: u32,
    /// Mean fraction of PRBs consumed by non-simulated users.
    #[serde(default)]
    pub background_load: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeConfig {
    pub mobility: Mobility,
    pub traffic: TrafficProfile,
    #[serde(default = "defaults::delay_requirement_ms")]
    pub delay_requirement_ms: f64,
    /// Strongest cell at t = 0 when absent.
    #[serde(default)]
    pub initial_cell: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub tx_power_dbm: f64,
    pub pl0_db: f64,
    pub d0_m: f64,
    pub exponent: f64,
    /// Innovation std of the AR(1) shadowing process.
    pub shadow_sigma_db: f64,
    pub shadow_phi: f64,
    pub noise_dbm: f64,
    /// Minimum activity factor of an interfering cell.
    pub interference_floor: f64,
    /// Scale on inter-cell interference (coordination gain).
    pub interference_coupling: f64,
    pub report_threshold_dbm: f64,
    pub max_reported_neighbors: usize,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            tx_power_dbm: 15.0,
            pl0_db: 38.0,
            d0_m: 1.0,
            exponent: 3.0,
            shadow_sigma_db: 1.0,
            shadow_phi: 0.9,
            noise_dbm: -125.0,
            interference_floor: 0.05,
            interference_coupling: 0.25,
            report_threshold_dbm: -120.0,
            max_reported_neighbors: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HandoverConfig {
    pub phase2_delay_ms: f64,
    pub interruption_ms: f64,
    pub weak_rsrp_threshold_dbm: f64,
    pub weak_rsrp_penalty_ms_per_db: f64,
    pub weak_rsrp_penalty_max_ms: f64,
    /// Conservative-grant window after attach when no reservation is held.
    pub cold_start_ms: f64,
    pub cold_start_grant_prbs: u32,
    /// Interruption after a radio-link-failure re-establishment.
    pub rlf_recovery_ms: f64,
}

impl Default for HandoverConfig {
    fn default() -> Self {
        HandoverConfig {
            phase2_delay_ms: 20.0,
            interruption_ms: 50.0,
            weak_rsrp_threshold_dbm: -105.0,
            weak_rsrp_penalty_ms_per_db: 4.0,
            weak_rsrp_penalty_max_ms: 100.0,
            cold_start_ms: 30.0,
            cold_start_grant_prbs: 2,
            rlf_recovery_ms: 200.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    pub ul_grant_delay_ms: f64,
    pub drop_deadline_ms: f64,
    /// Proportional-fair averaging window in TTIs.
    pub pf_window_ttis: f64,
    pub background_noise_std: f64,
    pub background_phi: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            ul_grant_delay_ms: 4.0,
            drop_deadline_ms: 150.0,
            pf_window_ttis: 100.0,
            background_noise_std: 0.02,
            background_phi: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReservationConfig {
    /// How long a reservation holds after the planned attach time.
    pub hold_ms: f64,
    pub overload_threshold: f64,
    pub overload_kappa_scale: f64,
}

impl Default for ReservationConfig {
    fn default() -> Self {
        ReservationConfig {
            hold_ms: 200.0,
            overload_threshold: 0.9,
            overload_kappa_scale: 0.5,
        }
    }
}

mod defaults {
    pub fn tti_ms() -> f64 {
        1.0
    }
    pub fn kpm_radio_period_ms() -> f64 {
        120.0
    }
    pub fn kpm_cell_period_ms() -> f64 {
        10.0
    }
    pub fn measurement_period_ms() -> f64 {
        40.0
    }
    pub fn delay_requirement_ms() -> f64 {
        20.0
    }
}

/// Validated durations in microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Timing {
    pub tti_us: u64,
    pub kpm_radio_us: u64,
    pub kpm_cell_us: u64,
    pub measurement_us: u64,
    pub phase2_us: u64,
    pub interruption_us: u64,
    pub cold_start_us: u64,
    pub rlf_recovery_us: u64,
    pub ul_grant_delay_us: u64,
    pub drop_deadline_us: u64,
    pub reservation_hold_us: u64,
}

pub fn ms_to_us(field: &str, ms: f64) -> Result<u64> {
    if !ms.is_finite() || ms < 0.0 {
        return Err(SimError::config(
            field,
            format!("must be a finite non-negative duration, got {ms}"),
        ));
    }
    let us = ms * 1000.0;
    if (us - us.round()).abs() > 1e-6 {
        return Err(SimError::config(
            field,
            format!("{ms} ms is not a whole number of microseconds"),
        ));
    }
    Ok(us.round() as u64)
}

fn multiple_of(field: &str, value: u64, base: u64) -> Result<()> {
    if value == 0 || value % base != 0 {
        return Err(SimError::config(
            field,
            format!(
                "must be a positive multiple of tti_ms ({} us), got {value} us",
                base
            ),
        ));
    }
    Ok(())
}

fn fraction(field: &str, v: f64, lo_open: bool) -> Result<()> {
    let ok = v.is_finite() && v <= 1.0 && if lo_open { v > 0.0 } else { v >= 0.0 };
    if !ok {
        let range = if lo_open { "(0, 1]" } else { "[0, 1]" };
        return Err(SimError::config(
            field,
            format!("must lie in {range}, got {v}"),
        ));
    }
    Ok(())
}

impl SimConfig {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn from_json(text: &str) -> Result<SimConfig> {
        let cfg: SimConfig = serde_json::from_str(text)?;
        cfg.timing()?;
        Ok(cfg)
    }

    /// Validates the configuration and returns its durations in microseconds.
    pub fn timing(&self) -> Result<Timing> {
        if self.cells.len() < 2 {
            return Err(SimError::config(
                "cells",
                format!("need at least 2 cells, got {}", self.cells.len()),
            ));
        }
        for (j, c) in self.cells.iter().enumerate() {
            if c.prb_capacity == 0 {
                return Err(SimError::config(
                    format!("cells[{j}].prb_capacity"),
                    "must be > 0",
                ));
            }
            if !c.position.iter().all(|v| v.is_finite()) {
                return Err(SimError::config(
                    format!("cells[{j}].position"),
                    "must be finite",
                ));
            }
            fraction(
                &format!("cells[{j}].background_load"),
                c.background_load,
                false,
            )?;
        }
        for (i, u) in self.ues.iter().enumerate() {
            if !(u.delay_requirement_ms > 0.0) {
                return Err(SimError::config(
                    format!("ues[{i}].delay_requirement_ms"),
                    "must be > 0",
                ));
            }
            if let Some(c) = u.initial_cell {
                if c >= self.cells.len() {
                    return Err(SimError::config(
                        format!("ues[{i}].initial_cell"),
                        format!("no cell {c}"),
                    ));
                }
            }
            u.mobility.validate(&format!("ues[{i}].mobility"))?;
            u.traffic.validate(&format!("ues[{i}].traffic"))?;
        }
        let r = &self.radio;
        if !(r.d0_m > 0.0) {
            return Err(SimError::config("radio.d0_m", "must be > 0"));
        }
        if !(r.exponent > 0.0) {
            return Err(SimError::config("radio.exponent", "must be > 0"));
        }
        if !(r.shadow_sigma_db >= 0.0) {
            return Err(SimError::config("radio.shadow_sigma_db", "must be >= 0"));
        }
        if !(r.shadow_phi >= 0.0 && r.shadow_phi < 1.0) {
            return Err(SimError::config("radio.shadow_phi", "must lie in [0, 1)"));
        }
        fraction("radio.interference_floor", r.interference_floor, false)?;
        fraction(
            "radio.interference_coupling",
            r.interference_coupling,
            false,
        )?;
        let s = &self.scheduler;
        if !(s.pf_window_ttis >= 1.0) {
            return Err(SimError::config("scheduler.pf_window_ttis", "must be >= 1"));
        }
        if !(s.background_phi >= 0.0 && s.background_phi < 1.0) {
            return Err(SimError::config(
                "scheduler.background_phi",
                "must lie in [0, 1)",
            ));
        }
        if !(s.background_noise_std >= 0.0) {
            return Err(SimError::config(
                "scheduler.background_noise_std",
                "must be >= 0",
            ));
        }
        fraction(
            "reservation.overload_threshold",
            self.reservation.overload_threshold,
            false,
        )?;
        fraction(
            "reservation.overload_kappa_scale",
            self.reservation.overload_kappa_scale,
            true,
        )?;
        let h = &self.handover;
        if !(h.weak_rsrp_penalty_ms_per_db >= 0.0) {
            return Err(SimError::config(
                "handover.weak_rsrp_penalty_ms_per_db",
                "must be >= 0",
            ));
        }
        self.kpm_ranges.validate()?;

        let tti_us = ms_to_us("tti_ms", self.tti_ms)?;
        if tti_us == 0 {
            return Err(SimError::config("tti_ms", "must be > 0"));
        }
        let kpm_radio_us = ms_to_us("kpm_radio_period_ms", self.kpm_radio_period_ms)?;
        multiple_of("kpm_radio_period_ms", kpm_radio_us, tti_us)?;
        let kpm_cell_us = ms_to_us("kpm_cell_period_ms", self.kpm_cell_period_ms)?;
        multiple_of("kpm_cell_period_ms", kpm_cell_us, tti_us)?;
        let measurement_us = ms_to_us("measurement_period_ms", self.measurement_period_ms)?;
        multiple_of("measurement_period_ms", measurement_us, tti_us)?;
        Ok(Timing {
            tti_us,
            kpm_radio_us,
            kpm_cell_us,
            measurement_us,
            phase2_us: ms_to_us("handover.phase2_delay_ms", h.phase2_delay_ms)?,
            interruption_us: ms_to_us("handover.interruption_ms", h.interruption_ms)?,
            cold_start_us: ms_to_us("handover.cold_start_ms", h.cold_start_ms)?,
            rlf_recovery_us: ms_to_us("handover.rlf_recovery_ms", h.rlf_recovery_ms)?,
            ul_grant_delay_us: ms_to_us("scheduler.ul_grant_delay_ms", s.ul_grant_delay_ms)?,
            drop_deadline_us: ms_to_us("scheduler.drop_deadline_ms", s.drop_deadline_ms)?,
            reservation_hold_us: ms_to_us("reservation.hold_ms", self.reservation.hold_ms)?,
        })
    }
}
