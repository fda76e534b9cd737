use std::collections::BTreeMap;

use ran_sim::{CellState, HoState, RadioSample, UeState};
use serde::{Deserialize, Serialize};

use crate::error::{AgentError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskConfig {
    /// Minimum raw target RSRP, dBm.
    pub rsrp_threshold_dbm: f64,
    /// Load threshold for cells without an override.
    pub load_threshold: f64,
    pub cell_load_thresholds: BTreeMap<usize, f64>,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            rsrp_threshold_dbm: -110.0,
            load_threshold: 0.9,
            cell_load_thresholds: BTreeMap::new(),
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        let all = std::iter::once((None, self.load_threshold)).chain(
            self.cell_load_thresholds
                .iter()
                .map(|(c, v)| (Some(*c), *v)),
        );
        for (cell, eta) in all {
            if !(eta > 0.0 && eta <= 1.0) {
                let field = match cell {
                    Some(c) => format!("mask.cell_load_thresholds.{c}"),
                    None => "mask.load_threshold".into(),
                };
                return Err(AgentError::config(
                    field,
                    format!("must lie in (0, 1], got {eta}"),
                ));
            }
        }
        if !self.rsrp_threshold_dbm.is_finite() {
            return Err(AgentError::config(
                "mask.rsrp_threshold_dbm",
                "must be finite",
            ));
        }
        Ok(())
    }

    pub fn eta(&self, cell: usize) -> f64 {
        self.cell_load_thresholds
            .get(&cell)
            .copied()
            .unwrap_or(self.load_threshold)
    }
}

/// Per-cell feasibility bits for one UE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionMask {
    pub reported: Vec<bool>,
    pub signal: Vec<bool>,
    pub load: Vec<bool>,
    pub combined: Vec<bool>,
    /// `p_HO = 1` is permitted: some target is valid and the UE is idle.
    pub ho_allowed: bool,
}

impl ActionMask {
    /// Every cell but the serving one, no rule applied.
    pub fn unmasked(n_cells: usize, serving: usize, idle: bool) -> Self {
        let all: Vec<bool> = (0..n_cells).map(|j| j != serving).collect();
        ActionMask {
            reported: all.clone(),
            signal: all.clone(),
            load: all.clone(),
            ho_allowed: idle && all.iter().any(|&b| b),
            combined: all,
        }
    }

    pub fn valid_count(&self) -> usize {
        self.combined.iter().filter(|&&b| b).count()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.combined
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn bits(&self) -> String {
        self.combined
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect()
    }
}

/// Connectivity (reported neighbor), signal (raw RSRP at least the
/// threshold) and load (smoothed load at most eta) rules, ANDed. The serving
/// cell is never a target.
pub fn compute_masks(
    ue: &UeState,
    radio: &RadioSample,
    cells: &[CellState],
    cfg: &MaskConfig,
) -> ActionMask {
    let n = cells.len();
    let serving = ue.serving;
    let reported: Vec<bool> = (0..n)
        .map(|j| j != serving && radio.is_reported(j))
        .collect();
    let signal: Vec<bool> = (0..n)
        .map(|j| j != serving && radio.rsrp_dbm[j] >= cfg.rsrp_threshold_dbm)
        .collect();
    let load: Vec<bool> = (0..n)
        .map(|j| j != serving && cells[j].load_avg <= cfg.eta(j))
        .collect();
    let combined: Vec<bool> = (0..n)
        .map(|j| reported[j] && signal[j] && load[j])
        .collect();
    let ho_allowed = ue.ho_state == HoState::Idle && combined.iter().any(|&b| b);
    ActionMask {
        reported,
        signal,
        load,
        combined,
        ho_allowed,
    }
}

/// `pi(a) M(a) / sum pi M`. Masked entries come out exactly zero.
pub fn apply_mask_renormalize(probs: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if probs.len() != mask.len() {
        return Err(AgentError::Contract(format!(
            "{} probabilities vs {} mask bits",
            probs.len(),
            mask.len()
        )));
    }
    let total: f64 = probs
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(p, _)| p)
        .sum();
    if total <= 0.0 {
        return Err(AgentError::Contract(
            "renormalization over zero probability mass".into(),
        ));
    }
    Ok(probs
        .iter()
        .zip(mask)
        .map(|(p, &m)| if m { p / total } else { 0.0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renormalize_example() {
        let out = apply_mask_renormalize(&[0.5, 0.3, 0.2], &[true, false, true]).unwrap();
        assert!((out[0] - 0.7142857142857143).abs() < 1e-12);
        assert_eq!(out[1], 0.0);
        assert!((out[2] - 0.2857142857142857).abs() < 1e-12);
    }

    #[test]
    fn full_mask_is_identity_and_single_valid_gets_everything() {
        let p = [0.1, 0.6, 0.3];
        assert_eq!(apply_mask_renormalize(&p, &[true; 3]).unwrap(), p.to_vec());
        assert_eq!(
            apply_mask_renormalize(&p, &[false, false, true]).unwrap(),
            vec![0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn zero_mass_is_a_contract_violation() {
        assert!(matches!(
            apply_mask_renormalize(&[0.5, 0.5], &[false, false]),
            Err(AgentError::Contract(_))
        ));
        assert!(apply_mask_renormalize(&[1.0, 0.0], &[false, true]).is_err());
    }

    #[test]
    fn eta_must_be_in_unit_interval() {
        let mut cfg = MaskConfig::default();
        cfg.cell_load_thresholds.insert(2, 1.5);
        assert!(
            matches!(cfg.validate(), Err(AgentError::Config { field, .. }) if field.ends_with(".2"))
        );
        assert!(MaskConfig {
            load_threshold: 0.0,
            ..MaskConfig::default()
        }
        .validate()
        .is_err());
    }
}
