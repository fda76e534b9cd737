use std::collections::{BTreeMap, BTreeSet};

use crate::config::ReservationConfig;
use crate::error::{Result, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Reservation {
    pub prbs: u32,
    pub priority: bool,
    pub expiry_us: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReservationRequest {
    pub ue: usize,
    /// Recent serving-cell PRB usage of the UE, per TTI.
    pub b_serv: u32,
    pub kappa: f64,
    pub expiry_us: u64,
}

#[derive(Clone, Debug)]
pub struct CellState {
    pub id: usize,
    pub position: [f64; 2],
    pub capacity: u32,
    pub attached: BTreeSet<usize>,
    /// PRBs granted in the last TTI, per UE as `[uplink, downlink]`.
    pub allocations: BTreeMap<usize, [u32; 2]>,
    pub background_prbs: u32,
    pub reserved: BTreeMap<usize, Reservation>,
    pub load: f64,
    /// Exponential average of `load`, used for interference.
    pub load_avg: f64,
}

impl CellState {
    pub fn new(id: usize, position: [f64; 2], capacity: u32) -> Self {
        CellState {
            id,
            position,
            capacity,
            attached: BTreeSet::new(),
            allocations: BTreeMap::new(),
            background_prbs: 0,
            reserved: BTreeMap::new(),
            load: 0.0,
            load_avg: 0.0,
        }
    }

    pub fn allocated_prbs(&self) -> u32 {
        self.allocations.values().map(|a| a[0] + a[1]).sum::<u32>() + self.background_prbs
    }

    pub fn reserved_prbs(&self) -> u32 {
        self.reserved.values().map(|r| r.prbs).sum()
    }

    /// Removes reservations whose expiry has passed.
    pub fn expire_reservations(&mut self, now_us: u64) -> Vec<(usize, Reservation)> {
        let gone: Vec<usize> = self
            .reserved
            .iter()
            .filter(|(_, r)| r.expiry_us <= now_us)
            .map(|(u, _)| *u)
            .collect();
        gone.into_iter()
            .map(|u| (u, self.reserved.remove(&u).unwrap()))
            .collect()
    }
}

/// Adds `ceil(kappa * b_serv)` PRBs with priority for the requesting UE.
/// Kappa is scaled down when the cell is overloaded, and the amount is capped
/// so reservations never exceed capacity. Returns the PRBs reserved.
pub fn apply_reservation(
    cell: &mut CellState,
    req: &ReservationRequest,
    cfg: &ReservationConfig,
) -> Result<u32> {
    if !(req.kappa > 0.0 && req.kappa <= 1.0) {
        return Err(SimError::config(
            "kappa",
            format!("must lie in (0, 1], got {}", req.kappa),
        ));
    }
    let mut kappa = req.kappa;
    if cell.load > cfg.overload_threshold {
        kappa *= cfg.overload_kappa_scale;
    }
    let wanted = (kappa * req.b_serv as f64 - 1e-9).ceil().max(0.0) as u32;
    let others: u32 = cell
        .reserved
        .iter()
        .filter(|(u, _)| **u != req.ue)
        .map(|(_, r)| r.prbs)
        .sum();
    let prbs = wanted.min(cell.capacity.saturating_sub(others));
    cell.reserved.insert(
        req.ue,
        Reservation {
            prbs,
            priority: true,
            expiry_us: req.expiry_us,
        },
    );
    Ok(prbs)
}

/// Fraction of PRBs granted in the last TTI, background included.
pub fn compute_cell_load(cell: &CellState) -> f64 {
    (cell.allocated_prbs() as f64 / cell.capacity as f64).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(b_serv: u32, kappa: f64) -> ReservationRequest {
        ReservationRequest {
            ue: 0,
            b_serv,
            kappa,
            expiry_us: 1000,
        }
    }

    #[test]
    fn kappa_one_reserves_full_usage() {
        let mut c = CellState::new(0, [0.0, 0.0], 100);
        assert_eq!(
            apply_reservation(&mut c, &req(40, 1.0), &ReservationConfig::default()).unwrap(),
            40
        );
        assert_eq!(c.reserved[&0].prbs, 40);
        assert!(c.reserved[&0].priority);
    }

    #[test]
    fn kappa_half_reserves_half() {
        let mut c = CellState::new(0, [0.0, 0.0], 100);
        assert_eq!(
            apply_reservation(&mut c, &req(40, 0.5), &ReservationConfig::default()).unwrap(),
            20
        );
        assert_eq!(
            apply_reservation(&mut c, &req(40, 0.3), &ReservationConfig::default()).unwrap(),
            12
        );
        assert_eq!(
            apply_reservation(&mut c, &req(41, 0.5), &ReservationConfig::default()).unwrap(),
            21
        );
    }

    #[test]
    fn invalid_kappa_is_config_error() {
        let mut c = CellState::new(0, [0.0, 0.0], 100);
        for k in [0.0, 1.5, f64::NAN] {
            assert!(apply_reservation(&mut c, &req(40, k), &ReservationConfig::default()).is_err());
        }
        assert!(c.reserved.is_empty());
    }

    #[test]
    fn overloaded_cell_scales_kappa() {
        let mut c = CellState::new(0, [0.0, 0.0], 100);
        c.load = 0.95;
        let cfg = ReservationConfig {
            overload_threshold: 0.9,
            overload_kappa_scale: 0.5,
            ..Default::default()
        };
        assert_eq!(apply_reservation(&mut c, &req(40, 1.0), &cfg).unwrap(), 20);
    }

    #[test]
    fn reservations_capped_at_capacity() {
        let mut c = CellState::new(0, [0.0, 0.0], 50);
        apply_reservation(&mut c, &req(40, 1.0), &ReservationConfig::default()).unwrap();
        let r = ReservationRequest {
            ue: 1,
            b_serv: 40,
            kappa: 1.0,
            expiry_us: 1000,
        };
        assert_eq!(
            apply_reservation(&mut c, &r, &ReservationConfig::default()).unwrap(),
            10
        );
        assert_eq!(c.reserved_prbs(), 50);
    }

    #[test]
    fn expiry_restores_capacity() {
        let mut c = CellState::new(0, [0.0, 0.0], 100);
        apply_reservation(&mut c, &req(40, 1.0), &ReservationConfig::default()).unwrap();
        assert!(c.expire_reservations(999).is_empty());
        assert_eq!(c.expire_reservations(1000).len(), 1);
        assert_eq!(c.reserved_prbs(), 0);
    }

    #[test]
    fn load_examples() {
        let mut c = CellState::new(0, [0.0, 0.0], 100);
        assert_eq!(compute_cell_load(&c), 0.0);
        c.allocations.insert(0, [20, 0]);
        c.allocations.insert(1, [10, 20]);
        assert_eq!(compute_cell_load(&c), 0.5);
        c.background_prbs = 50;
        assert_eq!(compute_cell_load(&c), 1.0);
    }
}
