//! Per-TTI PRB allocation: priority reservations, then background users,
//! then proportional-fair water-filling over UE backlogs.

use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq)]
pub struct UeDemand {
    pub ue: usize,
    /// Schedulable backlog as `[uplink, downlink]` bytes.
    pub demand_bytes: [u64; 2],
    /// Head-of-line delay per direction; the older flow is served first.
    pub hol_us: [u64; 2],
    pub bytes_per_prb: f64,
    /// Average bytes served per TTI.
    pub avg_bytes: f64,
    /// PRBs held by an active priority reservation.
    pub reserved: u32,
    /// Upper bound on this UE's grant (cold start).
    pub cap: Option<u32>,
}

impl UeDemand {
    fn demand_prbs(&self) -> [u32; 2] {
        if self.bytes_per_prb <= 0.0 {
            return [0, 0];
        }
        self.demand_bytes
            .map(|b| (b as f64 / self.bytes_per_prb).ceil() as u32)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Schedule {
    /// `[uplink, downlink]` PRBs per UE with a non-zero grant.
    pub grants: BTreeMap<usize, [u32; 2]>,
    pub background: u32,
}

impl Schedule {
    pub fn total(&self) -> u32 {
        self.grants.values().map(|g| g[0] + g[1]).sum::<u32>() + self.background
    }
}

/// `withheld` PRBs belong to reservations whose UE has not attached yet.
pub fn schedule_prbs(
    capacity: u32,
    withheld: u32,
    background_demand: u32,
    ues: &[UeDemand],
) -> Schedule {
    let mut avail = capacity.saturating_sub(withheld);
    let wants: Vec<u32> = ues
        .iter()
        .map(|u| {
            let d = u.demand_prbs();
            let total = d[0] + d[1];
            u.cap.map_or(total, |c| total.min(c))
        })
        .collect();
    let mut given = vec![0u32; ues.len()];

    for (k, u) in ues.iter().enumerate() {
        if u.reserved > 0 {
            let g = u.reserved.min(wants[k]).min(avail);
            given[k] += g;
            avail -= g;
        }
    }

    let background = background_demand.min(avail);
    avail -= background;

    // Water-filling: each PRB goes to the UE with the smallest normalized
    // average plus grant so far; ties go to the earlier entry.
    let base: Vec<f64> = ues
        .iter()
        .map(|u| {
            if u.bytes_per_prb > 0.0 {
                u.avg_bytes / u.bytes_per_prb
            } else {
                f64::INFINITY
            }
        })
        .collect();
    while avail > 0 {
        let mut best: Option<usize> = None;
        for k in 0..ues.len() {
            if given[k] >= wants[k] {
                continue;
            }
            let m = base[k] + given[k] as f64;
            if best.is_none_or(|b| m < base[b] + given[b] as f64) {
                best = Some(k);
            }
        }
        let Some(k) = best else { break };
        given[k] += 1;
        avail -= 1;
    }

    let mut grants = BTreeMap::new();
    for (k, u) in ues.iter().enumerate() {
        if given[k] == 0 {
            continue;
        }
        let d = u.demand_prbs();
        let first = if u.hol_us[1] > u.hol_us[0] { 1 } else { 0 };
        let mut g = [0u32; 2];
        g[first] = given[k].min(d[first]);
        g[1 - first] = given[k] - g[first];
        grants.insert(u.ue, g);
    }
    Schedule { grants, background }
}
