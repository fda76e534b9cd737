//! Log-distance path loss, AR(1) shadowing and the SINR/CQI mapping.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::RadioConfig;
use crate::mobility::dist;

/// Spectral efficiency (bits per resource element) for CQI 0..=15.
pub const CQI_EFFICIENCY: [f64; 16] = [
    0.0, 0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223,
    3.9023, 4.5234, 5.1152, 5.5547,
];

/// Lowest SINR (dB) that supports CQI 1..=15.
pub const CQI_SINR_DB: [f64; 15] = [
    -6.7, -4.7, -2.3, 0.2, 2.4, 4.3, 5.9, 8.1, 10.3, 11.7, 14.1, 16.3, 18.7, 21.0, 22.7,
];

/// Data-carrying resource elements per PRB per TTI.
pub const DATA_RE_PER_PRB: f64 = 150.0;

pub fn path_loss_db(cfg: &RadioConfig, distance_m: f64) -> f64 {
    let d = distance_m.max(cfg.d0_m);
    cfg.pl0_db + 10.0 * cfg.exponent * (d / cfg.d0_m).log10()
}

/// RSRP in dBm. Distances below the reference distance are clamped to it.
pub fn rsrp_dbm(cfg: &RadioConfig, distance_m: f64, shadow_db: f64) -> f64 {
    cfg.tx_power_dbm - path_loss_db(cfg, distance_m) - shadow_db
}

pub fn compute_rsrp(
    cfg: &RadioConfig,
    cell_pos: [f64; 2],
    ue_pos: [f64; 2],
    shadow_db: f64,
) -> f64 {
    rsrp_dbm(cfg, dist(cell_pos, ue_pos), shadow_db)
}

pub fn cqi_from_sinr(sinr_db: f64) -> u8 {
    CQI_SINR_DB.iter().take_while(|&&t| sinr_db >= t).count() as u8
}

pub fn bytes_per_prb(cqi: u8) -> f64 {
    CQI_EFFICIENCY[cqi.min(15) as usize] * DATA_RE_PER_PRB / 8.0
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Zero-mean AR(1) process `s' = phi * s + sigma * e`, `e ~ N(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ar1 {
    pub phi: f64,
    pub sigma: f64,
    pub value: f64,
}

impl Ar1 {
    pub fn stationary_std(phi: f64, sigma: f64) -> f64 {
        sigma / (1.0 - phi * phi).sqrt()
    }

    /// Starts from a draw of the stationary distribution.
    pub fn stationary(phi: f64, sigma: f64, rng: &mut impl Rng) -> Ar1 {
        let e: f64 = rng.sample(StandardNormal);
        Ar1 {
            phi,
            sigma,
            value: e * Self::stationary_std(phi, sigma),
        }
    }

    pub fn step(&mut self, rng: &mut impl Rng) -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        self.value = self.phi * self.value + self.sigma * e;
        self.value
    }
}

/// Shadowing per UE-cell pair, one random stream per UE.
#[derive(Clone, Debug)]
pub struct ShadowingState {
    n_cells: usize,
    values: Vec<Ar1>,
    rngs: Vec<ChaCha8Rng>,
}

impl ShadowingState {
    pub fn new(
        n_ues: usize,
        n_cells: usize,
        phi: f64,
        sigma: f64,
        mut rngs: Vec<ChaCha8Rng>,
    ) -> Self {
        assert_eq!(rngs.len(), n_ues);
        let mut values = Vec::with_capacity(n_ues * n_cells);
        for rng in rngs.iter_mut() {
            for _ in 0..n_cells {
                values.push(Ar1::stationary(phi, sigma, rng));
            }
        }
        ShadowingState {
            n_cells,
            values,
            rngs,
        }
    }

    pub fn get(&self, ue: usize, cell: usize) -> f64 {
        self.values[ue * self.n_cells + cell].value
    }

    pub fn advance(&mut self) {
        for (ue, rng) in self.rngs.iter_mut().enumerate() {
            for v in &mut self.values[ue * self.n_cells..(ue + 1) * self.n_cells] {
                v.step(rng);
            }
        }
    }
}

/// One UE's view of every cell at a measurement instant.
#[derive(Clone, Debug, PartialEq)]
pub struct RadioSample {
    pub ue: usize,
    pub timestamp_us: u64,
    pub serving: usize,
    pub rsrp_dbm: Vec<f64>,
    pub rsrq_db: Vec<f64>,
    pub sinr_db: Vec<f64>,
    /// CQI on the serving cell.
    pub cqi: u8,
    /// Non-serving cells above the report threshold, strongest first.
    pub reported: Vec<usize>,
}

impl RadioSample {
    pub fn serving_rsrp(&self) -> f64 {
        self.rsrp_dbm[self.serving]
    }

    pub fn is_reported(&self, cell: usize) -> bool {
        self.reported.contains(&cell)
    }

    pub fn strongest_cell(&self) -> usize {
        argmax(&self.rsrp_dbm)
    }
}

/// Builds a sample from per-cell RSRP; interference from cell `k` is scaled
/// by `coupling * max(load_k, floor)`.
pub fn measure(
    cfg: &RadioConfig,
    ue: usize,
    serving: usize,
    timestamp_us: u64,
    rsrp_dbm: Vec<f64>,
    loads: &[f64],
) -> RadioSample {
    let n = rsrp_dbm.len();
    let mw: Vec<f64> = rsrp_dbm.iter().map(|&r| dbm_to_mw(r)).collect();
    let noise = dbm_to_mw(cfg.noise_dbm);
    let weighted: Vec<f64> = (0..n)
        .map(|k| mw[k] * cfg.interference_coupling * loads[k].max(cfg.interference_floor))
        .collect();
    let total: f64 = weighted.iter().sum();
    let mut sinr_db = Vec::with_capacity(n);
    let mut rsrq_db = Vec::with_capacity(n);
    for j in 0..n {
        let interference = total - weighted[j] + noise;
        sinr_db.push(mw_to_dbm(mw[j] / interference));
        rsrq_db.push(mw_to_dbm(mw[j] / (mw[j] + interference)));
    }
    let cqi = cqi_from_sinr(sinr_db[serving]);
    let mut reported: Vec<usize> = (0..n)
        .filter(|&j| j != serving && rsrp_dbm[j] >= cfg.report_threshold_dbm)
        .collect();
    reported.sort_by(|&a, &b| rsrp_dbm[b].total_cmp(&rsrp_dbm[a]).then(a.cmp(&b)));
    reported.truncate(cfg.max_reported_neighbors);
    RadioSample {
        ue,
        timestamp_us,
        serving,
        rsrp_dbm,
        rsrq_db,
        sinr_db,
        cqi,
        reported,
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
