//! KPM report schema. Every feature carries a stable `u16` id; the order of
//! ids in [`feature::EDGE`], [`feature::UE`] and [`feature::CELL`] is the
//! order of the normalized vectors handed to the encoder.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub mod feature {
    pub const EDGE_RSRP: u16 = 1;
    pub const EDGE_RSRQ: u16 = 2;
    pub const EDGE_SINR: u16 = 3;
    pub const EDGE_SERVING: u16 = 4;

    pub const UE_UL_THROUGHPUT: u16 = 101;
    pub const UE_DL_THROUGHPUT: u16 = 102;
    pub const UE_UL_QUEUE_DELAY: u16 = 103;
    pub const UE_DL_QUEUE_DELAY: u16 = 104;
    pub const UE_UL_AIR_DELAY: u16 = 105;
    pub const UE_DL_DROP_RATE: u16 = 106;
    pub const UE_UL_PRB: u16 = 107;
    pub const UE_DL_PRB: u16 = 108;
    pub const UE_UL_VOLUME: u16 = 109;
    pub const UE_DL_VOLUME: u16 = 110;
    pub const UE_CQI: u16 = 111;
    pub const UE_RSRP: u16 = 112;
    pub const UE_SINR: u16 = 113;

    pub const CELL_UL_THROUGHPUT: u16 = 201;
    pub const CELL_DL_THROUGHPUT: u16 = 202;
    pub const CELL_UL_PRB: u16 = 203;
    pub const CELL_DL_PRB: u16 = 204;
    pub const CELL_UL_UTILIZATION: u16 = 205;
    pub const CELL_DL_UTILIZATION: u16 = 206;

    pub const EDGE: [u16; 4] = [EDGE_RSRP, EDGE_RSRQ, EDGE_SINR, EDGE_SERVING];
    pub const UE: [u16; 13] = [
        UE_UL_THROUGHPUT,
        UE_DL_THROUGHPUT,
        UE_UL_QUEUE_DELAY,
        UE_DL_QUEUE_DELAY,
        UE_UL_AIR_DELAY,
        UE_DL_DROP_RATE,
        UE_UL_PRB,
        UE_DL_PRB,
        UE_UL_VOLUME,
        UE_DL_VOLUME,
        UE_CQI,
        UE_RSRP,
        UE_SINR,
    ];
    pub const CELL: [u16; 6] = [
        CELL_UL_THROUGHPUT,
        CELL_DL_THROUGHPUT,
        CELL_UL_PRB,
        CELL_DL_PRB,
        CELL_UL_UTILIZATION,
        CELL_DL_UTILIZATION,
    ];

    pub fn name(id: u16) -> Option<&'static str> {
        Some(match id {
            EDGE_RSRP => "edge_rsrp_dbm",
            EDGE_RSRQ => "edge_rsrq_db",
            EDGE_SINR => "edge_sinr_db",
            EDGE_SERVING => "edge_is_serving",
            UE_UL_THROUGHPUT => "ue_ul_throughput_mbps",
            UE_DL_THROUGHPUT => "ue_dl_throughput_mbps",
            UE_UL_QUEUE_DELAY => "ue_ul_queue_delay_ms",
            UE_DL_QUEUE_DELAY => "ue_dl_queue_delay_ms",
            UE_UL_AIR_DELAY => "ue_ul_air_delay_ms",
            UE_DL_DROP_RATE => "ue_dl_drop_rate",
            UE_UL_PRB => "ue_ul_prb_per_tti",
            UE_DL_PRB => "ue_dl_prb_per_tti",
            UE_UL_VOLUME => "ue_ul_volume_bytes",
            UE_DL_VOLUME => "ue_dl_volume_bytes",
            UE_CQI => "ue_cqi",
            UE_RSRP => "ue_rsrp_dbm",
            UE_SINR => "ue_sinr_db",
            CELL_UL_THROUGHPUT => "cell_ul_throughput_mbps",
            CELL_DL_THROUGHPUT => "cell_dl_throughput_mbps",
            CELL_UL_PRB => "cell_ul_prb_per_tti",
            CELL_DL_PRB => "cell_dl_prb_per_tti",
            CELL_UL_UTILIZATION => "cell_ul_utilization",
            CELL_DL_UTILIZATION => "cell_dl_utilization",
            _ => return None,
        })
    }
}

/// Static min-max ranges used for normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KpmRanges {
    pub rsrp_dbm: [f64; 2],
    pub rsrq_db: [f64; 2],
    pub sinr_db: [f64; 2],
    pub throughput_mbps: [f64; 2],
    pub cell_throughput_mbps: [f64; 2],
    pub delay_ms: [f64; 2],
    pub prb_per_tti: [f64; 2],
    pub volume_bytes: [f64; 2],
}

impl Default for KpmRanges {
    fn default() -> Self {
        KpmRanges {
            rsrp_dbm: [-130.0, -50.0],
            rsrq_db: [-25.0, 0.0],
            sinr_db: [-10.0, 30.0],
            throughput_mbps: [0.0, 20.0],
            cell_throughput_mbps: [0.0, 60.0],
            delay_ms: [0.0, 200.0],
            prb_per_tti: [0.0, 100.0],
            volume_bytes: [0.0, 40_000.0],
        }
    }
}

impl KpmRanges {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("rsrp_dbm", self.rsrp_dbm),
            ("rsrq_db", self.rsrq_db),
            ("sinr_db", self.sinr_db),
            ("throughput_mbps", self.throughput_mbps),
            ("cell_throughput_mbps", self.cell_throughput_mbps),
            ("delay_ms", self.delay_ms),
            ("prb_per_tti", self.prb_per_tti),
            ("volume_bytes", self.volume_bytes),
        ];
        for (name, [lo, hi]) in named {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(SimError::config(
                    format!("kpm_ranges.{name}"),
                    format!("need lo < hi, got [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }

    pub fn range(&self, id: u16) -> [f64; 2] {
        use feature::*;
        match id {
            EDGE_RSRP | UE_RSRP => self.rsrp_dbm,
            EDGE_RSRQ => self.rsrq_db,
            EDGE_SINR | UE_SINR => self.sinr_db,
            UE_UL_THROUGHPUT | UE_DL_THROUGHPUT => self.throughput_mbps,
            CELL_UL_THROUGHPUT | CELL_DL_THROUGHPUT => self.cell_throughput_mbps,
            UE_UL_QUEUE_DELAY | UE_DL_QUEUE_DELAY | UE_UL_AIR_DELAY => self.delay_ms,
            UE_UL_PRB | UE_DL_PRB | CELL_UL_PRB | CELL_DL_PRB => self.prb_per_tti,
            UE_UL_VOLUME | UE_DL_VOLUME => self.volume_bytes,
            UE_CQI => [0.0, 15.0],
            _ => [0.0, 1.0],
        }
    }

    pub fn normalize(&self, id: u16, raw: f64) -> f64 {
        let [lo, hi] = self.range(id);
        if raw.is_finite() {
            ((raw - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else if raw > 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReportKind {
    Edge { ue: usize, cell: usize },
    Ue { ue: usize },
    Cell { cell: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub id: u16,
    pub raw: f64,
    /// Min-max normalized into [0, 1].
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpmReport {
    pub timestamp_us: u64,
    pub kind: ReportKind,
    pub features: Vec<Feature>,
}

impl KpmReport {
    pub fn build(
        timestamp_us: u64,
        kind: ReportKind,
        raw: &[(u16, f64)],
        ranges: &KpmRanges,
    ) -> KpmReport {
        let features = raw
            .iter()
            .map(|&(id, r)| Feature {
                id,
                raw: r,
                value: ranges.normalize(id, r),
            })
            .collect();
        KpmReport {
            timestamp_us,
            kind,
            features,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.value).collect()
    }

    pub fn raw(&self, id: u16) -> Option<f64> {
        self.features.iter().find(|f| f.id == id).map(|f| f.raw)
    }

    pub fn value(&self, id: u16) -> Option<f64> {
        self.features.iter().find(|f| f.id == id).map(|f| f.value)
    }
}
