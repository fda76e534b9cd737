use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrafficKind {
    Persistent,
    /// Exponential on/off periods; traffic flows only while on.
    Bursty {
        mean_on_ms: f64,
        mean_off_ms: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    #[serde(flatten)]
    pub kind: TrafficKind,
    pub ul_mbps: f64,
    pub dl_mbps: f64,
    pub packet_bytes: u32,
}

impl TrafficProfile {
    pub fn persistent(ul_mbps: f64, dl_mbps: f64, packet_bytes: u32) -> Self {
        TrafficProfile {
            kind: TrafficKind::Persistent,
            ul_mbps,
            dl_mbps,
            packet_bytes,
        }
    }

    pub fn idle() -> Self {
        Self::persistent(0.0, 0.0, 1000)
    }

    pub(crate) fn validate(&self, field: &str) -> Result<()> {
        for (name, v) in [("ul_mbps", self.ul_mbps), ("dl_mbps", self.dl_mbps)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::config(
                    format!("{field}.{name}"),
                    "must be finite and >= 0",
                ));
            }
        }
        if self.packet_bytes == 0 {
            return Err(SimError::config(
                format!("{field}.packet_bytes"),
                "must be > 0",
            ));
        }
        if let TrafficKind::Bursty {
            mean_on_ms,
            mean_off_ms,
        } = self.kind
        {
            if !(mean_on_ms > 0.0 && mean_off_ms > 0.0) {
                return Err(SimError::config(
                    format!("{field}.mean_on_ms"),
                    "on/off means must be > 0",
                ));
            }
        }
        Ok(())
    }
}

/// Per-UE arrival process. Rates are turned into packets with a byte credit
/// so that a constant rate yields evenly spaced packets.
#[derive(Clone, Debug)]
pub struct TrafficSource {
    profile: TrafficProfile,
    on: bool,
    switch_at_us: u64,
    ul_credit: f64,
    dl_credit: f64,
    rng: ChaCha8Rng,
}

impl TrafficSource {
    pub fn new(profile: TrafficProfile, mut rng: ChaCha8Rng) -> Self {
        let (on, switch_at_us) = match profile.kind {
            TrafficKind::Persistent => (true, u64::MAX),
            TrafficKind::Bursty {
                mean_on_ms,
                mean_off_ms,
            } => {
                let on = rng.random::<f64>() < mean_on_ms / (mean_on_ms + mean_off_ms);
                let mean = if on { mean_on_ms } else { mean_off_ms };
                (on, draw_us(&mut rng, mean))
            }
        };
        TrafficSource {
            profile,
            on,
            switch_at_us,
            ul_credit: 0.0,
            dl_credit: 0.0,
            rng,
        }
    }

    pub fn profile(&self) -> &TrafficProfile {
        &self.profile
    }

    pub fn is_on(&self) -> bool {
        self.on
    }

    /// Number of (uplink, downlink) packets arriving in `[now, now + tti)`.
    pub fn arrivals(&mut self, now_us: u64, tti_us: u64) -> (u32, u32) {
        if let TrafficKind::Bursty {
            mean_on_ms,
            mean_off_ms,
        } = self.profile.kind
        {
            while now_us >= self.switch_at_us {
                self.on = !self.on;
                let mean = if self.on { mean_on_ms } else { mean_off_ms };
                self.switch_at_us += draw_us(&mut self.rng, mean).max(1);
            }
        }
        if !self.on {
            return (0, 0);
        }
        let secs = tti_us as f64 * 1e-6;
        let size = self.profile.packet_bytes as f64;
        self.ul_credit += self.profile.ul_mbps * 1e6 / 8.0 * secs;
        self.dl_credit += self.profile.dl_mbps * 1e6 / 8.0 * secs;
        let ul = (self.ul_credit / size).floor();
        let dl = (self.dl_credit / size).floor();
        self.ul_credit -= ul * size;
        self.dl_credit -= dl * size;
        (ul as u32, dl as u32)
    }
}

fn draw_us(rng: &mut ChaCha8Rng, mean_ms: f64) -> u64 {
    let d = Exp::new(1.0 / mean_ms).expect("validated positive mean");
    (d.sample(rng) * 1000.0).round() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn persistent_rate_is_exact_over_time() {
        // 8 Mbps with 1000-byte packets is one packet per millisecond.
        let mut src = TrafficSource::new(
            TrafficProfile::persistent(0.0, 8.0, 1000),
            ChaCha8Rng::seed_from_u64(0),
        );
        let total: u32 = (0..1000).map(|k| src.arrivals(k * 1000, 1000).1).sum();
        assert_eq!(total, 1000);
    }

    #[test]
    fn idle_generates_nothing() {
        let mut src = TrafficSource::new(TrafficProfile::idle(), ChaCha8Rng::seed_from_u64(0));
        assert!((0..100).all(|k| src.arrivals(k * 1000, 1000) == (0, 0)));
    }

    #[test]
    fn bursty_duty_cycle_roughly_matches() {
        let profile = TrafficProfile {
            kind: TrafficKind::Bursty {
                mean_on_ms: 100.0,
                mean_off_ms: 300.0,
            },
            ul_mbps: 8.0,
            dl_mbps: 0.0,
            packet_bytes: 1000,
        };
        let mut src = TrafficSource::new(profile, ChaCha8Rng::seed_from_u64(3));
        let n = 400_000u64;
        let on: u64 = (0..n).map(|k| src.arrivals(k * 1000, 1000).0 as u64).sum();
        let duty = on as f64 / n as f64;
        assert!((duty - 0.25).abs() < 0.05, "{duty}");
    }
}
