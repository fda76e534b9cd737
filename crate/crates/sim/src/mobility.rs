use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Back-and-forth walk along a polyline at constant speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mobility {
    pub waypoints: Vec<[f64; 2]>,
    #[serde(default)]
    pub speed_mps: f64,
    /// Arc length already travelled at t = 0.
    #[serde(default)]
    pub start_offset_m: f64,
}

impl Mobility {
    pub fn fixed(at: [f64; 2]) -> Mobility {
        Mobility {
            waypoints: vec![at],
            speed_mps: 0.0,
            start_offset_m: 0.0,
        }
    }

    pub fn line(from: [f64; 2], to: [f64; 2], speed_mps: f64) -> Mobility {
        Mobility {
            waypoints: vec![from, to],
            speed_mps,
            start_offset_m: 0.0,
        }
    }

    pub(crate) fn validate(&self, field: &str) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(SimError::config(
                format!("{field}.waypoints"),
                "need at least one waypoint",
            ));
        }
        if self.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SimError::config(
                format!("{field}.waypoints"),
                "must be finite",
            ));
        }
        if !(self.speed_mps >= 0.0 && self.speed_mps.is_finite()) {
            return Err(SimError::config(
                format!("{field}.speed_mps"),
                "must be finite and >= 0",
            ));
        }
        if !(self.start_offset_m >= 0.0 && self.start_offset_m.is_finite()) {
            return Err(SimError::config(
                format!("{field}.start_offset_m"),
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }

    fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| dist(w[0], w[1])).sum()
    }

    /// Position and velocity at time `t_s`.
    pub fn state_at(&self, t_s: f64) -> ([f64; 2], [f64; 2]) {
        let total = self.length();
        if total <= 0.0 || self.speed_mps == 0.0 {
            return (self.waypoints[0], [0.0, 0.0]);
        }
        let mut s = (self.start_offset_m + self.speed_mps * t_s) % (2.0 * total);
        let mut sign = 1.0;
        if s > total {
            s = 2.0 * total - s;
            sign = -1.0;
        }
        let last = self.waypoints.len() - 2;
        for (k, w) in self.waypoints.windows(2).enumerate() {
            let seg = dist(w[0], w[1]);
            if s <= seg || k == last {
                let f = if seg > 0.0 { (s / seg).min(1.0) } else { 0.0 };
                let pos = [
                    w[0][0] + f * (w[1][0] - w[0][0]),
                    w[0][1] + f * (w[1][1] - w[0][1]),
                ];
                let vel = if seg > 0.0 {
                    let k = sign * self.speed_mps / seg;
                    [k * (w[1][0] - w[0][0]), k * (w[1][1] - w[0][1])]
                } else {
                    [0.0, 0.0]
                };
                return (pos, vel);
            }
            s -= seg;
        }
        unreachable!("polyline with positive length has a last segment")
    }
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walks_out_and_back() {
        let m = Mobility::line([0.0, 0.0], [10.0, 0.0], 2.0);
        assert_eq!(m.state_at(0.0).0, [0.0, 0.0]);
        assert_eq!(m.state_at(2.5).0, [5.0, 0.0]);
        let (p, v) = m.state_at(7.5);
        assert!((p[0] - 5.0).abs() < 1e-12);
        assert!(v[0] < 0.0);
        assert!((m.state_at(10.0).0[0]).abs() < 1e-12);
    }

    #[test]
    fn polyline_corner() {
        let m = Mobility {
            waypoints: vec![[0.0, 0.0], [3.0, 0.0], [3.0, 4.0]],
            speed_mps: 1.0,
            start_offset_m: 0.0,
        };
        let (p, v) = m.state_at(5.0);
        assert!((p[0] - 3.0).abs() < 1e-12 && (p[1] - 2.0).abs() < 1e-12);
        assert!((v[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_never_moves() {
        let m = Mobility::fixed([1.0, 2.0]);
        assert_eq!(m.state_at(123.0), ([1.0, 2.0], [0.0, 0.0]));
    }
}
