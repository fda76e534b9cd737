//! Fixed (non-learned) sinusoidal encoding of elapsed time.

/// `phi(dt)`: sine/cosine pairs of `ln(1 + dt_ms)` at geometrically spaced
/// frequencies `1, 1/2, 1/4, ...`. An odd `dim` ends with a lone sine.
pub fn encode_time(dt_us: u64, dim: usize) -> Vec<f64> {
    let x = (1.0 + dt_us as f64 * 1e-3).ln();
    let mut out = Vec::with_capacity(dim);
    let mut k = 0;
    while out.len() < dim {
        let w = 0.5f64.powi(k);
        out.push((w * x).sin());
        if out.len() < dim {
            out.push((w * x).cos());
        }
        k += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_elapsed_is_sin0_cos0() {
        let v = encode_time(0, 8);
        assert_eq!(v, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn odd_dims_and_bounds() {
        let v = encode_time(123_456, 5);
        assert_eq!(v.len(), 5);
        assert!(v.iter().all(|x| x.abs() <= 1.0));
        let e = std::f64::consts::E - 1.0;
        // dt = e - 1 ms gives ln(1 + dt) = 1
        let v = encode_time((e * 1000.0).round() as u64, 2);
        assert!((v[0] - 1f64.sin()).abs() < 1e-3);
    }
}
