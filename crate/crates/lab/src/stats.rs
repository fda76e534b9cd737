use crate::error::{LabError, Result};

/// Nearest-rank percentiles: the value at rank `ceil(p/100 * n)` of the
/// sorted samples, with rank at least 1.
pub fn percentiles(samples: &[f64], ps: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(LabError::Analysis("percentile of an empty sample".into()));
    }
    if let Some(p) = ps.iter().find(|p| !(0.0..=100.0).contains(*p)) {
        return Err(LabError::Analysis(format!(
            "percentile {p} outside [0, 100]"
        )));
    }
    Ok(ps
        .iter()
        .map(|&p| ho_agent::nearest_rank(samples, p).expect("non-empty"))
        .collect())
}

/// Median with the lower middle element for even counts, so the result is
/// always an observed value.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (!v.is_empty()).then(|| v[(v.len() - 1) / 2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentiles(&xs, &[95.0]).unwrap(), vec![95.0]);
        assert_eq!(
            percentiles(&xs, &[0.0, 50.0, 100.0]).unwrap(),
            vec![1.0, 50.0, 100.0]
        );
        assert_eq!(
            percentiles(&[7.0], &[1.0, 50.0, 99.0]).unwrap(),
            vec![7.0; 3]
        );
        assert!(percentiles(&[], &[50.0]).is_err());
        assert!(percentiles(&[1.0], &[101.0]).is_err());
    }

    #[test]
    fn median_picks_an_observed_value() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.0));
        assert_eq!(median(&[]), None);
    }
}
