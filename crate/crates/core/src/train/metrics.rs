use serde::{Deserialize, Serialize};

/// Error metrics of one prediction set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mse: f64,
    /// Uncentred correlation `Σyŷ / √(Σy² Σŷ²)`.
    pub corr: f64,
    /// False when either vector is all zeros; `corr` is then reported as 0.
    pub corr_defined: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("metric inputs differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("metric inputs are empty")]
    Empty,
}

pub fn metrics(y: &[f64], y_hat: &[f64]) -> Result<Metrics, MetricsError> {
    if y.len() != y_hat.len() {
        return Err(MetricsError::LengthMismatch(y.len(), y_hat.len()));
    }
    if y.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = y.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let (mut cross, mut yy, mut hh) = (0.0, 0.0, 0.0);
    for (&a, &b) in y.iter().zip(y_hat) {
        abs += (a - b).abs();
        sq += (a - b) * (a - b);
        cross += a * b;
        yy += a * a;
        hh += b * b;
    }
    let corr_defined = yy > 0.0 && hh > 0.0;
    let corr = if corr_defined {
        (cross / (yy * hh).sqrt()).clamp(-1.0, 1.0)
    } else {
        log::warn!("correlation undefined for an all-zero vector; reporting 0");
        0.0
    };
    Ok(Metrics {
        mae: abs / n,
        mse: sq / n,
        corr,
        corr_defined,
    })
}

/// Learning rate of 0-based `epoch` under per-epoch halving.
pub fn learning_rate(lr0: f64, epoch: usize) -> f64 {
    lr0 * 0.5f64.powi(epoch as i32)
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_cases() {
        let m = metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m.mae, m.mse, m.corr), (0.0, 0.0, 1.0));
        assert_eq!(metrics(&[1.0, 0.0], &[0.0, 1.0]).unwrap().corr, 0.0);
        let m = metrics(&[1.0, 2.0], &[2.0, 4.0]).unwrap();
        assert_eq!((m.mae, m.mse, m.corr), (1.5, 2.5, 1.0));
    }

    #[test]
    fn undefined_corr_flagged() {
        let m = metrics(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert_eq!(m.corr, 0.0);
        assert!(!m.corr_defined);
        assert!(metrics(&[], &[]).is_err());
        assert!(metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn schedule() {
        assert_eq!(learning_rate(0.0005, 3), 0.0000625);
        for e in 0..20 {
            assert_eq!(learning_rate(0.0005, e), 0.0005 / 2f64.powi(e as i32));
        }
    }

    #[test]
    fn mean_std_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    proptest! {
        #[test]
        fn corr_properties(y in proptest::collection::vec(-100.0f64..100.0, 1..30), c in 0.01f64..50.0, seed in 0u64..1000) {
            prop_assume!(y.iter().any(|v| v.abs() > 1e-6));
            let m = metrics(&y, &y).unwrap();
            prop_assert!((m.corr - 1.0).abs() < 1e-12);
            let scaled: Vec<f64> = y.iter().map(|v| v * c).collect();
            prop_assert!((metrics(&y, &scaled).unwrap().corr - 1.0).abs() < 1e-12);
            let other: Vec<f64> = y.iter().enumerate().map(|(i, v)| v.sin() + (i as u64 ^ seed) as f64 * 0.1).collect();
            let a = metrics(&y, &other).unwrap();
            let b = metrics(&other, &y).unwrap();
            prop_assert_eq!(a.corr, b.corr);
            prop_assert!((-1.0..=1.0).contains(&a.corr));
            prop_assert!(a.mae >= 0.0 && a.mse >= 0.0);
        }
    }
}
