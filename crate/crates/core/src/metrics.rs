//! Reconstruction error and support-recovery scores.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// MAP threshold for a Bernoulli marginal.
pub const MAP_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreReport {
    pub nmse: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Support-recovery counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            // Nothing predicted: vacuously precise.
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    /// Harmonic mean of precision and recall. Both supports empty scores 1;
    /// an empty prediction against a non-empty truth scores 0.
    pub fn f_measure(&self) -> f64 {
        if self.tp + self.fp + self.fn_ == 0 {
            return 1.0;
        }
        if self.tp == 0 {
            return 0.0;
        }
        let p = self.precision();
        let r = self.recall();
        2.0 * p * r / (p + r)
    }
}

/// `Σ (X − X̂)² / Σ X²`.
pub fn nmse(x_true: &DMatrix<f64>, x_hat: &DMatrix<f64>) -> Result<f64> {
    if x_true.shape() != x_hat.shape() {
        return Err(Error::dim(format!(
            "X is {:?} but the estimate is {:?}",
            x_true.shape(),
            x_hat.shape()
        )));
    }
    let denom = x_true.norm_squared();
    if denom == 0.0 {
        return Err(Error::config("NMSE is undefined for an all-zero signal"));
    }
    Ok((x_true - x_hat).norm_squared() / denom)
}

pub fn confusion(z_true: &DMatrix<u8>, support_prob: &DMatrix<f64>, threshold: f64) -> Result<Confusion> {
    if z_true.shape() != support_prob.shape() {
        return Err(Error::dim(format!(
            "Z is {:?} but support probabilities are {:?}",
            z_true.shape(),
            support_prob.shape()
        )));
    }
    let mut c = Confusion::default();
    for (&z, &p) in z_true.iter().zip(support_prob.iter()) {
        match (z == 1, p > threshold) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

/// Support precision, recall and F-measure of `[support_prob > threshold]`;
/// the `nmse` field is left at NaN (see [`score`]).
pub fn support_f_measure(z_true: &DMatrix<u8>, support_prob: &DMatrix<f64>, threshold: f64) -> Result<ScoreReport> {
    let c = confusion(z_true, support_prob, threshold)?;
    Ok(ScoreReport {
        nmse: f64::NAN,
        precision: c.precision(),
        recall: c.recall(),
        f_measure: c.f_measure(),
    })
}

/// Full report: NMSE of `x_hat` and support scores at the MAP threshold.
pub fn score(
    x_true: &DMatrix<f64>,
    x_hat: &DMatrix<f64>,
    z_true: &DMatrix<u8>,
    support_prob: &DMatrix<f64>,
) -> Result<ScoreReport> {
    let mut r = support_f_measure(z_true, support_prob, MAP_THRESHOLD)?;
    r.nmse = nmse(x_true, x_hat)?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn nmse_examples() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(nmse(&x, &x).unwrap(), 0.0);
        assert_eq!(nmse(&x, &DMatrix::zeros(2, 2)).unwrap(), 1.0);
        let h = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(nmse(&x, &h).unwrap(), 0.125, epsilon = 1e-15);
        assert!(nmse(&DMatrix::zeros(2, 2), &h).is_err());
    }

    #[test]
    fn f_measure_examples() {
        let z = DMatrix::from_row_slice(2, 2, &[1, 0, 1, 1]);
        let exact = z.map(|v| if v == 1 { 0.9 } else { 0.1 });
        assert_eq!(support_f_measure(&z, &exact, 0.5).unwrap().f_measure, 1.0);
        let flipped = z.map(|v| if v == 1 { 0.1 } else { 0.9 });
        assert_eq!(support_f_measure(&z, &flipped, 0.5).unwrap().f_measure, 0.0);

        let c = Confusion { tp: 8, fp: 2, fn_: 12 };
        assert_abs_diff_eq!(c.precision(), 0.8);
        assert_abs_diff_eq!(c.recall(), 0.4);
        assert_abs_diff_eq!(c.f_measure(), 2.0 * 0.32 / 1.2, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_conventions() {
        let empty = DMatrix::<u8>::zeros(2, 2);
        let low = DMatrix::from_element(2, 2, 0.1);
        assert_eq!(support_f_measure(&empty, &low, 0.5).unwrap().f_measure, 1.0);
        let full = DMatrix::<u8>::from_element(2, 2, 1);
        assert_eq!(support_f_measure(&full, &low, 0.5).unwrap().f_measure, 0.0);
    }

    proptest! {
        #[test]
        fn f_is_bounded_and_threshold_monotone(
            bits in proptest::collection::vec(0u8..2, 12),
            probs in proptest::collection::vec(0.0f64..1.0, 12),
        ) {
            let z = DMatrix::from_vec(3, 4, bits);
            let p = DMatrix::from_vec(3, 4, probs);
            let mut last = usize::MAX;
            for k in 1..20 {
                let th = k as f64 / 20.0;
                let c = confusion(&z, &p, th).unwrap();
                let f = c.f_measure();
                prop_assert!((0.0..=1.0).contains(&f));
                prop_assert!(c.tp + c.fp <= last);
                last = c.tp + c.fp;
            }
        }

        #[test]
        fn nmse_sign_invariant(
            x in proptest::collection::vec(-3.0f64..3.0, 6),
            h in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let x = DMatrix::from_vec(2, 3, x);
            let h = DMatrix::from_vec(2, 3, h);
            prop_assume!(x.norm_squared() > 1e-6);
            let a = nmse(&x, &h).unwrap();
            let b = nmse(&(-&x), &(-&h)).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
