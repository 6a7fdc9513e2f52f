//! Probability vectors and the helpers shared by the uncertainty code.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Tolerance used when checking that a probability vector sums to one.
pub fn sum_tolerance<T: Real>(k: usize) -> T {
    let floor = T::lit(1e-9);
    let scaled = T::epsilon() * T::lit(64.0) * T::from_usize_lossy(k);
    floor.max(scaled)
}

/// A categorical distribution over `K >= 2` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector<T> {
    values: Vec<T>,
}

impl<T: Real> ProbVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        validate(&values)?;
        Ok(Self { values })
    }

    /// Uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("probability vector needs at least 2 classes"));
        }
        let v = T::one() / T::from_usize_lossy(k);
        Ok(Self { values: vec![v; k] })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }

    pub fn max(&self) -> T {
        self.values[self.argmax()]
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }
}

pub(crate) fn validate<T: Real>(values: &[T]) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::invalid("probability vector needs at least 2 classes"));
    }
    if values
        .iter()
        .any(|&v| !v.is_finite() || v < T::zero() || v > T::one())
    {
        return Err(Error::invalid("probability entries must lie in [0, 1]"));
    }
    let sum: T = values.iter().copied().sum();
    if (sum - T::one()).abs() > sum_tolerance::<T>(values.len()) {
        return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// Lowest index of the maximum value.
pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Max-subtracted softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Result<ProbVector<T>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("softmax input contains NaN or infinity"));
    }
    if logits.len() < 2 {
        return Err(Error::invalid("softmax needs at least 2 logits"));
    }
    Ok(ProbVector {
        values: softmax_unchecked(logits),
    })
}

pub(crate) fn softmax_unchecked<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Shannon entropy in bits with `0 log 0 = 0`.
pub fn entropy_bits<T: Real>(p: &ProbVector<T>) -> T {
    entropy_bits_slice(p.values())
}

pub(crate) fn entropy_bits_slice<T: Real>(p: &[T]) -> T {
    let ln2 = T::lit(std::f64::consts::LN_2);
    let mut h = T::zero();
    for &v in p {
        if v > T::zero() {
            h -= v * (v.ln() / ln2);
        }
    }
    h.max(T::zero())
}

/// Channel-wise linear interpolation of a `T_in x L` series onto
/// `target_steps` evenly spaced positions `i * (T_in - 1) / (target_steps - 1)`.
///
/// Knots are copied bit-for-bit, so endpoints and identity resampling are
/// exact. A single-row input is repeated.
pub fn resample_linear<T: Real>(series: &Matrix<T>, target_steps: usize) -> Result<Matrix<T>> {
    if target_steps == 0 {
        return Err(Error::invalid("target_steps must be positive"));
    }
    let (t_in, channels) = (series.rows(), series.cols());
    if t_in == 0 || channels == 0 {
        return Err(Error::invalid("series must have at least one row and one channel"));
    }
    let mut out = Matrix::filled(target_steps, channels, T::zero());
    for i in 0..target_steps {
        let src = if t_in == 1 || target_steps == 1 {
            0.0
        } else {
            (i * (t_in - 1)) as f64 / (target_steps - 1) as f64
        };
        let lo = (src.floor() as usize).min(t_in - 1);
        let frac = src - lo as f64;
        if frac == 0.0 {
            out.row_mut(i).copy_from_slice(series.row(lo));
            continue;
        }
        let f = T::lit(frac);
        for c in 0..channels {
            let a = series.get(lo, c);
            let b = series.get(lo + 1, c);
            let v = a + (b - a) * f;
            out.set(i, c, v.max(a.min(b)).min(a.max(b)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbVector<f64> {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap().values(), &[0.5, 0.5]);
        for c in [-700.0, 0.0, 3.5, 1e6] {
            for &v in softmax(&[c, c, c]).unwrap().values() {
                assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
            }
        }
        let p = softmax(&[3f64.ln(), 0.0]).unwrap();
        assert_abs_diff_eq!(p.values()[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(p.values()[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax(&[0.0, f64::NAN]).is_err());
        assert!(softmax(&[f64::INFINITY, 0.0]).is_err());
        assert!(softmax(&[1.0f64]).is_err());
    }

    #[test]
    fn softmax_f32() {
        let p = softmax(&[3f32.ln(), 0.0]).unwrap();
        assert!((p.values()[0] - 0.75).abs() < 1e-6);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_bits(&pv(&[1.0, 0.0])), 0.0);
        assert_eq!(entropy_bits(&pv(&[0.5, 0.5])), 1.0);
        assert_abs_diff_eq!(entropy_bits(&pv(&[0.25, 0.75])), 0.811278, epsilon = 1e-6);
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![1.0]).is_err());
        assert!(ProbVector::new(vec![0.6, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.5 + 1e-12]).is_ok());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
    }

    #[test]
    fn resample_examples() {
        let m = Matrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let r = resample_linear(&m, 4).unwrap();
        assert_eq!(r.as_slice(), &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);

        let single = Matrix::from_vec(1, 1, vec![5.0]).unwrap();
        assert_eq!(resample_linear(&single, 3).unwrap().as_slice(), &[5.0, 5.0, 5.0]);

        let data: Vec<f64> = (0..64 * 13).map(|i| (i as f64 * 0.37).sin()).collect();
        let full = Matrix::from_vec(64, 13, data).unwrap();
        assert_eq!(resample_linear(&full, 64).unwrap(), full);

        assert!(resample_linear(&m, 0).is_err());
    }

    #[test]
    fn resample_preserves_endpoints() {
        let data: Vec<f64> = (0..32 * 2).map(|i| (i as f64).sqrt()).collect();
        let m = Matrix::from_vec(32, 2, data).unwrap();
        let r = resample_linear(&m, 64).unwrap();
        assert_eq!(r.row(0), m.row(0));
        assert_eq!(r.row(63), m.row(31));
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(
            logits in prop::collection::vec(-50.0f64..50.0, 2..20),
            shift in -100.0f64..100.0,
        ) {
            let a = softmax(&logits).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
            let b = softmax(&shifted).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn entropy_bounds(logits in prop::collection::vec(-20.0f64..20.0, 2..30)) {
            let p = softmax(&logits).unwrap();
            let h = entropy_bits(&p);
            let cap = (p.len() as f64).log2();
            prop_assert!(h >= 0.0 && h <= cap + 1e-9);
        }

        #[test]
        fn entropy_max_iff_uniform(k in 2usize..60) {
            let u = ProbVector::<f64>::uniform(k).unwrap();
            prop_assert!((entropy_bits(&u) - (k as f64).log2()).abs() < 1e-9);
            let mut one_hot = vec![0.0; k];
            one_hot[k / 2] = 1.0;
            prop_assert_eq!(entropy_bits(&ProbVector::new(one_hot).unwrap()), 0.0);
        }

        #[test]
        fn resample_monotone_channel_stays_in_range(
            mut knots in prop::collection::vec(-1e3f64..1e3, 1..40),
            target in 1usize..130,
        ) {
            knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let lo = knots[0];
            let hi = *knots.last().unwrap();
            let m = Matrix::from_vec(knots.len(), 1, knots.clone()).unwrap();
            let r = resample_linear(&m, target).unwrap();
            for &v in r.as_slice() {
                prop_assert!(v >= lo && v <= hi);
            }
            for w in r.as_slice().windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
        }
    }
}
