use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::special::student_t_two_sided_p;

/// Result of a two-sided t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestOutcome<T> {
    pub t_statistic: T,
    pub degrees_of_freedom: T,
    pub p_value: T,
    /// Both samples had zero variance; `p_value` is then exactly 0 or 1.
    pub degenerate: bool,
}

/// Mean and unbiased variance. Values are summed in sorted order so the
/// result does not depend on the order of the sample.
fn mean_var<T: Scalar>(xs: &[T]) -> (T, T) {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = T::from_usize_lossy(sorted.len());
    let mean = sorted.iter().copied().sum::<T>() / n;
    let mut sq: Vec<T> = sorted.iter().map(|&x| (x - mean) * (x - mean)).collect();
    sq.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let var = sq.into_iter().sum::<T>() / (n - T::one());
    (mean, var)
}

fn check_sample<T: Scalar>(xs: &[T], which: &str) -> Result<()> {
    if xs.len() < 2 {
        return Err(Error::Empty(format!(
            "t-test needs at least 2 values in sample {which}, got {}",
            xs.len()
        )));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("t-test sample {which}")));
    }
    Ok(())
}

fn degenerate<T: Scalar>(diff: T, df: T) -> TTestOutcome<T> {
    let (t, p) = if diff == T::zero() {
        (T::zero(), T::one())
    } else {
        (diff.signum() * T::infinity(), T::zero())
    };
    TTestOutcome {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
        degenerate: true,
    }
}

/// Welch's unequal-variance t-test, two-sided, with Welch–Satterthwaite
/// degrees of freedom.
///
/// When both samples have zero variance the test degenerates: equal means
/// give `t = 0, p = 1`, different means give `t = ±∞, p = 0`, with
/// `n_a + n_b − 2` reported as degrees of freedom.
pub fn welch_ttest_two_sided<T: Scalar>(a: &[T], b: &[T]) -> Result<TTestOutcome<T>> {
    check_sample(a, "a")?;
    check_sample(b, "b")?;
    let (na, nb) = (T::from_usize_lossy(a.len()), T::from_usize_lossy(b.len()));
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == T::zero() {
        return Ok(degenerate(ma - mb, na + nb - T::lit(2.0)));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - T::one()) + sb * sb / (nb - T::one()));
    Ok(TTestOutcome {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: student_t_two_sided_p(t, df),
        degenerate: false,
    })
}

/// One-sample two-sided t-test of `H0: mean = mu0`.
pub fn one_sample_ttest_two_sided<T: Scalar>(a: &[T], mu0: T) -> Result<TTestOutcome<T>> {
    check_sample(a, "a")?;
    let n = T::from_usize_lossy(a.len());
    let (m, v) = mean_var(a);
    let df = n - T::one();
    if v == T::zero() {
        return Ok(degenerate(m - mu0, df));
    }
    let t = (m - mu0) / (v / n).sqrt();
    Ok(TTestOutcome {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: student_t_two_sided_p(t, df),
        degenerate: false,
    })
}

/// Bonferroni-corrected decision `p < alpha / m` (strict).
pub fn bonferroni_significant<T: Scalar>(p: T, alpha: T, m: usize) -> bool {
    debug_assert!(m > 0, "number of comparisons must be positive");
    p < alpha / T::from_usize_lossy(m)
}
