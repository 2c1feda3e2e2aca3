//! Small statistics kit for comparing runs: Welch's t-test for accuracy
//! differences across seeds and Spearman rank correlation for dose-response
//! checks.

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("statistic undefined: {0}")]
    Degenerate(&'static str),
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n - 1 denominator).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub degrees_of_freedom: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Welch's unequal-variance t-test, two-sided.
///
/// Both groups need at least two values. When both variances vanish the
/// test degenerates: equal means give p = 1, different means give p = 0.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult, StatsError> {
    for xs in [a, b] {
        if xs.len() < 2 {
            return Err(StatsError::TooFewValues { needed: 2, got: xs.len() });
        }
    }
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (variance(a), variance(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sea = va / na;
    let seb = vb / nb;
    if sea + seb == 0.0 {
        let same = ma == mb;
        return Ok(WelchResult {
            t: if same { 0.0 } else { f64::INFINITY.copysign(ma - mb) },
            degrees_of_freedom: na + nb - 2.0,
            p_value: if same { 1.0 } else { 0.0 },
        });
    }
    let t = (ma - mb) / (sea + seb).sqrt();
    let df = (sea + seb) * (sea + seb)
        / (sea * sea / (na - 1.0) + seb * seb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    let p_value = 2.0 * dist.cdf(-t.abs());
    Ok(WelchResult { t, degrees_of_freedom: df, p_value })
}

/// Ranks with ties sharing the average of their positions (1-based).
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).expect("finite values"));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the rank (i + j)/2 + 1.
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(StatsError::TooFewValues { needed: 2, got: xs.len() });
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in rx.iter().zip(&ry) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(StatsError::Degenerate("constant input has no rank order"));
    }
    Ok(cov / (vx * vy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_std_match_hand_values() {
        let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        assert_eq!(mean(&xs), 5.0);
        // Sum of squared deviations is 32, n - 1 = 7.
        assert!((variance(&xs) - 32.0 / 7.0).abs() < 1e-12);
    }

    // With one group constant the Welch degrees of freedom collapse to
    // n - 1 of the other group, and Student's t has closed-form CDFs at
    // df = 1 (Cauchy) and df = 2. That checks the whole pipeline against
    // pencil-and-paper values.
    #[test]
    fn welch_matches_cauchy_closed_form_at_df_one() {
        let a = [0.0, 2.0];
        let b = [5.0, 5.0, 5.0];
        let r = welch_t_test(&a, &b).unwrap();
        assert!((r.t - -4.0).abs() < 1e-12);
        assert!((r.degrees_of_freedom - 1.0).abs() < 1e-12);
        let expected = 1.0 - 2.0 * (4.0f64).atan() / std::f64::consts::PI;
        assert!((r.p_value - expected).abs() < 1e-10, "p = {}", r.p_value);
    }

    #[test]
    fn welch_matches_closed_form_at_df_two() {
        let a = [-1.0, 0.0, 1.0];
        let b = [-1.0, -1.0, -1.0];
        let r = welch_t_test(&a, &b).unwrap();
        let t = 3.0f64.sqrt();
        assert!((r.t - t).abs() < 1e-12);
        assert!((r.degrees_of_freedom - 2.0).abs() < 1e-12);
        // CDF of t with df = 2 is 1/2 + x / (2 sqrt(2 + x^2)).
        let expected = 2.0 * (0.5 - t / (2.0 * (2.0 + t * t).sqrt()));
        assert!((r.p_value - expected).abs() < 1e-10, "p = {}", r.p_value);
    }

    #[test]
    fn welch_is_antisymmetric_and_null_on_identical_groups() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.5, 3.5, 4.5, 6.0];
        let ab = welch_t_test(&a, &b).unwrap();
        let ba = welch_t_test(&b, &a).unwrap();
        assert_eq!(ab.t, -ba.t);
        assert_eq!(ab.p_value, ba.p_value);
        let same = welch_t_test(&a, &a).unwrap();
        assert_eq!(same.t, 0.0);
        assert!((same.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn welch_degenerates_cleanly_on_zero_variance() {
        let r = welch_t_test(&[3.0, 3.0], &[3.0, 3.0]).unwrap();
        assert_eq!(r.p_value, 1.0);
        let r = welch_t_test(&[4.0, 4.0], &[3.0, 3.0]).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.t, f64::INFINITY);
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ranks_average_over_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 30.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(average_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn spearman_hits_exact_values() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let up = [10.0, 20.0, 30.0, 40.0];
        let down = [9.0, 7.0, 5.0, 3.0];
        assert!((spearman(&xs, &up).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&xs, &down).unwrap() + 1.0).abs() < 1e-12);
        // Tied pair in x: ranks [1, 2.5, 2.5, 4] against [1, 2, 3, 4]
        // gives 4.5 / sqrt(4.5 * 5) = 3 / sqrt(10).
        let tied = [1.0, 2.0, 2.0, 3.0];
        let r = spearman(&tied, &xs).unwrap();
        assert!((r - 3.0 / 10.0f64.sqrt()).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn spearman_ignores_monotone_transforms() {
        let xs: [f64; 5] = [0.1, 0.4, 0.9, 1.6, 2.5];
        let exp: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        assert!((spearman(&xs, &exp).unwrap() - 1.0).abs() < 1e-12);
    }
}
