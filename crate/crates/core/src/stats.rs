//! Nonparametric tests and descriptive summaries.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("counts sum to zero")]
    ZeroTotal,
    #[error("need at least 2 non-empty groups and 3 observations")]
    TooFewGroups,
    #[error("non-finite value in sample")]
    NonFinite,
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub significant_at_05: bool,
}

impl TestResult {
    pub fn new(name: impl Into<String>, statistic: f64, p_value: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            name: name.into(),
            statistic,
            p_value,
            significant_at_05: p_value < 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
}

fn check(sample: &[f64]) -> Result<()> {
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Type-7 quantile of sorted data: linear interpolation between closest ranks.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn describe(sample: &[f64]) -> Result<Summary> {
    check(sample)?;
    let n = sample.len();
    let mean = sample.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let s = sorted(sample);
    Ok(Summary {
        n,
        mean,
        sd,
        p25: quantile_sorted(&s, 0.25),
        median: quantile_sorted(&s, 0.5),
        p75: quantile_sorted(&s, 0.75),
    })
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // theta-function form converges fast for small λ
        let pi2 = std::f64::consts::PI.powi(2);
        let mut cdf = 0.0;
        for j in 1..=50 {
            let k = (2 * j - 1) as f64;
            cdf += (-k * k * pi2 / (8.0 * lambda * lambda)).exp();
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / lambda;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        sum += if j as u64 % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Largest absolute ECDF difference, merging the sorted samples once.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a)?;
    check(b)?;
    let (sa, sb) = (sorted(a), sorted(b));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let d = ks_statistic(a, b)?;
    let en = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let p = if d == 0.0 { 1.0 } else { kolmogorov_sf(en.sqrt() * d) };
    Ok(TestResult::new("ks_two_sample", d, p))
}

fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df).expect("positive df").sf(x)
}

/// Goodness of fit of two counts to an even split, one degree of freedom.
pub fn chi_square_equal(a: u64, b: u64) -> Result<TestResult> {
    let total = (a + b) as f64;
    if total == 0.0 {
        return Err(StatsError::ZeroTotal);
    }
    let e = total / 2.0;
    let chi2 = ((a as f64 - e).powi(2) + (b as f64 - e).powi(2)) / e;
    Ok(TestResult::new("chi_square_equal", chi2, chi2_sf(chi2, 1.0)))
}

/// Pearson test of independence on an `r × c` contingency table. Empty rows
/// and columns are ignored.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<TestResult> {
    let cols = table.first().map_or(0, Vec::len);
    let row_tot: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_tot: Vec<f64> = (0..cols)
        .map(|j| table.iter().map(|r| r.get(j).copied().unwrap_or(0)).sum::<u64>() as f64)
        .collect();
    let total: f64 = row_tot.iter().sum();
    if total == 0.0 {
        return Err(StatsError::ZeroTotal);
    }
    let live_r = row_tot.iter().filter(|&&v| v > 0.0).count();
    let live_c = col_tot.iter().filter(|&&v| v > 0.0).count();
    if live_r < 2 || live_c < 2 {
        return Ok(TestResult::new("chi_square_independence", 0.0, 1.0));
    }
    let mut chi2 = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = row_tot[i] * col_tot[j] / total;
            if e > 0.0 {
                chi2 += (o as f64 - e).powi(2) / e;
            }
        }
    }
    let df = ((live_r - 1) * (live_c - 1)) as f64;
    Ok(TestResult::new("chi_square_independence", chi2, chi2_sf(chi2, df)))
}

/// Midranks (1-based) of the values plus `Σ (t³ - t)` over tie groups.
fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&x, &y| values[x].total_cmp(&values[y]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<TestResult> {
    if groups.len() < 2 || groups.iter().any(|g| g.is_empty()) {
        return Err(StatsError::TooFewGroups);
    }
    for g in groups {
        check(g)?;
    }
    let all: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let n = all.len() as f64;
    if all.len() < 3 {
        return Err(StatsError::TooFewGroups);
    }
    let (ranks, ties) = midranks(&all);
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(TestResult::new("kruskal_wallis", 0.0, 1.0));
    }
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = ((12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / correction).max(0.0);
    let df = (groups.len() - 1) as f64;
    Ok(TestResult::new("kruskal_wallis", h, chi2_sf(h, df)))
}

/// Two-sided Wilcoxon signed-rank test of a zero median, normal approximation
/// with tie correction. Zeros are dropped. The statistic reported is the
/// standardized `z`.
pub fn wilcoxon_signed_rank(sample: &[f64]) -> Result<TestResult> {
    check(sample)?;
    let nonzero: Vec<f64> = sample.iter().copied().filter(|&v| v != 0.0).collect();
    if nonzero.is_empty() {
        return Ok(TestResult::new("wilcoxon_signed_rank", 0.0, 1.0));
    }
    let abs: Vec<f64> = nonzero.iter().map(|v| v.abs()).collect();
    let (ranks, ties) = midranks(&abs);
    let n = nonzero.len() as f64;
    let w_plus: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let mean = n * (n + 1.0) / 4.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    if var <= 0.0 {
        return Ok(TestResult::new("wilcoxon_signed_rank", 0.0, 1.0));
    }
    let z = (w_plus - mean) / var.sqrt();
    let normal = Normal::standard();
    let p = 2.0 * normal.sf(z.abs());
    Ok(TestResult::new("wilcoxon_signed_rank", z, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn describe_by_hand() {
        let s = describe(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((s.mean, s.median, s.p25, s.p75), (3.0, 3.0, 2.0, 4.0));
        assert_abs_diff_eq!(s.sd, 2.5f64.sqrt(), epsilon = 1e-15);
        let c = describe(&[7.0; 4]).unwrap();
        assert_eq!((c.sd, c.p25, c.median, c.p75), (0.0, 7.0, 7.0, 7.0));
        let one = describe(&[4.5]).unwrap();
        assert_eq!((one.mean, one.median, one.sd), (4.5, 4.5, 0.0));
        assert_eq!(describe(&[]), Err(StatsError::EmptySample));
        let q = describe(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((q.p25, q.median, q.p75), (1.75, 2.5, 3.25));
    }

    #[test]
    fn ks_examples() {
        let same = ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((same.statistic, same.p_value), (0.0, 1.0));
        let apart = ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(apart.statistic, 1.0);
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    #[test]
    fn kolmogorov_branches_meet() {
        for lam in [0.5, 0.9, 0.99, 1.0, 1.01, 1.36, 2.0] {
            let p = kolmogorov_sf(lam);
            assert!((0.0..=1.0).contains(&p));
        }
        assert_abs_diff_eq!(kolmogorov_sf(0.9999999), kolmogorov_sf(1.0000001), epsilon = 1e-6);
        // classic 5% critical value
        assert_abs_diff_eq!(kolmogorov_sf(1.358), 0.05, epsilon = 5e-4);
    }

    #[test]
    fn chi_square_examples() {
        let even = chi_square_equal(50, 50).unwrap();
        assert_eq!((even.statistic, even.p_value), (0.0, 1.0));
        let r = chi_square_equal(75, 25).unwrap();
        assert_eq!(r.statistic, 25.0);
        assert!((r.p_value - 5.733e-7).abs() < 1e-9);
        assert_eq!(chi_square_equal(0, 100).unwrap().statistic, 100.0);
        assert_eq!(chi_square_equal(0, 0), Err(StatsError::ZeroTotal));
    }

    #[test]
    fn independence_by_hand() {
        // expected 25 everywhere, each cell off by 15
        let r = chi_square_independence(&[vec![40, 10], vec![10, 40]]).unwrap();
        assert_abs_diff_eq!(r.statistic, 4.0 * 225.0 / 25.0, epsilon = 1e-12);
        assert!(r.p_value < 1e-6);
        let flat = chi_square_independence(&[vec![10, 10], vec![5, 5], vec![0, 0]]).unwrap();
        assert_eq!(flat.statistic, 0.0);
        assert_eq!(chi_square_independence(&[vec![0, 0]]), Err(StatsError::ZeroTotal));
    }

    #[test]
    fn kruskal_examples() {
        let a = [1.0, 2.0, 3.0];
        let same = kruskal_wallis(&[&a, &a]).unwrap();
        assert_eq!((same.statistic, same.p_value), (0.0, 1.0));
        let r = kruskal_wallis(&[&a, &[4.0, 5.0, 6.0]]).unwrap();
        // 12/(6·7)·(36/3 + 225/3) - 21
        assert_abs_diff_eq!(r.statistic, 27.0 / 7.0, epsilon = 1e-12);
        assert_eq!(kruskal_wallis(&[&a]), Err(StatsError::TooFewGroups));
        let tied = kruskal_wallis(&[&[2.0, 2.0], &[2.0]]).unwrap();
        assert_eq!(tied.p_value, 1.0);
    }

    #[test]
    fn wilcoxon_detects_shift() {
        let centered: Vec<f64> = (-50..=50).map(|i| i as f64).collect();
        assert!(!wilcoxon_signed_rank(&centered).unwrap().significant_at_05);
        let shifted: Vec<f64> = centered.iter().map(|v| v + 30.0).collect();
        assert!(wilcoxon_signed_rank(&shifted).unwrap().significant_at_05);
        assert_eq!(wilcoxon_signed_rank(&[0.0, 0.0]).unwrap().p_value, 1.0);
    }

    fn sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 1..60)
    }

    proptest! {
        #[test]
        fn ks_symmetric_and_bounded(a in sample(), b in sample()) {
            let ab = ks_two_sample(&a, &b).unwrap();
            let ba = ks_two_sample(&b, &a).unwrap();
            prop_assert_eq!(ab.statistic, ba.statistic);
            prop_assert!((0.0..=1.0).contains(&ab.statistic));
            prop_assert!((0.0..=1.0).contains(&ab.p_value));
        }

        #[test]
        fn kruskal_rank_based(a in sample(), b in sample(), c in sample()) {
            prop_assume!(a.len() + b.len() + c.len() >= 3);
            let r = kruskal_wallis(&[&a, &b, &c]).unwrap();
            let f = |v: &Vec<f64>| -> Vec<f64> { v.iter().map(|x| (x / 50.0).exp() * 3.0 + 1.0).collect() };
            let t = kruskal_wallis(&[&f(&a), &f(&b), &f(&c)]).unwrap();
            prop_assert!((r.statistic - t.statistic).abs() < 1e-9);
            prop_assert!(r.statistic >= 0.0 && (0.0..=1.0).contains(&r.p_value));
            prop_assert_eq!(r.significant_at_05, r.p_value < 0.05);
        }

        #[test]
        fn describe_copies_keep_mean(s in sample(), k in 1usize..5) {
            let rep: Vec<f64> = (0..k).flat_map(|_| s.iter().copied()).collect();
            let a = describe(&s).unwrap();
            let b = describe(&rep).unwrap();
            prop_assert!((a.mean - b.mean).abs() <= 1e-12 * a.mean.abs().max(1.0));
            prop_assert!(b.p25 <= b.median && b.median <= b.p75);
        }
    }
}
