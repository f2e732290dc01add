//! Paired two-sided Wilcoxon signed-rank test.

use serde::Serialize;

use crate::error::{CaveError, Result};

/// Largest sample size (after dropping zero differences) that uses the exact
/// null distribution.
pub const EXACT_MAX_N: usize = 25;
/// Smallest usable sample size after dropping zero differences.
pub const MIN_N: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WilcoxonResult {
    pub p_value: f64,
    /// Sum of ranks of positive differences `x - y`.
    pub w_plus: f64,
    /// Non-zero differences used.
    pub n: usize,
    pub exact: bool,
    /// Every difference was zero; `p_value` is 1 by convention.
    pub all_zero: bool,
}

/// Average ranks (1-based) of `values`, ties sharing the mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Null distribution of the doubled positive-rank sum: `counts[s]` is the
/// number of the 2^n sign patterns with `2·W+ = s`.
fn doubled_rank_sum_counts(doubled: &[usize]) -> Vec<f64> {
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in doubled {
        reach += r;
        for s in (r..=reach).rev() {
            counts[s] += counts[s - r];
        }
    }
    counts
}

fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

pub fn wilcoxon_paired(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(CaveError::Validation(format!(
            "paired samples differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(CaveError::NonFinite("wilcoxon input".into()));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Ok(WilcoxonResult {
            p_value: 1.0,
            w_plus: 0.0,
            n: 0,
            exact: true,
            all_zero: true,
        });
    }
    let n = diffs.len();
    if n < MIN_N {
        return Err(CaveError::Validation(format!(
            "signed-rank test needs at least {MIN_N} non-zero differences, got {n}"
        )));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    if n <= EXACT_MAX_N {
        // average ranks are multiples of 1/2, so doubled ranks are integers
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let counts = doubled_rank_sum_counts(&doubled);
        let obs = (2.0 * w_plus).round() as usize;
        let total = 2f64.powi(n as i32);
        let lower: f64 = counts[..=obs].iter().sum::<f64>() / total;
        let upper: f64 = counts[obs..].iter().sum::<f64>() / total;
        let p = (2.0 * lower.min(upper)).min(1.0);
        return Ok(WilcoxonResult {
            p_value: p,
            w_plus,
            n,
            exact: true,
            all_zero: false,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = (w_plus - mean).abs() / var.sqrt();
        (2.0 * normal_sf(z)).min(1.0)
    };
    Ok(WilcoxonResult {
        p_value: p,
        w_plus,
        n,
        exact: false,
        all_zero: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive enumeration over all sign patterns of |d|.
    fn brute_force(diffs: &[f64]) -> f64 {
        let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
        // rank by counting, independent of the sorting implementation
        let rank = |v: f64| {
            let less = abs.iter().filter(|&&a| a < v).count() as f64;
            let equal = abs.iter().filter(|&&a| a == v).count() as f64;
            less + (equal + 1.0) / 2.0
        };
        let ranks: Vec<f64> = abs.iter().map(|&a| rank(a)).collect();
        let obs: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
        let n = diffs.len();
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if w <= obs + 1e-9 {
                le += 1;
            }
            if w >= obs - 1e-9 {
                ge += 1;
            }
        }
        let total = (1u64 << n) as f64;
        (2.0 * (le.min(ge) as f64) / total).min(1.0)
    }

    #[test]
    fn eight_positive_differences() {
        let x: Vec<f64> = (1..=8).map(|i| i as f64 + 0.5).collect();
        let y = vec![0.0; 8];
        let r = wilcoxon_paired(&x, &y).unwrap();
        assert_eq!(r.p_value, 0.0078125);
        assert!(r.exact);
    }

    #[test]
    fn identical_samples_give_one() {
        let x = [0.3, 0.5, 0.7];
        let r = wilcoxon_paired(&x, &x).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.all_zero);
    }

    #[test]
    fn matches_enumeration_for_every_sign_pattern_n6() {
        let mags = [0.5, 1.25, 2.0, 3.5, 4.0, 7.0];
        for mask in 0..64u32 {
            let d: Vec<f64> = mags
                .iter()
                .enumerate()
                .map(|(i, m)| if mask >> i & 1 == 1 { *m } else { -*m })
                .collect();
            let p = wilcoxon_paired(&d, &[0.0; 6]).unwrap().p_value;
            assert!((p - brute_force(&d)).abs() < 1e-12, "pattern {mask}");
        }
    }

    #[test]
    fn tied_magnitudes_match_enumeration() {
        let d = [1.0, -1.0, 2.0, 2.0, -3.0, 3.0, 3.0];
        let p = wilcoxon_paired(&d, &[0.0; 7]).unwrap().p_value;
        assert!((p - brute_force(&d)).abs() < 1e-12);
    }

    #[test]
    fn symmetric_in_arguments() {
        let x = [0.7, 0.8, 0.65, 0.9, 0.72, 0.81, 0.6];
        let y = [0.6, 0.75, 0.7, 0.8, 0.7, 0.7, 0.61];
        let a = wilcoxon_paired(&x, &y).unwrap().p_value;
        let b = wilcoxon_paired(&y, &x).unwrap().p_value;
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn normal_approximation_is_close_to_exact_boundary() {
        // n = 30 all positive: z is large, p tiny but positive
        let x: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let r = wilcoxon_paired(&x, &vec![0.0; 30]).unwrap();
        assert!(!r.exact);
        assert!(r.p_value > 0.0 && r.p_value < 1e-5);
        // balanced signs: p near 1
        let d: Vec<f64> = (1..=30).map(|i| if i % 4 < 2 { i as f64 } else { -(i as f64) }).collect();
        let r = wilcoxon_paired(&d, &vec![0.0; 30]).unwrap();
        assert!(r.p_value > 0.5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(wilcoxon_paired(&[1.0], &[1.0, 2.0]).is_err());
        assert!(wilcoxon_paired(&[1.0, 2.0, 3.0], &[0.0; 3]).is_err());
    }
}
