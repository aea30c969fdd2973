use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::MetricsError;

/// Largest `n_a · n_b` for which the p-value comes from the exact permutation distribution.
pub const EXACT_MAX_PRODUCT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// Pairs `(a, b)` with `a > b`, ties counted as one half.
    pub u_a: f64,
    pub u_b: f64,
    /// Two-sided.
    pub p_value: f64,
    pub method: PValueMethod,
}

/// Ranks (1-based, ties get the mean rank) doubled so they stay integral.
fn doubled_midranks(pooled: &[f64]) -> (Vec<u64>, f64) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1, doubled mean = i + j + 2
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    (ranks, tie_term)
}

/// Exact two-sided p-value by enumerating, via dynamic programming, the distribution
/// of the rank sum of a random `chosen`-subset of the pooled midranks.
fn exact_p(ranks: &[u64], chosen: usize, observed_doubled_sum: u64, n_a: usize, n_b: usize) -> f64 {
    let max_sum: u64 = {
        let mut r = ranks.to_vec();
        r.sort_unstable_by(|a, b| b.cmp(a));
        r.iter().take(chosen).sum()
    };
    let width = max_sum as usize + 1;
    let mut dp = vec![vec![0u64; width]; chosen + 1];
    dp[0][0] = 1;
    for (i, &r) in ranks.iter().enumerate() {
        let r = r as usize;
        for k in (1..=chosen.min(i + 1)).rev() {
            let (lo, hi) = dp.split_at_mut(k);
            let prev = &lo[k - 1];
            let cur = &mut hi[0];
            for s in (0..width - r).rev() {
                if prev[s] != 0 {
                    cur[s + r] += prev[s];
                }
            }
        }
    }
    let offset = (chosen * (chosen + 1)) as i64; // doubled n(n+1)/2
    let centre = (n_a * n_b) as i64; // doubled mean of U
    let observed_dev = ((observed_doubled_sum as i64 - offset) - centre).abs();
    let total: u64 = dp[chosen].iter().sum();
    let extreme: u64 = dp[chosen]
        .iter()
        .enumerate()
        .filter(|&(s, &c)| c != 0 && ((s as i64 - offset) - centre).abs() >= observed_dev)
        .map(|(_, &c)| c)
        .sum();
    (extreme as f64 / total as f64).min(1.0)
}

/// Two-sided Mann–Whitney U test.
///
/// The p-value is exact (permutation distribution over the pooled midranks, so ties
/// are handled) when `n_a · n_b ≤ 400`, and otherwise uses the normal approximation
/// with tie-corrected variance and a 0.5 continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut u_a = 0.0;
    for &x in a {
        for &y in b {
            if x > y {
                u_a += 1.0;
            } else if x == y {
                u_a += 0.5;
            }
        }
    }
    let (n_a, n_b) = (a.len(), b.len());
    let u_b = (n_a * n_b) as f64 - u_a;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, tie_term) = doubled_midranks(&pooled);

    if n_a * n_b <= EXACT_MAX_PRODUCT {
        // enumerate subsets of the smaller sample; the two-sided tail is symmetric in roles
        let (chosen_ranks, chosen) = if n_a <= n_b { (&ranks[..n_a], n_a) } else { (&ranks[n_a..], n_b) };
        let observed: u64 = chosen_ranks.iter().sum();
        let p_value = exact_p(&ranks, chosen, observed, n_a, n_b);
        return Ok(MannWhitney { u_a, u_b, p_value, method: PValueMethod::Exact });
    }

    let n = (n_a + n_b) as f64;
    let mean = (n_a * n_b) as f64 / 2.0;
    let var = (n_a * n_b) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u_a - mean).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(MannWhitney { u_a, u_b, p_value, method: PValueMethod::NormalApprox })
}
