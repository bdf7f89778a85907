//! Rank-based significance tests for comparing optimizer outcomes.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{contract, Result};

/// Largest number of rank subsets the exact rank-sum test will enumerate.
/// Wildly unbalanced small samples exceed this and use the normal
/// approximation instead.
pub const EXACT_SUBSET_LIMIT: u128 = 200_000;

/// Midranks (1-based, ties averaged) aligned with the input order, plus the
/// tie-correction sum over groups of equal values: sum of t^3 - t.
fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut tie_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        let t = (j - i + 1) as f64;
        tie_sum += t * t * t - t;
        i = j + 1;
    }
    (ranks, tie_sum)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KwTest {
    pub h: f64,
    pub p: f64,
}

/// Kruskal-Wallis test with tie-corrected H and a chi-square p-value.
/// All values identical across every group yields H = 0, p = 1.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KwTest> {
    contract!(groups.len() >= 2, "need at least 2 groups, got {}", groups.len());
    for (gi, g) in groups.iter().enumerate() {
        contract!(!g.is_empty(), "group {gi} is empty");
        for v in g {
            contract!(v.is_finite(), "group {gi} contains non-finite value {v}");
        }
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let (ranks, tie_sum) = midranks(&pooled);

    let mut h = 0.0;
    let mut offset = 0;
    for g in groups {
        let r_sum: f64 = ranks[offset..offset + g.len()].iter().sum();
        h += r_sum * r_sum / g.len() as f64;
        offset += g.len();
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);

    let correction = 1.0 - tie_sum / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(KwTest { h: 0.0, p: 1.0 });
    }
    let h = (h / correction).max(0.0);
    let df = (groups.len() - 1) as f64;
    let p = ChiSquared::new(df).unwrap().sf(h);
    Ok(KwTest { h, p })
}

fn binomial(n: usize, k: usize) -> Option<u128> {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.checked_mul((n - i) as u128)?;
        c /= (i + 1) as u128;
    }
    Some(c)
}

/// Exact two-sided p by enumerating every assignment of pooled ranks to the
/// smaller sample. Midranks are multiples of 1/2, so subset sums compare
/// exactly in floating point.
fn exact_two_sided(ranks: &[f64], n1: usize) -> f64 {
    let n = ranks.len();
    let m = n1.min(n - n1);
    let w_obs: f64 = if n1 <= n - n1 {
        ranks[..n1].iter().sum()
    } else {
        ranks[n1..].iter().sum()
    };
    let mut count_le: u64 = 0;
    let mut count_ge: u64 = 0;
    let mut total: u64 = 0;
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        let s: f64 = idx.iter().map(|&i| ranks[i]).sum();
        total += 1;
        if s <= w_obs {
            count_le += 1;
        }
        if s >= w_obs {
            count_ge += 1;
        }
        let mut i = m;
        while i > 0 && idx[i - 1] == n - m + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
    let tail = count_le.min(count_ge) as f64 / total as f64;
    (2.0 * tail).min(1.0)
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction toward zero.
fn approx_two_sided(ranks: &[f64], tie_sum: f64, n1: usize, n2: usize) -> f64 {
    let n = (n1 + n2) as f64;
    let w: f64 = ranks[..n1].iter().sum();
    let mean = n1 as f64 * (n + 1.0) / 2.0;
    let var = (n1 as f64 * n2 as f64 / 12.0) * ((n + 1.0) - tie_sum / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let d = w - mean;
    let d = if d > 0.5 {
        d - 0.5
    } else if d < -0.5 {
        d + 0.5
    } else {
        0.0
    };
    let z = d.abs() / var.sqrt();
    (2.0 * Normal::new(0.0, 1.0).unwrap().sf(z)).min(1.0)
}

/// Two-sided Wilcoxon rank-sum p-value: exact enumeration when the smaller
/// sample has fewer than 10 values (and the subset count stays enumerable),
/// normal approximation with tie and continuity correction otherwise.
pub fn wilcoxon_ranksum(a: &[f64], b: &[f64]) -> Result<f64> {
    contract!(!a.is_empty() && !b.is_empty(), "rank-sum test needs two nonempty samples");
    for v in a.iter().chain(b) {
        contract!(v.is_finite(), "rank-sum test needs finite values, got {v}");
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, tie_sum) = midranks(&pooled);
    let (n1, n2) = (a.len(), b.len());
    if n1.min(n2) < 10 {
        if let Some(c) = binomial(n1 + n2, n1.min(n2)) {
            if c <= EXACT_SUBSET_LIMIT {
                return Ok(exact_two_sided(&ranks, n1));
            }
        }
    }
    Ok(approx_two_sided(&ranks, tie_sum, n1, n2))
}
