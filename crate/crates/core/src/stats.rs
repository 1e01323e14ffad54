//! Small order statistics used by the experiment harness.

use alloc::vec::Vec;

/// Median; the mean of the two middle values for even lengths. `NaN` when
/// empty.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Ranks starting at 1, ties share their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
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

/// Pearson correlation; `NaN` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / crate::math::sqrt(sxx * syy)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// One-sided sign-test p-value: `P(X >= successes)` for `X ~ Bin(trials, 1/2)`.
pub fn sign_test_p_value(successes: usize, trials: usize) -> f64 {
    let mut p = 0.0;
    let mut coeff = 1.0; // C(trials, k), built incrementally
    let scale = crate::math::exp(-(trials as f64) * core::f64::consts::LN_2);
    for k in 0..=trials {
        if k > 0 {
            coeff = coeff * (trials - k + 1) as f64 / k as f64;
        }
        if k >= successes {
            p += coeff * scale;
        }
    }
    p
}
