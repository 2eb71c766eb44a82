//! Convergence diagnostics: rank-normalised split R-hat and effective sample size.

use crate::special::{median, std_normal_quantile};

fn split(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        // Odd lengths drop the middle draw.
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Classic potential scale reduction over the given sequences.
fn basic_rhat(seqs: &[Vec<f64>]) -> f64 {
    let m = seqs.len() as f64;
    let n = seqs[0].len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let means: Vec<f64> = seqs.iter().map(|s| mean(s)).collect();
    let grand = mean(&means);
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w =
        seqs.iter().zip(&means).map(|(s, mu)| s.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0)).sum::<f64>()
            / m;
    if w == 0.0 {
        // Constant draws: perfectly mixed if every sequence agrees.
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Replace every draw by the normal score of its pooled fractional rank.
fn rank_normalise(seqs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut flat: Vec<(f64, usize, usize)> = Vec::new();
    for (i, s) in seqs.iter().enumerate() {
        for (j, &v) in s.iter().enumerate() {
            flat.push((v, i, j));
        }
    }
    flat.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = flat.len() as f64;
    let mut out: Vec<Vec<f64>> = seqs.iter().map(|s| vec![0.0; s.len()]).collect();
    let mut k = 0;
    while k < flat.len() {
        let mut e = k;
        while e + 1 < flat.len() && flat[e + 1].0 == flat[k].0 {
            e += 1;
        }
        // Average rank (1-based) of the tie block.
        let r = (k + e) as f64 / 2.0 + 1.0;
        let z = std_normal_quantile((r - 0.375) / (total + 0.25));
        for item in &flat[k..=e] {
            out[item.1][item.2] = z;
        }
        k = e + 1;
    }
    out
}

/// Rank-normalised split R-hat: the maximum of the bulk and folded versions.
pub fn rhat(chains: &[&[f64]]) -> f64 {
    let seqs = split(chains);
    if seqs.len() < 2 || seqs[0].len() < 2 {
        return f64::NAN;
    }
    let bulk = basic_rhat(&rank_normalise(&seqs));
    let all: Vec<f64> = seqs.iter().flatten().copied().collect();
    let med = median(&all);
    let folded: Vec<Vec<f64>> = seqs.iter().map(|s| s.iter().map(|x| (x - med).abs()).collect()).collect();
    let tail = basic_rhat(&rank_normalise(&folded));
    bulk.max(tail)
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence
/// estimator, computed on split chains.
pub fn ess(chains: &[&[f64]]) -> f64 {
    let seqs = split(chains);
    let m = seqs.len();
    let n = seqs.first().map_or(0, |s| s.len());
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let means: Vec<f64> = seqs.iter().map(|s| mean(s)).collect();
    let acov = |t: usize| -> f64 {
        seqs.iter()
            .zip(&means)
            .map(|(s, mu)| (0..n - t).map(|i| (s[i] - mu) * (s[i + t] - mu)).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64
    };
    let acov0 = acov(0);
    let w = acov0 * n as f64 / (n as f64 - 1.0);
    let grand = mean(&means);
    let b_over_n = if m > 1 { means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0) } else { 0.0 };
    let var_plus = w * (n as f64 - 1.0) / n as f64 + b_over_n;
    if !(var_plus > 0.0) {
        return (m * n) as f64;
    }
    let rho = |t: usize, at: f64| if t == 0 { 1.0 } else { 1.0 - (w - at) / var_plus };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let a0 = if t == 0 { acov0 } else { acov(t) };
        let pair = rho(t, a0) + rho(t + 1, acov(t + 1));
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = tau.max(1.0 / total.log10());
    total / tau
}
