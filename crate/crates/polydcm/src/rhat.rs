//! Rank-normalized split potential-scale-reduction diagnostic.
//!
//! Pooled draws are converted to average ranks (ties share their mean
//! rank), mapped through the inverse normal CDF with the (rank - 3/8) /
//! (S + 1/4) offset, then each chain is split in half and the classic
//! between/within variance ratio is computed over the splits.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Computes the diagnostic over per-chain draw sequences.
///
/// Requires at least four draws per half-chain split. Identical constant
/// chains return 1 by convention.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.is_empty() {
        return Err(Error::InsufficientDraws("no chains supplied".into()));
    }
    let min_len = chains.iter().map(|c| c.len()).min().unwrap();
    if min_len / 2 < 4 {
        return Err(Error::InsufficientDraws(format!(
            "need at least 4 draws per split, shortest chain has {min_len}"
        )));
    }
    // zero-variance guard: heavily tied discrete summaries can be constant
    let first = chains[0][0];
    if chains
        .iter()
        .all(|c| c.iter().all(|&v| v == first))
    {
        return Ok(1.0);
    }

    let normalized = rank_normalize(chains);
    let mut splits: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for chain in &normalized {
        let half = chain.len() / 2;
        // drop the middle draw of odd-length chains
        splits.push(&chain[..half]);
        splits.push(&chain[chain.len() - half..]);
    }
    let n = splits.iter().map(|s| s.len()).min().unwrap() as f64;
    let m = splits.len() as f64;

    let means: Vec<f64> = splits
        .iter()
        .map(|s| s.iter().sum::<f64>() / s.len() as f64)
        .collect();
    let vars: Vec<f64> = splits
        .iter()
        .zip(&means)
        .map(|(s, &mu)| s.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / (s.len() as f64 - 1.0))
        .collect();
    let w: f64 = vars.iter().sum::<f64>() / m;
    let grand = means.iter().sum::<f64>() / m;
    let b = n * means.iter().map(|&mu| (mu - grand) * (mu - grand)).sum::<f64>() / (m - 1.0);
    if w <= 0.0 {
        return Ok(1.0);
    }
    Ok(((w * (n - 1.0) / n + b / n) / w).sqrt())
}

/// Replaces pooled draws by inverse-normal-transformed average ranks,
/// preserving the chain structure.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mut indexed: Vec<(f64, usize)> = Vec::with_capacity(total);
    let mut offsets = Vec::with_capacity(chains.len());
    let mut offset = 0;
    for chain in chains {
        offsets.push(offset);
        for (i, &v) in chain.iter().enumerate() {
            indexed.push((v, offset + i));
        }
        offset += chain.len();
    }
    indexed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut ranks = vec![0.0f64; total];
    let mut pos = 0;
    while pos < total {
        let mut end = pos + 1;
        while end < total && indexed[end].0 == indexed[pos].0 {
            end += 1;
        }
        // 1-based ranks, ties share the average rank
        let avg = (pos + 1 + end) as f64 / 2.0;
        for item in &indexed[pos..end] {
            ranks[item.1] = avg;
        }
        pos = end;
    }

    let normal = Normal::new(0.0, 1.0).unwrap();
    let s = total as f64;
    let mut out = Vec::with_capacity(chains.len());
    for (chain, &off) in chains.iter().zip(&offsets) {
        out.push(
            (0..chain.len())
                .map(|i| normal.inverse_cdf((ranks[off + i] - 0.375) / (s + 0.25)))
                .collect(),
        );
    }
    out
}
