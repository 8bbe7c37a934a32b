//! Recovery metrics against simulation ground truth, aggregated by the
//! number of attributes an item measures.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attribute::{k_star, GMatrix, ProfileSpace, QMatrix};
use crate::error::{Error, Result};

/// Signed mean error and root-mean-square error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasRmse {
    pub bias: f64,
    pub rmse: f64,
}

/// Extremes over the mixing-proportion parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiRecovery {
    pub max_bias: f64,
    pub min_bias: f64,
    pub max_rmse: f64,
    pub min_rmse: f64,
}

/// One coordinatewise-ordered pattern pair where the estimate decreases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub item: usize,
    pub lower_pattern: Vec<u8>,
    pub higher_pattern: Vec<u8>,
    pub theta_lower: f64,
    pub theta_higher: f64,
}

/// Aggregate recovery numbers for a replication study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Bias/RMSE of the correct-response probabilities, keyed by the
    /// number of attributes the item measures.
    pub theta_by_kstar: BTreeMap<usize, BiasRmse>,
    pub pi: PiRecovery,
    /// Element-wise classification rate per attribute.
    pub eacr: Vec<f64>,
    /// Pattern-wise classification rate.
    pub pacr: f64,
    pub convergence_rate: f64,
    pub mean_wall_time: f64,
    pub replications: usize,
}

/// Per-parameter bias and RMSE over replications, averaged within groups
/// of items measuring the same number of attributes.
///
/// The ground-truth parameters are fixed across replications; each
/// replication contributes one estimate per parameter.
pub fn bias_rmse_theta(
    estimates: &[Vec<Vec<f64>>],
    truth: &[Vec<f64>],
    q: &QMatrix,
) -> Result<BTreeMap<usize, BiasRmse>> {
    if estimates.is_empty() {
        return Err(Error::invalid("need at least one replication"));
    }
    for est in estimates {
        if est.len() != truth.len() {
            return Err(Error::dims("estimate item count differs from truth"));
        }
        for (e, t) in est.iter().zip(truth) {
            if e.len() != t.len() {
                return Err(Error::dims("estimate pattern count differs from truth"));
            }
        }
    }
    let reps = estimates.len() as f64;
    let mut sums: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    for (j, truth_j) in truth.iter().enumerate() {
        let bucket = k_star(q.row(j));
        for (p, &t) in truth_j.iter().enumerate() {
            let bias = estimates.iter().map(|e| e[j][p] - t).sum::<f64>() / reps;
            let mse = estimates
                .iter()
                .map(|e| (e[j][p] - t) * (e[j][p] - t))
                .sum::<f64>()
                / reps;
            let entry = sums.entry(bucket).or_insert((0.0, 0.0, 0));
            entry.0 += bias;
            entry.1 += mse.sqrt();
            entry.2 += 1;
        }
    }
    Ok(sums
        .into_iter()
        .map(|(bucket, (bias_sum, rmse_sum, count))| {
            (
                bucket,
                BiasRmse {
                    bias: bias_sum / count as f64,
                    rmse: rmse_sum / count as f64,
                },
            )
        })
        .collect())
}

/// Extreme bias and RMSE over the mixing-proportion parameters.
pub fn bias_rmse_pi(estimates: &[Vec<f64>], pi_true: &[f64]) -> Result<PiRecovery> {
    if estimates.is_empty() {
        return Err(Error::invalid("need at least one replication"));
    }
    if estimates.iter().any(|e| e.len() != pi_true.len()) {
        return Err(Error::dims("estimate length differs from truth"));
    }
    let reps = estimates.len() as f64;
    let mut max_bias = f64::NEG_INFINITY;
    let mut min_bias = f64::INFINITY;
    let mut max_rmse = f64::NEG_INFINITY;
    let mut min_rmse = f64::INFINITY;
    for (l, &t) in pi_true.iter().enumerate() {
        let bias = estimates.iter().map(|e| e[l] - t).sum::<f64>() / reps;
        let rmse = (estimates.iter().map(|e| (e[l] - t) * (e[l] - t)).sum::<f64>() / reps).sqrt();
        max_bias = max_bias.max(bias);
        min_bias = min_bias.min(bias);
        max_rmse = max_rmse.max(rmse);
        min_rmse = min_rmse.min(rmse);
    }
    Ok(PiRecovery {
        max_bias,
        min_bias,
        max_rmse,
        min_rmse,
    })
}

/// Element-wise (per attribute) and pattern-wise exact-match rates of
/// estimated against true profiles, averaged over examinees then
/// replications.
pub fn classification_rates(
    estimated: &[Vec<usize>],
    truth: &[Vec<usize>],
    space: &ProfileSpace,
) -> Result<(Vec<f64>, f64)> {
    if estimated.len() != truth.len() || estimated.is_empty() {
        return Err(Error::dims("replication counts differ or are empty"));
    }
    let k = space.n_attrs();
    let mut eacr = vec![0.0; k];
    let mut pacr = 0.0;
    for (est, tru) in estimated.iter().zip(truth) {
        if est.len() != tru.len() {
            return Err(Error::dims("examinee counts differ"));
        }
        let n = est.len() as f64;
        let mut elem = vec![0usize; k];
        let mut pattern = 0usize;
        for (&e, &t) in est.iter().zip(tru) {
            if e == t {
                pattern += 1;
            }
            let pe = space.profile(e);
            let pt = space.profile(t);
            for a in 0..k {
                if pe[a] == pt[a] {
                    elem[a] += 1;
                }
            }
        }
        for a in 0..k {
            eacr[a] += elem[a] as f64 / n;
        }
        pacr += pattern as f64 / n;
    }
    let reps = estimated.len() as f64;
    for v in &mut eacr {
        *v /= reps;
    }
    Ok((eacr, pacr / reps))
}

/// Flags every coordinatewise-ordered pattern pair of every item where the
/// estimated probability strictly decreases.
pub fn monotonicity_check(eap_theta: &[Vec<f64>], gms: &[GMatrix]) -> Vec<MonotonicityViolation> {
    let mut violations = Vec::new();
    for (g, theta) in gms.iter().zip(eap_theta) {
        for (lo, p_lo) in g.patterns.iter().enumerate() {
            for (hi, p_hi) in g.patterns.iter().enumerate() {
                if lo == hi || p_lo.iter().zip(p_hi).any(|(a, b)| a > b) {
                    continue;
                }
                // p_lo <= p_hi coordinatewise and distinct
                if theta[hi] < theta[lo] {
                    violations.push(MonotonicityViolation {
                        item: g.item,
                        lower_pattern: p_lo.clone(),
                        higher_pattern: p_hi.clone(),
                        theta_lower: theta[lo],
                        theta_higher: theta[hi],
                    });
                }
            }
        }
    }
    violations
}
