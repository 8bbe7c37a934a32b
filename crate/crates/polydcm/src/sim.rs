//! Synthetic data generation: correlated polytomous mastery profiles from
//! a thresholded multivariate normal, monotone item parameters on a linear
//! ramp, Bernoulli responses, Monte Carlo ground-truth mixing proportions,
//! and the built-in study Q-matrices.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::attribute::{enumerate_patterns, k_star, Flavor, ProfileSpace, QMatrix};
use crate::error::{Error, Result};
use crate::responses::Responses;
use crate::seeds::sub_seed;

/// Settings for one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    /// Mastery level counts per attribute.
    pub levels: Vec<u8>,
    /// Common correlation among the latent attribute variables.
    pub rho: f64,
    pub flavor: Flavor,
    pub seed: u64,
    /// Range of the correct-response probability with nothing mastered.
    pub p_low_range: (f64, f64),
    /// Range of the correct-response probability with everything mastered.
    pub p_high_range: (f64, f64),
    /// Monte Carlo draws behind the ground-truth mixing proportions.
    pub truth_mc_draws: u64,
}

impl SimConfig {
    pub fn new(n: usize, levels: Vec<u8>, rho: f64, flavor: Flavor, seed: u64) -> SimConfig {
        SimConfig {
            n,
            levels,
            rho,
            flavor,
            seed,
            p_low_range: (0.05, 0.25),
            p_high_range: (0.75, 0.95),
            truth_mc_draws: 10_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid(format!(
                "attribute correlation must be in [0, 1), got {}",
                self.rho
            )));
        }
        let ok_range = |r: (f64, f64)| r.0 > 0.0 && r.1 < 1.0 && r.0 <= r.1;
        if !ok_range(self.p_low_range) || !ok_range(self.p_high_range) {
            return Err(Error::invalid("probability ranges must sit inside (0, 1)"));
        }
        if self.p_low_range.1 >= self.p_high_range.0 {
            return Err(Error::invalid(
                "the low-probability range must lie entirely below the high range",
            ));
        }
        Ok(())
    }
}

/// Ground truth behind one simulated dataset.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub qmatrix: QMatrix,
    pub flavor: Flavor,
    /// True correct-response probability per item and item pattern.
    pub theta_true: Vec<Vec<f64>>,
    /// True mixing proportions in canonical profile order.
    pub pi_true: Vec<f64>,
    /// Canonical profile index per examinee.
    pub profiles_true: Vec<usize>,
}

fn cutpoints(m: u8) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    (1..m)
        .map(|level| normal.inverse_cdf(level as f64 / m as f64))
        .collect()
}

fn compound_symmetric_cholesky(k: usize, rho: f64) -> DMatrix<f64> {
    let sigma = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { rho });
    sigma
        .cholesky()
        .expect("compound-symmetric correlation with rho in [0,1) is positive definite")
        .l()
}

/// Draws correlated mastery profiles by thresholding a multivariate
/// standard normal at equal-probability cutpoints; returns canonical
/// profile indices.
pub fn gen_profiles(n: usize, levels: &[u8], rho: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!(
            "attribute correlation must be in [0, 1), got {rho}"
        )));
    }
    let space = ProfileSpace::enumerate(levels)?;
    let k = levels.len();
    let chol = compound_symmetric_cholesky(k, rho);
    let cuts: Vec<Vec<f64>> = levels.iter().map(|&m| cutpoints(m)).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut g = vec![0.0f64; k];
    let mut profile = vec![0u8; k];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        for gi in g.iter_mut() {
            *gi = StandardNormal.sample(&mut rng);
        }
        for i in 0..k {
            let mut lambda = 0.0;
            for j in 0..=i {
                lambda += chol[(i, j)] * g[j];
            }
            profile[i] = cuts[i].iter().filter(|&&c| lambda >= c).count() as u8;
        }
        out.push(space.index_of(&profile));
    }
    Ok(out)
}

fn ramp_denominator(q_row: &[u8], levels: &[u8], flavor: Flavor) -> f64 {
    match flavor {
        Flavor::Collapsed => k_star(q_row) as f64,
        Flavor::Reduced => q_row
            .iter()
            .zip(levels)
            .filter(|(&q, _)| q > 0)
            .map(|(_, &m)| (m - 1) as f64)
            .sum(),
    }
}

/// Correct-response probabilities for one item: a linear ramp from
/// `p_low` (nothing mastered) to `p_high` (full mastery) in the pattern's
/// mastered fraction.
pub fn item_theta_ramp(
    q_row: &[u8],
    levels: &[u8],
    flavor: Flavor,
    p_low: f64,
    p_high: f64,
) -> Vec<f64> {
    let denom = ramp_denominator(q_row, levels, flavor);
    enumerate_patterns(q_row, levels, flavor)
        .iter()
        .map(|pattern| {
            let s: f64 = pattern.iter().map(|&a| a as f64).sum();
            p_low + s / denom * (p_high - p_low)
        })
        .collect()
}

/// Draws per-item floor/ceiling probabilities and fills in the monotone
/// ramp over each item's pattern space.
pub fn gen_item_params(
    q: &QMatrix,
    flavor: Flavor,
    seed: u64,
    p_low_range: (f64, f64),
    p_high_range: (f64, f64),
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    q.rows()
        .map(|q_row| {
            let p_low = rng.gen_range(p_low_range.0..p_low_range.1);
            let p_high = rng.gen_range(p_high_range.0..p_high_range.1);
            item_theta_ramp(q_row, q.levels(), flavor, p_low, p_high)
        })
        .collect()
}

/// Bernoulli responses for each examinee from the item pattern their
/// profile maps to.
pub fn gen_responses(
    profiles: &[usize],
    q: &QMatrix,
    theta_true: &[Vec<f64>],
    flavor: Flavor,
    seed: u64,
) -> Result<Responses> {
    let space = ProfileSpace::enumerate(q.levels())?;
    if theta_true.len() != q.n_items() {
        return Err(Error::dims(
            "item parameter blocks do not match the Q-matrix",
        ));
    }
    // per-item lookup: profile index -> true probability
    let theta_of: Vec<Vec<f64>> = q
        .rows()
        .enumerate()
        .map(|(j, q_row)| {
            let g = crate::attribute::build_gmatrix(j, q_row, &space, flavor);
            g.pattern_of.iter().map(|&p| theta_true[j][p]).collect()
        })
        .collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(profiles.len() * q.n_items());
    for &profile in profiles {
        for th in theta_of.iter() {
            let p = th[profile];
            data.push(u8::from(rng.gen::<f64>() < p));
        }
    }
    Responses::new(profiles.len(), q.n_items(), data)
}

/// Monte Carlo estimate of the profile distribution induced by the
/// thresholded multivariate normal; sums to one exactly.
pub fn true_mixing_proportions(
    levels: &[u8],
    rho: f64,
    mc_draws: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    if mc_draws < 100_000 {
        return Err(Error::invalid(format!(
            "need at least 1e5 Monte Carlo draws for the ground truth, got {mc_draws}"
        )));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!(
            "attribute correlation must be in [0, 1), got {rho}"
        )));
    }
    let space = ProfileSpace::enumerate(levels)?;
    let l = space.len();
    let k = levels.len();
    let chol = compound_symmetric_cholesky(k, rho);
    let cuts: Vec<Vec<f64>> = levels.iter().map(|&m| cutpoints(m)).collect();

    // fixed chunking, independent sub-streams; integer counts merge
    // exactly regardless of scheduling
    const CHUNKS: u64 = 64;
    let per_chunk = mc_draws / CHUNKS;
    let remainder = mc_draws % CHUNKS;
    let counts: Vec<u64> = (0..CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let draws = per_chunk + u64::from(chunk < remainder);
            let mut rng = ChaCha20Rng::seed_from_u64(sub_seed(seed, "truth-chunk", chunk));
            let mut local = vec![0u64; l];
            let mut g = vec![0.0f64; k];
            let mut profile = vec![0u8; k];
            for _ in 0..draws {
                for gi in g.iter_mut() {
                    *gi = StandardNormal.sample(&mut rng);
                }
                for i in 0..k {
                    let mut lambda = 0.0;
                    for j in 0..=i {
                        lambda += chol[(i, j)] * g[j];
                    }
                    profile[i] = cuts[i].iter().filter(|&&c| lambda >= c).count() as u8;
                }
                local[space.index_of(&profile)] += 1;
            }
            local
        })
        .reduce(
            || vec![0u64; l],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                a
            },
        );

    let total = mc_draws as f64;
    let mut pi: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    // pin the total mass to one exactly
    let partial: f64 = pi[..l - 1].iter().sum();
    pi[l - 1] = 1.0 - partial;
    Ok(pi)
}

/// Generates a full dataset and its ground truth from one master seed.
pub fn simulate(q: &QMatrix, cfg: &SimConfig) -> Result<(SimTruth, Responses)> {
    cfg.validate()?;
    if cfg.levels != q.levels() {
        return Err(Error::dims(
            "config levels do not match the Q-matrix levels",
        ));
    }
    let theta_true = gen_item_params(
        q,
        cfg.flavor,
        sub_seed(cfg.seed, "items", 0),
        cfg.p_low_range,
        cfg.p_high_range,
    );
    let profiles_true = gen_profiles(cfg.n, q.levels(), cfg.rho, sub_seed(cfg.seed, "profiles", 0))?;
    let x = gen_responses(
        &profiles_true,
        q,
        &theta_true,
        cfg.flavor,
        sub_seed(cfg.seed, "responses", 0),
    )?;
    let pi_true = true_mixing_proportions(
        q.levels(),
        cfg.rho,
        cfg.truth_mc_draws,
        sub_seed(cfg.seed, "truth", 0),
    )?;
    Ok((
        SimTruth {
            qmatrix: q.clone(),
            flavor: cfg.flavor,
            theta_true,
            pi_true,
            profiles_true,
        },
        x,
    ))
}

/// Built-in study Q-matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinDesign {
    /// Four attributes, 60 items, three levels each.
    K4J60,
    /// K4J60 stacked twice.
    K4J120,
    /// Seven attributes, 60 items, three levels each.
    K7J60,
    /// K7J60 stacked twice.
    K7J120,
    /// Three attributes with levels (2, 3, 2), 34 items.
    K3J34,
}

impl std::fmt::Display for BuiltinDesign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            BuiltinDesign::K4J60 => "k4j60",
            BuiltinDesign::K4J120 => "k4j120",
            BuiltinDesign::K7J60 => "k7j60",
            BuiltinDesign::K7J120 => "k7j120",
            BuiltinDesign::K3J34 => "k3j34",
        };
        write!(f, "{name}")
    }
}

fn combinations(k: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..size).collect();
    if size == 0 || size > k {
        return out;
    }
    loop {
        out.push(idx.clone());
        // advance to the next combination in lexicographic order
        let mut pos = size;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if idx[pos] < k - (size - pos) {
                idx[pos] += 1;
                for p in pos + 1..size {
                    idx[p] = idx[p - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Splits `amount` across attributes proportionally to the remaining
/// deficits (largest-remainder rounding, low index first on ties).
fn apportion(amount: usize, deficits: &[usize]) -> Vec<usize> {
    let total: usize = deficits.iter().sum();
    if total == 0 {
        return vec![0; deficits.len()];
    }
    let shares: Vec<f64> = deficits
        .iter()
        .map(|&d| amount as f64 * d as f64 / total as f64)
        .collect();
    let mut out: Vec<usize> = shares.iter().map(|&s| s.floor() as usize).collect();
    let mut leftover = amount - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..deficits.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &idx in &order {
        if leftover == 0 {
            break;
        }
        if out[idx] < deficits[idx] {
            out[idx] += 1;
            leftover -= 1;
        }
    }
    out
}

/// Deterministic multi-attribute row layout. Per group, each attribute
/// gets a proportional share of the group's incidences (so no attribute
/// is over-represented in wide, less informative items); rows then take
/// the subset with the largest remaining group deficit, lexicographically
/// first on ties. The layout lands exactly on the target per-attribute
/// counts for the built-in designs.
fn greedy_subsets(k: usize, groups: &[(usize, usize)], targets: &[usize]) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = targets.to_vec();
    let mut rows = Vec::new();
    for &(count, size) in groups {
        let group_targets = apportion(count * size, &remaining);
        let mut deficit: Vec<i64> = group_targets.iter().map(|&t| t as i64).collect();
        let candidates = combinations(k, size);
        for _ in 0..count {
            let mut best = 0usize;
            let mut best_sum = i64::MIN;
            for (c, subset) in candidates.iter().enumerate() {
                let sum: i64 = subset.iter().map(|&a| deficit[a]).sum();
                if sum > best_sum {
                    best_sum = sum;
                    best = c;
                }
            }
            for &a in &candidates[best] {
                deficit[a] -= 1;
            }
            rows.push(candidates[best].clone());
        }
        for (r, &g) in remaining.iter_mut().zip(&group_targets) {
            *r -= g;
        }
        debug_assert!(deficit.iter().all(|&d| d == 0));
    }
    debug_assert!(remaining.iter().all(|&d| d == 0));
    rows
}

fn multi_attribute_rows(
    k: usize,
    groups: &[(usize, usize)],
    targets: &[usize],
) -> Vec<Vec<u8>> {
    // required levels 1 and 2 are kept balanced per attribute so every
    // level boundary stays identifiable; the identity blocks already
    // contribute one of each
    let mut ones = vec![1usize; k];
    let mut twos = vec![1usize; k];
    greedy_subsets(k, groups, targets)
        .iter()
        .enumerate()
        .map(|(t, subset)| {
            let mut row = vec![0u8; k];
            for (pos, &a) in subset.iter().enumerate() {
                let level = match ones[a].cmp(&twos[a]) {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Less => 1,
                    std::cmp::Ordering::Equal => 1 + ((t + pos) % 2) as u8,
                };
                if level == 1 {
                    ones[a] += 1;
                } else {
                    twos[a] += 1;
                }
                row[a] = level;
            }
            row
        })
        .collect()
}

/// Returns one of the built-in Q-matrices.
pub fn builtin_qmatrix(design: BuiltinDesign) -> QMatrix {
    match design {
        BuiltinDesign::K4J60 => {
            let k = 4;
            let mut rows: Vec<Vec<u8>> = Vec::with_capacity(60);
            for level in [1u8, 2] {
                for a in 0..k {
                    let mut row = vec![0u8; k];
                    row[a] = level;
                    rows.push(row);
                }
            }
            // 28 two-attribute and 24 three-attribute rows; every
            // attribute ends up measured by 34 items
            rows.extend(multi_attribute_rows(k, &[(28, 2), (24, 3)], &[32; 4]));
            QMatrix::new(rows, vec![3; 4]).expect("built-in design is valid")
        }
        BuiltinDesign::K4J120 => builtin_qmatrix(BuiltinDesign::K4J60).stacked(2),
        BuiltinDesign::K7J60 => {
            let k = 7;
            let mut rows: Vec<Vec<u8>> = Vec::with_capacity(60);
            for level in [1u8, 2] {
                for a in 0..k {
                    let mut row = vec![0u8; k];
                    row[a] = level;
                    rows.push(row);
                }
            }
            // per-attribute item counts (20, 21, 22, 23, 22, 21, 20),
            // identity blocks contribute two each
            let targets = [18usize, 19, 20, 21, 20, 19, 18];
            rows.extend(multi_attribute_rows(
                k,
                &[(14, 2), (21, 3), (11, 4)],
                &targets,
            ));
            QMatrix::new(rows, vec![3; 7]).expect("built-in design is valid")
        }
        BuiltinDesign::K7J120 => builtin_qmatrix(BuiltinDesign::K7J60).stacked(2),
        BuiltinDesign::K3J34 => {
            let rows: Vec<Vec<u8>> = vec![
                vec![1, 0, 0],
                vec![1, 0, 0],
                vec![1, 0, 0],
                vec![1, 0, 0],
                vec![1, 0, 0],
                vec![1, 0, 0],
                vec![1, 0, 0],
                vec![0, 1, 1],
                vec![0, 1, 0],
                vec![0, 1, 1],
                vec![1, 1, 0],
                vec![0, 2, 0],
                vec![0, 1, 0],
                vec![1, 1, 1],
                vec![1, 1, 1],
                vec![1, 1, 1],
                vec![1, 1, 0],
                vec![1, 1, 0],
                vec![1, 1, 0],
                vec![1, 1, 0],
                vec![1, 1, 0],
                vec![1, 1, 0],
                vec![1, 1, 0],
                vec![0, 0, 1],
                vec![0, 2, 0],
                vec![0, 0, 1],
                vec![1, 1, 0],
                vec![1, 1, 1],
                vec![1, 1, 1],
                vec![1, 1, 1],
                vec![0, 1, 1],
                vec![0, 1, 0],
                vec![0, 2, 0],
                vec![0, 2, 0],
            ];
            QMatrix::new(rows, vec![2, 3, 2]).expect("built-in design is valid")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribute::build_gmatrices;

    #[test]
    fn cutpoints_for_three_levels() {
        let c = cutpoints(3);
        assert_eq!(c.len(), 2);
        assert!((c[0] + 0.43073).abs() < 1e-4, "{}", c[0]);
        assert!((c[1] - 0.43073).abs() < 1e-4, "{}", c[1]);
    }

    #[test]
    fn uncorrelated_levels_are_uniform() {
        let n = 20_000;
        let levels = [3u8, 3];
        let space = ProfileSpace::enumerate(&levels).unwrap();
        let profiles = gen_profiles(n, &levels, 0.0, 99).unwrap();
        let mut counts = vec![0usize; 2 * 3];
        for &p in &profiles {
            let prof = space.profile(p);
            for (k, &a) in prof.iter().enumerate() {
                counts[k * 3 + a as usize] += 1;
            }
        }
        let se = ((1.0 / 3.0) * (2.0 / 3.0) / n as f64).sqrt();
        for &c in &counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 1.0 / 3.0).abs() < 4.0 * se, "freq {freq}");
        }
    }

    #[test]
    fn strong_correlation_aligns_levels() {
        let n = 20_000;
        let levels = [3u8, 3];
        let space = ProfileSpace::enumerate(&levels).unwrap();
        let profiles = gen_profiles(n, &levels, 0.99, 7).unwrap();
        let agree = profiles
            .iter()
            .filter(|&&p| {
                let prof = space.profile(p);
                prof[0] == prof[1]
            })
            .count();
        assert!(agree as f64 / n as f64 > 0.8);
    }

    #[test]
    fn profiles_rejects_bad_rho() {
        assert!(gen_profiles(10, &[2, 2], 1.0, 0).is_err());
        assert!(gen_profiles(10, &[2, 2], -0.1, 0).is_err());
    }

    #[test]
    fn ramp_matches_reference_item() {
        // q = (1,2,0), p_low = 0.2, p_high = 0.8: collapsed patterns
        // (0,0),(0,1),(1,0),(1,1) get 0.2, 0.5, 0.5, 0.8
        let theta = item_theta_ramp(&[1, 2, 0], &[3, 3, 3], Flavor::Collapsed, 0.2, 0.8);
        let expect = [0.2, 0.5, 0.5, 0.8];
        for (t, e) in theta.iter().zip(&expect) {
            assert!((t - e).abs() < 1e-12);
        }
    }

    #[test]
    fn ramp_single_attribute_two_values() {
        let theta = item_theta_ramp(&[2, 0], &[3, 3], Flavor::Collapsed, 0.1, 0.9);
        assert_eq!(theta.len(), 2);
        assert!((theta[0] - 0.1).abs() < 1e-12);
        assert!((theta[1] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ramp_is_monotone_in_pattern_order() {
        for flavor in [Flavor::Collapsed, Flavor::Reduced] {
            let q_row = [2u8, 1, 0, 1];
            let levels = [3u8, 3, 3, 2];
            let theta = item_theta_ramp(&q_row, &levels, flavor, 0.15, 0.85);
            let patterns = enumerate_patterns(&q_row, &levels, flavor);
            for (a_idx, a) in patterns.iter().enumerate() {
                for (b_idx, b) in patterns.iter().enumerate() {
                    if a.iter().zip(b).all(|(x, y)| x <= y) {
                        assert!(theta[a_idx] <= theta[b_idx] + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn responses_degenerate_probabilities() {
        let q = QMatrix::new(vec![vec![1, 0], vec![0, 1]], vec![2, 2]).unwrap();
        let profiles = vec![0usize, 1, 2, 3];
        let ones = vec![vec![1.0; 2]; 2];
        let zeros = vec![vec![0.0; 2]; 2];
        let x1 = gen_responses(&profiles, &q, &ones, Flavor::Collapsed, 1).unwrap();
        assert!(x1.data().iter().all(|&v| v == 1));
        let x0 = gen_responses(&profiles, &q, &zeros, Flavor::Collapsed, 1).unwrap();
        assert!(x0.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn response_means_match_mixture() {
        let q = builtin_qmatrix(BuiltinDesign::K3J34);
        let cfg = SimConfig {
            truth_mc_draws: 1_000_000,
            ..SimConfig::new(10_000, vec![2, 3, 2], 0.3, Flavor::Collapsed, 5)
        };
        let (truth, x) = simulate(&q, &cfg).unwrap();
        let space = ProfileSpace::enumerate(q.levels()).unwrap();
        let gms = build_gmatrices(&q, &space, Flavor::Collapsed);
        for j in (0..q.n_items()).step_by(7) {
            let expect: f64 = truth
                .pi_true
                .iter()
                .enumerate()
                .map(|(l, &p)| p * truth.theta_true[j][gms[j].pattern_of[l]])
                .sum();
            let mean =
                (0..cfg.n).map(|i| x.get(i, j) as f64).sum::<f64>() / cfg.n as f64;
            let se = (expect * (1.0 - expect) / cfg.n as f64).sqrt();
            // Monte Carlo truth error is negligible next to the response
            // noise at these sizes
            assert!((mean - expect).abs() < 4.0 * se, "item {j}: {mean} vs {expect}");
        }
    }

    #[test]
    fn mixing_proportions_uniform_when_uncorrelated() {
        let pi = true_mixing_proportions(&[3, 3], 0.0, 1_000_000, 3).unwrap();
        let expect = 1.0 / 9.0;
        let se = (expect * (1.0 - expect) / 1_000_000f64).sqrt();
        for &p in &pi {
            assert!((p - expect).abs() < 4.0 * se);
        }
        assert_eq!(pi.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn mixing_proportions_match_orthant_probabilities() {
        // closed-form quadrant probabilities of a bivariate normal with
        // correlation rho: 1/4 +- asin(rho) / (2 pi)
        let rho: f64 = 0.5;
        let pi = true_mixing_proportions(&[2, 2], rho, 4_000_000, 11).unwrap();
        let same = 0.25 + rho.asin() / (2.0 * std::f64::consts::PI);
        let diff = 0.25 - rho.asin() / (2.0 * std::f64::consts::PI);
        let se = (same * (1.0 - same) / 4_000_000f64).sqrt();
        // canonical order: (0,0), (0,1), (1,0), (1,1)
        assert!((pi[0] - same).abs() < 4.0 * se);
        assert!((pi[3] - same).abs() < 4.0 * se);
        assert!((pi[1] - diff).abs() < 4.0 * se);
        assert!((pi[2] - diff).abs() < 4.0 * se);
    }

    #[test]
    fn mixing_proportions_need_enough_draws() {
        assert!(true_mixing_proportions(&[2, 2], 0.1, 99_999, 0).is_err());
    }

    #[test]
    fn simulate_is_reproducible() {
        let q = builtin_qmatrix(BuiltinDesign::K3J34);
        let cfg = SimConfig {
            truth_mc_draws: 100_000,
            ..SimConfig::new(200, vec![2, 3, 2], 0.1, Flavor::Collapsed, 77)
        };
        let (t1, x1) = simulate(&q, &cfg).unwrap();
        let (t2, x2) = simulate(&q, &cfg).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(t1.profiles_true, t2.profiles_true);
        assert_eq!(t1.theta_true, t2.theta_true);
        assert_eq!(t1.pi_true, t2.pi_true);
    }

    #[test]
    fn builtin_k4j60_structure() {
        let q = builtin_qmatrix(BuiltinDesign::K4J60);
        assert_eq!(q.n_items(), 60);
        assert_eq!(q.levels(), &[3, 3, 3, 3]);
        for k in 0..4 {
            let measured = q.rows().filter(|row| row[k] > 0).count();
            assert_eq!(measured, 34, "attribute {k}");
        }
        let mut by_kstar = [0usize; 5];
        for row in q.rows() {
            by_kstar[k_star(row)] += 1;
        }
        assert_eq!(by_kstar[1], 8);
        assert_eq!(by_kstar[2], 28);
        assert_eq!(by_kstar[3], 24);
        assert_eq!(by_kstar[4], 0);
        assert!(q.rows().flat_map(|r| r.iter()).all(|&e| e <= 2));
        // both required levels appear among the multi-attribute rows
        assert!(q.rows().skip(8).flat_map(|r| r.iter()).any(|&e| e == 2));
    }

    #[test]
    fn builtin_k4j120_is_double_stack() {
        let q60 = builtin_qmatrix(BuiltinDesign::K4J60);
        let q120 = builtin_qmatrix(BuiltinDesign::K4J120);
        assert_eq!(q120.n_items(), 120);
        for j in 0..60 {
            assert_eq!(q120.row(j), q60.row(j));
            assert_eq!(q120.row(j + 60), q60.row(j));
        }
    }

    #[test]
    fn builtin_k7j60_structure() {
        let q = builtin_qmatrix(BuiltinDesign::K7J60);
        assert_eq!(q.n_items(), 60);
        let expect_counts = [20usize, 21, 22, 23, 22, 21, 20];
        for (k, &expect) in expect_counts.iter().enumerate() {
            let measured = q.rows().filter(|row| row[k] > 0).count();
            assert_eq!(measured, expect, "attribute {k}");
        }
        let mut by_kstar = [0usize; 8];
        for row in q.rows() {
            by_kstar[k_star(row)] += 1;
        }
        assert_eq!(by_kstar[1], 14);
        assert_eq!(by_kstar[2], 14);
        assert_eq!(by_kstar[3], 21);
        assert_eq!(by_kstar[4], 11);
    }

    #[test]
    fn builtin_k3j34_structure() {
        let q = builtin_qmatrix(BuiltinDesign::K3J34);
        assert_eq!(q.n_items(), 34);
        assert_eq!(q.levels(), &[2, 3, 2]);
        assert_eq!(q.row(11), &[0, 2, 0]);
        assert_eq!(q.row(13), &[1, 1, 1]);
        assert_eq!(q.rows().filter(|r| r[1] == 2).count(), 4);
    }
}
