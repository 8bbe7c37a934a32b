//! Least-squares transform from per-pattern correct-response
//! probabilities to intercept, main-effect, and interaction coefficients
//! over an item's collapsed pattern space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Effect decomposition of one item's probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEffects {
    pub item: usize,
    /// Attribute subsets (1-based positions among the item's relevant
    /// attributes), ordered by size then lexicographically; the empty
    /// subset is the intercept.
    pub subsets: Vec<Vec<usize>>,
    /// Column labels: "d0", "d1", ..., "d12", ...
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

impl DeltaEffects {
    /// Fitted probability for a pattern under this decomposition.
    pub fn reconstruct(&self, pattern: &[u8]) -> f64 {
        self.subsets
            .iter()
            .zip(&self.values)
            .map(|(subset, &v)| {
                let active = subset.iter().all(|&a| pattern[a - 1] == 1);
                if active {
                    v
                } else {
                    0.0
                }
            })
            .sum()
    }
}

fn subsets_by_size(k: usize) -> Vec<Vec<usize>> {
    let mut all: Vec<Vec<usize>> = (0..1usize << k)
        .map(|mask| (1..=k).filter(|&a| mask >> (a - 1) & 1 == 1).collect())
        .collect();
    all.sort_by(|a, b| (a.len(), a).cmp(&(b.len(), b)));
    all
}

fn label(subset: &[usize]) -> String {
    if subset.is_empty() {
        "d0".to_string()
    } else {
        let digits: String = subset.iter().map(|a| a.to_string()).collect();
        format!("d{digits}")
    }
}

/// Solves for the effect coefficients of one item from its per-pattern
/// probabilities via an orthogonal factorization.
///
/// With the full collapsed pattern space the design is square and the fit
/// is exact; a custom pattern set is solved in the least-squares sense and
/// rejected if the design loses rank.
pub fn theta_to_delta(item: usize, theta: &[f64], patterns: &[Vec<u8>]) -> Result<DeltaEffects> {
    if patterns.is_empty() || theta.len() != patterns.len() {
        return Err(Error::dims(format!(
            "item {item}: {} probabilities for {} patterns",
            theta.len(),
            patterns.len()
        )));
    }
    let k = patterns[0].len();
    if patterns.iter().any(|p| p.len() != k) {
        return Err(Error::dims(format!("item {item}: ragged patterns")));
    }
    {
        let mut seen = patterns.to_vec();
        seen.sort();
        seen.dedup();
        if seen.len() != patterns.len() {
            return Err(Error::invalid(format!("item {item}: duplicate patterns")));
        }
    }
    let subsets = subsets_by_size(k);
    let cols = subsets.len();
    if patterns.len() < cols {
        return Err(Error::RankDeficient(format!(
            "item {item}: {} patterns cannot identify {} effects",
            patterns.len(),
            cols
        )));
    }
    let design = DMatrix::from_fn(patterns.len(), cols, |row, col| {
        let active = subsets[col].iter().all(|&a| patterns[row][a - 1] == 1);
        if active {
            1.0
        } else {
            0.0
        }
    });
    let rhs = DVector::from_column_slice(theta);
    let qr = design.qr();
    let r = qr.r();
    let min_diag = (0..cols)
        .map(|c| {
            let d: f64 = r[(c, c)];
            d.abs()
        })
        .fold(f64::INFINITY, f64::min);
    if min_diag < 1e-10 {
        return Err(Error::RankDeficient(format!(
            "item {item}: design matrix is numerically singular"
        )));
    }
    let solution = qr
        .solve(&rhs)
        .ok_or_else(|| Error::RankDeficient(format!("item {item}: solve failed")))?;
    let labels = subsets.iter().map(|s| label(s)).collect();
    Ok(DeltaEffects {
        item,
        subsets,
        labels,
        values: solution.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribute::{enumerate_patterns, Flavor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn collapsed_patterns(k: usize) -> Vec<Vec<u8>> {
        let q_row = vec![1u8; k];
        let levels = vec![2u8; k];
        enumerate_patterns(&q_row, &levels, Flavor::Collapsed)
    }

    #[test]
    fn all_or_nothing_structure() {
        // theta = (g, g, g, 1 - s): intercept g, zero mains, one top
        // interaction
        let (g, s) = (0.15, 0.1);
        let patterns = collapsed_patterns(2);
        let theta: Vec<f64> = patterns
            .iter()
            .map(|p| if p == &[1, 1] { 1.0 - s } else { g })
            .collect();
        let d = theta_to_delta(0, &theta, &patterns).unwrap();
        assert_eq!(d.labels, vec!["d0", "d1", "d2", "d12"]);
        assert!((d.values[0] - g).abs() < 1e-12);
        assert!(d.values[1].abs() < 1e-12);
        assert!(d.values[2].abs() < 1e-12);
        assert!((d.values[3] - (1.0 - s - g)).abs() < 1e-12);
    }

    #[test]
    fn constant_probabilities_are_intercept_only() {
        let patterns = collapsed_patterns(3);
        let theta = vec![0.42; patterns.len()];
        let d = theta_to_delta(0, &theta, &patterns).unwrap();
        assert!((d.values[0] - 0.42).abs() < 1e-12);
        for &v in &d.values[1..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn additive_structure_has_no_interaction() {
        let patterns = collapsed_patterns(2);
        // canonical order (0,0),(0,1),(1,0),(1,1)
        let by_pattern = |p: &[u8]| 0.2 + 0.3 * (p[0] + p[1]) as f64;
        let theta: Vec<f64> = patterns.iter().map(|p| by_pattern(p)).collect();
        let d = theta_to_delta(0, &theta, &patterns).unwrap();
        assert!((d.values[0] - 0.2).abs() < 1e-12);
        assert!((d.values[1] - 0.3).abs() < 1e-12);
        assert!((d.values[2] - 0.3).abs() < 1e-12);
        assert!(d.values[3].abs() < 1e-12);
    }

    #[test]
    fn round_trip_reconstruction() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for k in 1..=4usize {
            let patterns = collapsed_patterns(k);
            let theta: Vec<f64> = (0..patterns.len()).map(|_| rng.gen::<f64>()).collect();
            let d = theta_to_delta(0, &theta, &patterns).unwrap();
            for (p, &t) in patterns.iter().zip(&theta) {
                assert!(
                    (d.reconstruct(p) - t).abs() < 1e-12,
                    "k={k} pattern {p:?}"
                );
            }
        }
    }

    #[test]
    fn attribute_permutation_permutes_labels() {
        let patterns = collapsed_patterns(2);
        let theta = vec![0.1, 0.5, 0.3, 0.9];
        // swap the two attributes: pattern (a,b) -> (b,a)
        let swapped_patterns: Vec<Vec<u8>> =
            patterns.iter().map(|p| vec![p[1], p[0]]).collect();
        let d = theta_to_delta(0, &theta, &patterns).unwrap();
        let ds = theta_to_delta(0, &theta, &swapped_patterns).unwrap();
        // main effect of attribute 1 becomes the main effect of attribute 2
        let idx = |d: &DeltaEffects, lab: &str| {
            d.labels.iter().position(|l| l == lab).unwrap()
        };
        assert!((d.values[idx(&d, "d1")] - ds.values[idx(&ds, "d2")]).abs() < 1e-12);
        assert!((d.values[idx(&d, "d2")] - ds.values[idx(&ds, "d1")]).abs() < 1e-12);
        assert!((d.values[idx(&d, "d12")] - ds.values[idx(&ds, "d12")]).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let patterns = collapsed_patterns(2);
        assert!(theta_to_delta(0, &[0.1, 0.2], &patterns).is_err());
        let dup = vec![vec![0u8, 0], vec![0, 0], vec![1, 0], vec![1, 1]];
        assert!(theta_to_delta(0, &[0.1, 0.2, 0.3, 0.4], &dup).is_err());
        // too few patterns to identify all effects
        let short = vec![vec![0u8, 0], vec![1, 1]];
        assert!(theta_to_delta(0, &[0.1, 0.2], &short).is_err());
    }
}
