//! Conjugate prior settings: Dirichlet over mixing proportions, Beta over
//! per-pattern correct-response probabilities.

use serde::{Deserialize, Serialize};

use crate::attribute::{GMatrix, ProfileSpace};
use crate::error::{Error, Result};

/// Built-in hyperparameter schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorScheme {
    /// All hyperparameters one; no prior information.
    Noninformative,
    /// Beta priors nudged toward monotone correct-response probabilities:
    /// prior mean below one half for the no-mastery pattern, above one
    /// half for the full-mastery pattern, flat in between.
    WeaklyInformative,
}

impl std::fmt::Display for PriorScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PriorScheme::Noninformative => write!(f, "noninformative"),
            PriorScheme::WeaklyInformative => write!(f, "weakly_informative"),
        }
    }
}

/// Hyperparameters for the full model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// Dirichlet concentration over the `L` mixing proportions.
    pub delta0: Vec<f64>,
    /// Beta `a` hyperparameter per item and item-specific pattern.
    pub a0: Vec<Vec<f64>>,
    /// Beta `b` hyperparameter per item and item-specific pattern.
    pub b0: Vec<Vec<f64>>,
}

impl Priors {
    /// Checks positivity and dimensional agreement with a profile space
    /// and per-item membership matrices.
    pub fn validate(&self, space: &ProfileSpace, gmatrices: &[GMatrix]) -> Result<()> {
        if self.delta0.len() != space.len() {
            return Err(Error::dims(format!(
                "delta0 has {} entries, profile space has {}",
                self.delta0.len(),
                space.len()
            )));
        }
        if self.a0.len() != gmatrices.len() || self.b0.len() != gmatrices.len() {
            return Err(Error::dims(format!(
                "Beta hyperparameters cover {} items, model has {}",
                self.a0.len(),
                gmatrices.len()
            )));
        }
        for (j, g) in gmatrices.iter().enumerate() {
            if self.a0[j].len() != g.n_patterns() || self.b0[j].len() != g.n_patterns() {
                return Err(Error::dims(format!(
                    "item {j}: hyperparameters for {} patterns, membership matrix has {}",
                    self.a0[j].len(),
                    g.n_patterns()
                )));
            }
        }
        let all_positive = self.delta0.iter().all(|&d| d > 0.0)
            && self.a0.iter().flatten().all(|&a| a > 0.0)
            && self.b0.iter().flatten().all(|&b| b > 0.0);
        if !all_positive {
            return Err(Error::invalid(
                "all prior hyperparameters must be strictly positive",
            ));
        }
        Ok(())
    }
}

/// Builds the hyperparameters for a scheme.
///
/// Pattern rows are sorted, so row 0 is the all-zero pattern and the last
/// row is full mastery; the weakly informative scheme assigns them
/// Beta(1,2) and Beta(2,1) respectively and Beta(1,1) to everything else.
pub fn default_priors(space: &ProfileSpace, gmatrices: &[GMatrix], scheme: PriorScheme) -> Priors {
    let delta0 = vec![1.0; space.len()];
    let mut a0 = Vec::with_capacity(gmatrices.len());
    let mut b0 = Vec::with_capacity(gmatrices.len());
    for g in gmatrices {
        let p = g.n_patterns();
        let mut a = vec![1.0; p];
        let mut b = vec![1.0; p];
        if scheme == PriorScheme::WeaklyInformative {
            b[0] = 2.0;
            a[p - 1] = 2.0;
        }
        a0.push(a);
        b0.push(b);
    }
    Priors { delta0, a0, b0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribute::{build_gmatrices, Flavor, QMatrix};

    fn setup() -> (ProfileSpace, Vec<GMatrix>) {
        let q = QMatrix::new(vec![vec![1, 1, 0], vec![2, 0, 1]], vec![3, 3, 2]).unwrap();
        let space = ProfileSpace::enumerate(q.levels()).unwrap();
        let gms = build_gmatrices(&q, &space, Flavor::Collapsed);
        (space, gms)
    }

    #[test]
    fn noninformative_is_all_ones() {
        let (space, gms) = setup();
        let p = default_priors(&space, &gms, PriorScheme::Noninformative);
        assert!(p.delta0.iter().all(|&d| d == 1.0));
        assert!(p.a0.iter().flatten().all(|&a| a == 1.0));
        assert!(p.b0.iter().flatten().all(|&b| b == 1.0));
        p.validate(&space, &gms).unwrap();
    }

    #[test]
    fn weak_prior_means_straddle_one_half() {
        let (space, gms) = setup();
        let p = default_priors(&space, &gms, PriorScheme::WeaklyInformative);
        for j in 0..gms.len() {
            let n = gms[j].n_patterns();
            let mean = |a: f64, b: f64| a / (a + b);
            // no-mastery pattern: Beta(1,2), mean 1/3
            assert!((mean(p.a0[j][0], p.b0[j][0]) - 1.0 / 3.0).abs() < 1e-15);
            // full-mastery pattern: Beta(2,1), mean 2/3
            assert!((mean(p.a0[j][n - 1], p.b0[j][n - 1]) - 2.0 / 3.0).abs() < 1e-15);
            for i in 1..n - 1 {
                assert_eq!((p.a0[j][i], p.b0[j][i]), (1.0, 1.0));
            }
        }
        p.validate(&space, &gms).unwrap();
    }

    #[test]
    fn validate_rejects_bad_dimensions() {
        let (space, gms) = setup();
        let mut p = default_priors(&space, &gms, PriorScheme::Noninformative);
        p.delta0.pop();
        assert!(p.validate(&space, &gms).is_err());

        let mut p = default_priors(&space, &gms, PriorScheme::Noninformative);
        p.a0[0].push(1.0);
        assert!(p.validate(&space, &gms).is_err());

        let mut p = default_priors(&space, &gms, PriorScheme::Noninformative);
        p.b0[1][0] = 0.0;
        assert!(p.validate(&space, &gms).is_err());
    }
}
