//! Attribute combinatorics: mastery profiles, per-item reduction and
//! collapsing, and the membership matrices that route global profiles to
//! item-specific response patterns.
//!
//! Profiles are enumerated in a fixed canonical order: lexicographic with
//! the last attribute varying fastest (mixed-radix counting). Every index
//! that appears downstream (mixing proportions, responsibilities, profile
//! assignments) refers to this order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which item-specific pattern space an item's membership matrix targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    /// Patterns are binary vectors over the item's relevant attributes,
    /// thresholded at the required mastery levels.
    Collapsed,
    /// Patterns keep the full mastery level of each relevant attribute.
    Reduced,
}

impl std::fmt::Display for Flavor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Flavor::Collapsed => write!(f, "collapsed"),
            Flavor::Reduced => write!(f, "reduced"),
        }
    }
}

/// Item-by-attribute matrix of required mastery levels.
///
/// Entry `q[j][k]` is the minimum level of attribute `k` needed for item
/// `j`; zero means the attribute is irrelevant to the item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QMatrix {
    entries: Vec<u8>,
    levels: Vec<u8>,
    n_items: usize,
    n_attrs: usize,
}

impl QMatrix {
    /// Builds a Q-matrix from row-major entries, validating that every
    /// entry is below its attribute's level count and every item measures
    /// at least one attribute.
    pub fn new(rows: Vec<Vec<u8>>, levels: Vec<u8>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("Q-matrix needs at least one attribute"));
        }
        if let Some(&m) = levels.iter().find(|&&m| m < 2) {
            return Err(Error::invalid(format!(
                "every attribute needs at least 2 mastery levels, got {m}"
            )));
        }
        let n_attrs = levels.len();
        let n_items = rows.len();
        let mut entries = Vec::with_capacity(n_items * n_attrs);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n_attrs {
                return Err(Error::dims(format!(
                    "item {j}: row length {} != {} attributes",
                    row.len(),
                    n_attrs
                )));
            }
            if row.iter().all(|&q| q == 0) {
                return Err(Error::invalid(format!(
                    "item {j} measures no attribute (all-zero row)"
                )));
            }
            for (k, &q) in row.iter().enumerate() {
                if q > levels[k] - 1 {
                    return Err(Error::invalid(format!(
                        "item {j}, attribute {k}: entry {q} exceeds max level {}",
                        levels[k] - 1
                    )));
                }
            }
            entries.extend_from_slice(row);
        }
        Ok(QMatrix {
            entries,
            levels,
            n_items,
            n_attrs,
        })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_attrs(&self) -> usize {
        self.n_attrs
    }

    /// Mastery level counts per attribute.
    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    /// Required-level row for one item.
    pub fn row(&self, item: usize) -> &[u8] {
        &self.entries[item * self.n_attrs..(item + 1) * self.n_attrs]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.entries.chunks_exact(self.n_attrs)
    }

    /// Stacks this Q-matrix on top of itself `copies` times.
    pub fn stacked(&self, copies: usize) -> QMatrix {
        let mut entries = Vec::with_capacity(self.entries.len() * copies);
        for _ in 0..copies {
            entries.extend_from_slice(&self.entries);
        }
        QMatrix {
            entries,
            levels: self.levels.clone(),
            n_items: self.n_items * copies,
            n_attrs: self.n_attrs,
        }
    }
}

/// Number of relevant attributes for an item (positive entries in its row).
pub fn k_star(q_row: &[u8]) -> usize {
    q_row.iter().filter(|&&q| q > 0).count()
}

/// All attribute mastery profiles in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileSpace {
    levels: Vec<u8>,
    profiles: Vec<Vec<u8>>,
}

impl ProfileSpace {
    /// Enumerates all `prod(levels)` profiles, last attribute fastest.
    pub fn enumerate(levels: &[u8]) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("profile space needs at least one attribute"));
        }
        if let Some(&m) = levels.iter().find(|&&m| m < 2) {
            return Err(Error::invalid(format!(
                "every attribute needs at least 2 mastery levels, got {m}"
            )));
        }
        let mut count: usize = 1;
        for &m in levels {
            count = count.checked_mul(m as usize).ok_or_else(|| {
                Error::invalid("profile space too large to enumerate".to_string())
            })?;
        }
        let k = levels.len();
        let mut profiles = Vec::with_capacity(count);
        let mut current = vec![0u8; k];
        loop {
            profiles.push(current.clone());
            // mixed-radix increment, last attribute is the fastest digit
            let mut pos = k;
            loop {
                if pos == 0 {
                    return Ok(ProfileSpace {
                        levels: levels.to_vec(),
                        profiles,
                    });
                }
                pos -= 1;
                if current[pos] + 1 < levels[pos] {
                    current[pos] += 1;
                    break;
                }
                current[pos] = 0;
            }
        }
    }

    /// Number of profiles `L`.
    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn n_attrs(&self) -> usize {
        self.levels.len()
    }

    pub fn profile(&self, l: usize) -> &[u8] {
        &self.profiles[l]
    }

    pub fn profiles(&self) -> &[Vec<u8>] {
        &self.profiles
    }

    /// Canonical index of a profile (inverse of enumeration order).
    pub fn index_of(&self, profile: &[u8]) -> usize {
        debug_assert_eq!(profile.len(), self.levels.len());
        let mut idx = 0usize;
        for (k, &a) in profile.iter().enumerate() {
            idx = idx * self.levels[k] as usize + a as usize;
        }
        idx
    }
}

/// Subvector of a profile at the item's relevant attributes, order kept.
pub fn reduce_profile(profile: &[u8], q_row: &[u8]) -> Vec<u8> {
    profile
        .iter()
        .zip(q_row)
        .filter(|(_, &q)| q > 0)
        .map(|(&a, _)| a)
        .collect()
}

/// Thresholds a reduced vector at the item's required levels, yielding a
/// binary vector over the relevant attributes.
pub fn collapse_profile(reduced: &[u8], q_row: &[u8]) -> Vec<u8> {
    let thresholds: Vec<u8> = q_row.iter().copied().filter(|&q| q > 0).collect();
    debug_assert_eq!(reduced.len(), thresholds.len());
    reduced
        .iter()
        .zip(&thresholds)
        .map(|(&a, &q)| u8::from(a >= q))
        .collect()
}

/// Per-item membership matrix mapping global profiles to item-specific
/// patterns.
///
/// `pattern_of` is the computational form (profile index -> pattern row);
/// `dense` is the indicator-matrix form used for export and tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GMatrix {
    pub item: usize,
    pub flavor: Flavor,
    /// Item-specific patterns, one row each, sorted lexicographically.
    pub patterns: Vec<Vec<u8>>,
    /// For each global profile index, the pattern row it maps to.
    pub pattern_of: Vec<usize>,
    /// Indicator rows, `patterns.len()` x `L`.
    pub dense: Vec<Vec<u8>>,
}

impl GMatrix {
    /// Number of item-specific patterns.
    pub fn n_patterns(&self) -> usize {
        self.patterns.len()
    }
}

/// Level counts of an item's pattern space: binary per relevant attribute
/// for `Collapsed`, the full attribute levels for `Reduced`.
pub fn pattern_levels(q_row: &[u8], levels: &[u8], flavor: Flavor) -> Vec<u8> {
    q_row
        .iter()
        .zip(levels)
        .filter(|(&q, _)| q > 0)
        .map(|(_, &m)| match flavor {
            Flavor::Collapsed => 2,
            Flavor::Reduced => m,
        })
        .collect()
}

/// Enumerates an item's pattern space in lexicographic order (row 0 is
/// all-zero, the last row is full mastery).
pub fn enumerate_patterns(q_row: &[u8], levels: &[u8], flavor: Flavor) -> Vec<Vec<u8>> {
    let pattern_levels = pattern_levels(q_row, levels, flavor);
    let mut patterns = Vec::new();
    let mut current = vec![0u8; pattern_levels.len()];
    'outer: loop {
        patterns.push(current.clone());
        let mut pos = pattern_levels.len();
        loop {
            if pos == 0 {
                break 'outer;
            }
            pos -= 1;
            if current[pos] + 1 < pattern_levels[pos] {
                current[pos] += 1;
                break;
            }
            current[pos] = 0;
        }
    }
    patterns
}

/// Builds the membership matrix for one item.
///
/// Pattern rows enumerate the full factorial of the item's pattern space
/// (binary per relevant attribute for `Collapsed`, full levels for
/// `Reduced`) in lexicographic order, so row 0 is the all-zero pattern and
/// the last row is full mastery.
pub fn build_gmatrix(item: usize, q_row: &[u8], space: &ProfileSpace, flavor: Flavor) -> GMatrix {
    let pattern_levels = pattern_levels(q_row, space.levels(), flavor);
    let patterns = enumerate_patterns(q_row, space.levels(), flavor);

    let pattern_index = |pattern: &[u8]| -> usize {
        let mut idx = 0usize;
        for (p, &a) in pattern.iter().enumerate() {
            idx = idx * pattern_levels[p] as usize + a as usize;
        }
        idx
    };

    let pattern_of: Vec<usize> = space
        .profiles()
        .iter()
        .map(|profile| {
            let reduced = reduce_profile(profile, q_row);
            match flavor {
                Flavor::Collapsed => pattern_index(&collapse_profile(&reduced, q_row)),
                Flavor::Reduced => pattern_index(&reduced),
            }
        })
        .collect();

    let mut dense = vec![vec![0u8; space.len()]; patterns.len()];
    for (l, &p) in pattern_of.iter().enumerate() {
        dense[p][l] = 1;
    }

    GMatrix {
        item,
        flavor,
        patterns,
        pattern_of,
        dense,
    }
}

/// Builds membership matrices for every item of a Q-matrix.
pub fn build_gmatrices(q: &QMatrix, space: &ProfileSpace, flavor: Flavor) -> Vec<GMatrix> {
    q.rows()
        .enumerate()
        .map(|(j, row)| build_gmatrix(j, row, space, flavor))
        .collect()
}
