//! Binary response data, stored row-major per examinee.

use crate::error::{Error, Result};

/// An `N x J` matrix of binary item responses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Responses {
    n: usize,
    j: usize,
    data: Vec<u8>,
}

impl Responses {
    /// Wraps row-major data, validating every entry is 0 or 1.
    pub fn new(n: usize, j: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != n * j {
            return Err(Error::dims(format!(
                "response data has {} entries, expected {}x{}",
                data.len(),
                n,
                j
            )));
        }
        if let Some(&bad) = data.iter().find(|&&x| x > 1) {
            return Err(Error::invalid(format!(
                "response entries must be 0 or 1, found {bad}"
            )));
        }
        Ok(Responses { n, j, data })
    }

    pub fn n_examinees(&self) -> usize {
        self.n
    }

    pub fn n_items(&self) -> usize {
        self.j
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.j..(i + 1) * self.j]
    }

    pub fn get(&self, i: usize, item: usize) -> u8 {
        self.data[i * self.j + item]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Returns a copy with examinee rows reordered by `perm` (new row `i`
    /// is old row `perm[i]`).
    pub fn permuted_rows(&self, perm: &[usize]) -> Result<Responses> {
        if perm.len() != self.n {
            return Err(Error::dims("permutation length != examinee count"));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for &src in perm {
            data.extend_from_slice(self.row(src));
        }
        Responses::new(self.n, self.j, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_entries_and_shape() {
        assert!(Responses::new(2, 2, vec![0, 1, 1, 0]).is_ok());
        assert!(Responses::new(2, 2, vec![0, 1, 2, 0]).is_err());
        assert!(Responses::new(2, 2, vec![0, 1, 1]).is_err());
    }

    #[test]
    fn row_access() {
        let x = Responses::new(2, 3, vec![0, 1, 1, 1, 0, 0]).unwrap();
        assert_eq!(x.row(0), &[0, 1, 1]);
        assert_eq!(x.row(1), &[1, 0, 0]);
        assert_eq!(x.get(1, 0), 1);
    }

    #[test]
    fn permutation_reorders_rows() {
        let x = Responses::new(3, 1, vec![0, 1, 0]).unwrap();
        let p = x.permuted_rows(&[2, 0, 1]).unwrap();
        assert_eq!(p.data(), &[0, 0, 1]);
    }
}
