//! Banded LU factorization with partial pivoting.
//!
//! Storage follows the LAPACK `gbtrf` layout: column-major with leading dimension
//! `2·kl + ku + 1`, entry `(i, j)` at row `kl + ku + i − j` of column `j`. The
//! extra `kl` rows hold fill-in from row interchanges.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub(crate) struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    pivots: Vec<usize>,
    factored: bool,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Banded {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
            pivots: vec![0; n],
            factored: false,
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        (self.kl + self.ku + i - j) + j * self.ldab
    }

    /// Adds `v` to entry `(i, j)`, which must lie inside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(!self.factored);
        debug_assert!(j <= i + self.ku && i <= j + self.kl, "({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    #[cfg(test)]
    fn get(&self, i: usize, j: usize) -> f64 {
        if j > i + self.ku || i > j + self.kl {
            0.0
        } else {
            self.ab[self.idx(i, j)]
        }
    }

    /// In-place factorization `P·A = L·U`.
    pub fn factor(&mut self) -> Result<()> {
        let (n, kl) = (self.n, self.kl);
        let kv = self.ku + kl;
        // Upper bound on the last column reached by row operations on row j.
        let mut ju = 0usize;
        let scale = self.ab.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = 0;
            let mut best = self.ab[self.idx(j, j)].abs();
            for r in 1..=km {
                let v = self.ab[self.idx(j + r, j)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            self.pivots[j] = j + p;
            if best <= f64::EPSILON * scale * n as f64 || best == 0.0 {
                return Err(Error::numerical(format!(
                    "banded matrix is singular at column {j}"
                )));
            }
            ju = ju.max((j + kv).min(n - 1)).max((j + p + self.ku).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + p, c);
                    self.ab.swap(a, b);
                }
            }
            let piv = self.ab[self.idx(j, j)];
            for r in 1..=km {
                let k = self.idx(j + r, j);
                self.ab[k] /= piv;
            }
            for c in j + 1..=ju {
                let u = self.ab[self.idx(j, c)];
                if u != 0.0 {
                    for r in 1..=km {
                        let l = self.ab[self.idx(j + r, j)];
                        let k = self.idx(j + r, c);
                        self.ab[k] -= l * u;
                    }
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A·x = b` in place after [`Banded::factor`].
    pub fn solve(&self, b: &mut [f64]) {
        debug_assert!(self.factored);
        let (n, kl) = (self.n, self.kl);
        let kv = self.ku + kl;
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            for r in 1..=km {
                b[j + r] -= self.ab[self.idx(j + r, j)] * bj;
            }
        }
        for j in (0..n).rev() {
            let mut s = b[j];
            for c in j + 1..=(j + kv).min(n - 1) {
                s -= self.ab[self.idx(j, c)] * b[c];
            }
            b[j] = s / self.ab[self.idx(j, j)];
        }
    }
}
