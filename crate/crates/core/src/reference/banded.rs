//! Banded LU factorization with partial pivoting.

use crate::error::{MeaError, Result};

/// Square matrix with `kl` sub- and `ku` super-diagonals. Row interchanges during
/// factorization widen the upper band to `kl + ku`, so storage holds `2 kl + ku + 1`
/// diagonals per column.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    /// Column-major band storage: entry `(i, j)` lives at `j * ldab + (kl + ku + i - j)`.
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self { n, kl, ku, ldab, ab: vec![0.0; n * ldab] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i <= j + self.kl && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.idx(i, j)]
        } else {
            0.0
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside the band");
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    /// `A x`
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Factorizes in place.
    pub fn factorize(mut self) -> Result<BandLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let kv = kl + ku;
        let mut piv = vec![0usize; n];
        for j in 0..n {
            let last = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = self.ab[self.idx(j, j)].abs();
            for i in j + 1..=last {
                let v = self.ab[self.idx(i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(MeaError::LinearSolve(format!("zero pivot in column {j}")));
            }
            piv[j] = p;
            let col_end = (j + kv).min(n - 1);
            if p != j {
                for c in j..=col_end {
                    let (a, b) = (self.idx(j, c), self.idx(p, c));
                    self.ab.swap(a, b);
                }
            }
            let inv = 1.0 / self.ab[self.idx(j, j)];
            for i in j + 1..=last {
                let k = self.idx(i, j);
                self.ab[k] *= inv;
            }
            for c in j + 1..=col_end {
                let u = self.ab[self.idx(j, c)];
                if u != 0.0 {
                    let base_c = c * self.ldab + kl + ku;
                    let base_j = j * self.ldab + kl + ku;
                    for i in j + 1..=last {
                        let l = self.ab[base_j + i - j];
                        self.ab[base_c + i - c] -= l * u;
                    }
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m = &self.m;
        let (n, kl) = (m.n, m.kl);
        let kv = m.kl + m.ku;
        let mut x = rhs.to_vec();
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                x.swap(j, p);
            }
            let xj = x[j];
            for i in j + 1..=(j + kl).min(n - 1) {
                x[i] -= m.ab[m.idx(i, j)] * xj;
            }
        }
        for j in (0..n).rev() {
            x[j] /= m.ab[m.idx(j, j)];
            let xj = x[j];
            for i in j.saturating_sub(kv)..j {
                x[i] -= m.ab[m.idx(i, j)] * xj;
            }
        }
        x
    }
}
