//! Banded LU factorization with partial pivoting (LAPACK `gbtf2` layout).

/// Column-major band storage with `kl` extra rows reserved for the fill-in
/// that row interchanges create above the diagonal.
#[derive(Clone, Debug)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandedMatrix {
    /// `n x n` matrix with lower bandwidth `kl` and upper bandwidth `ku`.
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn clear(&mut self) {
        self.ab.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j + self.kl && j <= i + self.kl + self.ku);
        j * self.ldab + (self.kl + self.ku + i) - j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.ab[self.idx(i, j)]
    }

    /// Adds to an entry inside the original band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i + self.ku, "({i}, {j}) outside upper band {}", self.ku);
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    /// `y = A x` using the unfactored band.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            *yi = (lo..=hi).map(|j| self.get(i, j) * x[j]).sum();
        }
    }

    /// Factors in place. Pivots with magnitude at most `tiny` are replaced by
    /// `tiny` with the sign of the original entry; the count is returned.
    pub fn factor(mut self, tiny: f64) -> BandedLu {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        let mut perturbed = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0usize;
            let mut best = self.get(j, j).abs();
            for r in 1..=km {
                let v = self.get(j + r, j).abs();
                if v > best {
                    best = v;
                    jp = r;
                }
            }
            ipiv[j] = j + jp;
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            let d = self.idx(j, j);
            if self.ab[d].abs() <= tiny {
                self.ab[d] = if self.ab[d] < 0.0 { -tiny } else { tiny };
                perturbed += 1;
            }
            let piv = self.ab[d];
            for r in 1..=km {
                let k = self.idx(j + r, j);
                self.ab[k] /= piv;
            }
            for c in (j + 1)..=ju {
                let ujc = self.get(j, c);
                if ujc != 0.0 {
                    for r in 1..=km {
                        let l = self.get(j + r, j);
                        let k = self.idx(j + r, c);
                        self.ab[k] -= l * ujc;
                    }
                }
            }
        }
        BandedLu {
            m: self,
            ipiv,
            perturbed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BandedLu {
    m: BandedMatrix,
    ipiv: Vec<usize>,
    perturbed: usize,
}

impl BandedLu {
    /// Number of pivots that had to be replaced during factorization.
    pub fn perturbed_pivots(&self) -> usize {
        self.perturbed
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let m = &self.m;
        let n = m.n;
        let kv = m.kl + m.ku;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let km = m.kl.min(n - 1 - j);
                for r in 1..=km {
                    b[j + r] -= m.get(j + r, j) * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= m.get(j, j);
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    b[i] -= m.get(i, j) * bj;
                }
            }
        }
    }
}
