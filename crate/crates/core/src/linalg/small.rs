use thiserror::Error;

/// Dense square matrix of order `n <= 3`, stored in a fixed 3x3 array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallMat {
    n: usize,
    m: [[f64; 3]; 3],
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("matrix is not symmetric positive definite (smallest eigenvalue {min_eig})")]
pub struct SpdError {
    pub min_eig: f64,
}

impl SmallMat {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=3).contains(&n), "order {n} not supported");
        Self { n, m: [[0.0; 3]; 3] }
    }

    pub fn identity(n: usize) -> Self {
        let mut s = Self::zeros(n);
        for i in 0..n {
            s.m[i][i] = 1.0;
        }
        s
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut s = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                s.m[i][j] = f(i, j);
            }
        }
        s
    }

    pub fn diag(d: &[f64]) -> Self {
        Self::from_fn(d.len(), |i, j| if i == j { d[i] } else { 0.0 })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        Self::from_fn(rows.len(), |i, j| rows[i][j])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.m[i][j] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.m[j][i])
    }

    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.n, o.n);
        Self::from_fn(self.n, |i, j| (0..self.n).map(|k| self.m[i][k] * o.m[k][j]).sum())
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::from_fn(self.n, |i, j| self.m[i][j] + o.m[i][j])
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::from_fn(self.n, |i, j| self.m[i][j] - o.m[i][j])
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_fn(self.n, |i, j| c * self.m[i][j])
    }

    pub fn mul_vec(&self, v: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = (0..self.n).map(|k| self.m[i][k] * v[k]).sum();
        }
        out
    }

    /// `p^T M p`.
    pub fn quad(&self, p: &[f64]) -> f64 {
        let mp = self.mul_vec(p);
        (0..self.n).map(|i| p[i] * mp[i]).sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.m[i][i]).sum()
    }

    /// Squared Hilbert-Schmidt norm.
    pub fn frob2(&self) -> f64 {
        self.m.iter().take(self.n).flat_map(|r| r.iter().take(self.n)).map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().take(self.n).flat_map(|r| r.iter().take(self.n)).fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        match self.n {
            1 => m[0][0],
            2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            _ => {
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            }
        }
    }

    /// Symmetric eigendecomposition by cyclic Jacobi rotations. Returns the
    /// eigenvalues (ascending) and a matrix whose columns are eigenvectors.
    pub fn sym_eigen(&self) -> ([f64; 3], SmallMat) {
        let n = self.n;
        let mut a = *self;
        let mut v = SmallMat::identity(n);
        for _sweep in 0..64 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a.m[i][j] * a.m[i][j])
                .sum();
            if off <= 1e-300 || off <= (f64::EPSILON * f64::EPSILON) * 1e-4 * a.frob2() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.m[p][q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a.m[q][q] - a.m[p][p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.m[k][p];
                        let akq = a.m[k][q];
                        a.m[k][p] = c * akp - s * akq;
                        a.m[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a.m[p][k];
                        let aqk = a.m[q][k];
                        a.m[p][k] = c * apk - s * aqk;
                        a.m[q][k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v.m[k][p];
                        let vkq = v.m[k][q];
                        v.m[k][p] = c * vkp - s * vkq;
                        v.m[k][q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut idx = [0usize, 1, 2];
        idx[..n].sort_by(|&i, &j| a.m[i][i].total_cmp(&a.m[j][j]));
        let mut vals = [0.0; 3];
        let mut vecs = SmallMat::zeros(n);
        for (new, &old) in idx[..n].iter().enumerate() {
            vals[new] = a.m[old][old];
            for k in 0..n {
                vecs.m[k][new] = v.m[k][old];
            }
        }
        (vals, vecs)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self.n {
            1 => self.m[0][0],
            2 => {
                let (a, b, d) = (self.m[0][0], self.m[0][1], self.m[1][1]);
                let mean = 0.5 * (a + d);
                let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
                mean - r
            }
            _ => self.sym_eigen().0[0],
        }
    }

    fn require_spd(&self) -> Result<(), SpdError> {
        let min_eig = self.min_eigenvalue();
        if min_eig > 0.0 && min_eig.is_finite() {
            Ok(())
        } else {
            Err(SpdError { min_eig })
        }
    }

    /// Symmetric square root of an SPD matrix.
    ///
    /// Order 2 uses `S = (M + sqrt(det M) I) / sqrt(tr M + 2 sqrt(det M))`;
    /// order 3 goes through the Jacobi eigendecomposition.
    pub fn sqrt_spd(&self) -> Result<SmallMat, SpdError> {
        self.require_spd()?;
        match self.n {
            1 => Ok(Self::diag(&[self.m[0][0].sqrt()])),
            2 => {
                let s = self.det().sqrt();
                let t = (self.trace() + 2.0 * s).sqrt();
                Ok(Self::from_fn(2, |i, j| {
                    (self.m[i][j] + if i == j { s } else { 0.0 }) / t
                }))
            }
            _ => Ok(self.spectral_map(f64::sqrt)),
        }
    }

    /// Inverse of an SPD matrix.
    pub fn inverse_spd(&self) -> Result<SmallMat, SpdError> {
        self.require_spd()?;
        Ok(self.inverse_general())
    }

    /// Adjugate inverse; the caller guarantees non-singularity.
    pub fn inverse_general(&self) -> SmallMat {
        let m = &self.m;
        let d = self.det();
        match self.n {
            1 => Self::diag(&[1.0 / m[0][0]]),
            2 => Self::from_rows(&[&[m[1][1] / d, -m[0][1] / d], &[-m[1][0] / d, m[0][0] / d]]),
            _ => Self::from_fn(3, |i, j| {
                // cofactor of (j, i)
                let r: Vec<usize> = (0..3).filter(|&k| k != j).collect();
                let c: Vec<usize> = (0..3).filter(|&k| k != i).collect();
                let minor = m[r[0]][c[0]] * m[r[1]][c[1]] - m[r[0]][c[1]] * m[r[1]][c[0]];
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                sign * minor / d
            }),
        }
    }

    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> SmallMat {
        let (vals, v) = self.sym_eigen();
        Self::from_fn(self.n, |i, j| (0..self.n).map(|k| v.m[i][k] * f(vals[k]) * v.m[j][k]).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &SmallMat, b: &SmallMat, tol: f64) -> bool {
        a.sub(b).max_abs() <= tol
    }

    #[test]
    fn sqrt_examples() {
        let i2 = SmallMat::identity(2);
        assert!(close(&i2.sqrt_spd().unwrap(), &i2, 1e-15));
        let d = SmallMat::diag(&[4.0, 9.0]);
        assert!(close(&d.sqrt_spd().unwrap(), &SmallMat::diag(&[2.0, 3.0]), 1e-15));
        let m = SmallMat::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let r3 = 3f64.sqrt();
        let want = SmallMat::from_rows(&[&[(r3 + 1.0) / 2.0, (r3 - 1.0) / 2.0], &[(r3 - 1.0) / 2.0, (r3 + 1.0) / 2.0]]);
        assert!(close(&m.sqrt_spd().unwrap(), &want, 1e-15));
        let d3 = SmallMat::diag(&[4.0, 9.0, 16.0]);
        assert!(close(&d3.sqrt_spd().unwrap(), &SmallMat::diag(&[2.0, 3.0, 4.0]), 1e-14));
    }

    #[test]
    fn rejects_indefinite() {
        let m = SmallMat::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(m.sqrt_spd().is_err());
        assert!(SmallMat::diag(&[1.0, 0.0, 2.0]).sqrt_spd().is_err());
    }

    #[test]
    fn jacobi_reconstructs() {
        let m = SmallMat::from_rows(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, -0.2], &[0.5, -0.2, 2.0]]);
        let (vals, v) = m.sym_eigen();
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        let rebuilt = SmallMat::from_fn(3, |i, j| (0..3).map(|k| v.get(i, k) * vals[k] * v.get(j, k)).sum());
        assert!(close(&rebuilt, &m, 1e-13));
        let inv = m.inverse_spd().unwrap();
        assert!(close(&inv.mul(&m), &SmallMat::identity(3), 1e-14));
    }
}
