//! Fixed-size dense linear algebra for the 2×2 diffusion matrices and the
//! 4×4 Kronecker-structured information matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];
pub type Vec4 = [f64; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat4(pub [[f64; 4]; 4]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn new(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Mat2([[m00, m01], [m10, m11]])
    }

    pub fn diag(d0: f64, d1: f64) -> Self {
        Mat2([[d0, 0.0], [0.0, d1]])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    /// Closed-form inverse; `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let m = &self.0;
        Some(Mat2([
            [m[1][1] / d, -m[0][1] / d],
            [-m[1][0] / d, m[0][0] / d],
        ]))
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    pub fn scale(&self, c: f64) -> Mat2 {
        let m = &self.0;
        Mat2([[c * m[0][0], c * m[0][1]], [c * m[1][0], c * m[1][1]]])
    }

    /// `uᵀ M v`.
    pub fn bilinear(&self, u: Vec2, v: Vec2) -> f64 {
        let mv = self.apply(v);
        u[0] * mv[0] + u[1] * mv[1]
    }

    /// Lower Cholesky factor of a symmetric positive definite matrix.
    pub fn cholesky(&self) -> Result<Mat2> {
        let m = &self.0;
        if m[0][0] <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let l00 = m[0][0].sqrt();
        let l10 = m[1][0] / l00;
        let rest = m[1][1] - l10 * l10;
        if rest <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Mat2([[l00, 0.0], [l10, rest.sqrt()]]))
    }

    /// Eigenvalues of a symmetric matrix, ascending.
    pub fn sym_eigenvalues(&self) -> Vec2 {
        let m = &self.0;
        let mean = 0.5 * (m[0][0] + m[1][1]);
        let half_diff = 0.5 * (m[0][0] - m[1][1]);
        let off = 0.5 * (m[0][1] + m[1][0]);
        let rad = half_diff.hypot(off);
        [mean - rad, mean + rad]
    }

    pub fn kron(&self, o: &Mat2) -> Mat4 {
        let mut out = [[0.0; 4]; 4];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        out[2 * i + k][2 * j + l] = self.0[i][j] * o.0[k][l];
                    }
                }
            }
        }
        Mat4(out)
    }
}

impl Mat4 {
    pub const IDENTITY: Mat4 = Mat4([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]);

    pub fn zeros() -> Self {
        Mat4([[0.0; 4]; 4])
    }

    pub fn diag(d: Vec4) -> Self {
        let mut m = Self::zeros();
        for (i, v) in d.iter().enumerate() {
            m.0[i][i] = *v;
        }
        m
    }

    pub fn apply(&self, v: Vec4) -> Vec4 {
        let mut out = [0.0; 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|j| self.0[i][j] * v[j]).sum();
        }
        out
    }

    pub fn quad_form(&self, v: Vec4) -> f64 {
        dot4(v, self.apply(v))
    }

    /// `D M D` for a diagonal `D` given by its entries.
    pub fn sandwich_diag(&self, d: Vec4) -> Mat4 {
        let mut out = *self;
        for i in 0..4 {
            for j in 0..4 {
                out.0[i][j] *= d[i] * d[j];
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros();
        for i in 0..4 {
            for j in 0..4 {
                out.0[i][j] = self.0[j][i];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..4 {
            for j in 0..i {
                worst = worst.max((self.0[i][j] - self.0[j][i]).abs());
            }
        }
        worst
    }

    /// Lower Cholesky factor.
    pub fn cholesky(&self) -> Result<Mat4> {
        let a = &self.0;
        let mut l = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                if i == j {
                    let d = a[i][i] - s;
                    if d <= 0.0 || !d.is_finite() {
                        return Err(Error::NotPositiveDefinite);
                    }
                    l[i][j] = d.sqrt();
                } else {
                    l[i][j] = (a[i][j] - s) / l[j][j];
                }
            }
        }
        Ok(Mat4(l))
    }

    /// Solves `M x = b` for symmetric positive definite `M`.
    pub fn solve_spd(&self, b: Vec4) -> Result<Vec4> {
        let l = self.cholesky()?.0;
        let mut y = [0.0; 4];
        for i in 0..4 {
            let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
            y[i] = (b[i] - s) / l[i][i];
        }
        let mut x = [0.0; 4];
        for i in (0..4).rev() {
            let s: f64 = (i + 1..4).map(|k| l[k][i] * x[k]).sum();
            x[i] = (y[i] - s) / l[i][i];
        }
        Ok(x)
    }
}

pub fn dot4(u: Vec4, v: Vec4) -> f64 {
    u.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip() {
        let m = Mat2::new(4.0, 3.0, 3.0, 9.0);
        let p = m.mul(&m.inverse().unwrap());
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((p.0[i][j] - want).abs() < 1e-14);
            }
        }
        assert!(Mat2::new(1.0, 2.0, 2.0, 4.0).inverse().is_none());
    }

    #[test]
    fn kronecker_cholesky_factorizes() {
        let a = Mat2::new(2.0, -1.0, -1.0, 1.0);
        let b = Mat2::new(1.5, 0.4, 0.4, 0.7);
        let la = a.cholesky().unwrap();
        let lb = b.cholesky().unwrap();
        let lk = la.kron(&lb);
        let direct = a.kron(&b).cholesky().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((lk.0[i][j] - direct.0[i][j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn spd_solve() {
        let m = Mat2::new(2.0, -1.0, -1.0, 1.0).kron(&Mat2::new(1.0, 0.3, 0.3, 2.0));
        let b = [1.0, -2.0, 0.5, 3.0];
        let x = m.solve_spd(b).unwrap();
        let back = m.apply(x);
        for i in 0..4 {
            assert!((back[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_eigenvalues() {
        let ev = Mat2::new(2.0, 1.0, 1.0, 2.0).sym_eigenvalues();
        assert!((ev[0] - 1.0).abs() < 1e-15 && (ev[1] - 3.0).abs() < 1e-15);
    }
}
