//! Dense 4x4 symmetric kernel: Cholesky factorization, log-determinant, and
//! linear solves. Everything downstream funnels its linear algebra through
//! this module.

/// Lower-triangular Cholesky factor of a 4x4 symmetric positive-definite
/// matrix.
#[derive(Debug, Clone, Copy)]
pub struct Chol4 {
    l: [[f64; 4]; 4],
}

/// Factorizes a symmetric matrix, treating pivots at or below
/// `pivot_tol * max_diag` as singular.
pub fn cholesky(m: &[[f64; 4]; 4], pivot_tol: f64) -> Option<Chol4> {
    let scale = (0..4).map(|i| m[i][i].abs()).fold(0.0_f64, f64::max).max(1.0);
    let floor = pivot_tol * scale;
    let mut l = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in i..4 {
            let mut s = m[i][j];
            for k in 0..i {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= floor || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[j][i] = s / l[i][i];
            }
        }
    }
    Some(Chol4 { l })
}

impl Chol4 {
    /// `ln det(M) = 2 * sum ln L_ii`.
    pub fn ln_det(&self) -> f64 {
        2.0 * (0..4).map(|i| self.l[i][i].ln()).sum::<f64>()
    }

    /// Solves `M x = b` by forward and backward substitution.
    pub fn solve(&self, b: &[f64; 4]) -> [f64; 4] {
        let l = &self.l;
        let mut y = [0.0; 4];
        for i in 0..4 {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i][k] * y[k];
            }
            y[i] = s / l[i][i];
        }
        let mut x = [0.0; 4];
        for i in (0..4).rev() {
            let mut s = y[i];
            for k in i + 1..4 {
                s -= l[k][i] * x[k];
            }
            x[i] = s / l[i][i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd_example() -> [[f64; 4]; 4] {
        // A^T A + I for a fixed A; guaranteed SPD.
        let a = [
            [1.0, 2.0, 0.5, -1.0],
            [0.0, 1.5, 1.0, 0.25],
            [2.0, -0.5, 1.0, 0.0],
            [1.0, 0.0, 0.0, 3.0],
        ];
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    m[i][j] += a[k][i] * a[k][j];
                }
            }
            m[i][i] += 1.0;
        }
        m
    }

    #[test]
    fn solve_recovers_rhs() {
        let m = spd_example();
        let chol = cholesky(&m, 1e-12).unwrap();
        let b = [1.0, -2.0, 0.5, 4.0];
        let x = chol.solve(&b);
        for i in 0..4 {
            let mut s = 0.0;
            for j in 0..4 {
                s += m[i][j] * x[j];
            }
            assert!((s - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn ln_det_matches_cofactor_expansion() {
        let m = spd_example();
        let chol = cholesky(&m, 1e-12).unwrap();
        assert!((chol.ln_det() - det4(&m).ln()).abs() < 1e-10);
    }

    #[test]
    fn singular_matrix_rejected() {
        // Rank-1 outer product.
        let v = [1.0, 2.0, 3.0, 4.0];
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] = v[i] * v[j];
            }
        }
        assert!(cholesky(&m, 1e-12).is_none());
    }

    /// Determinant by cofactor expansion; test-only oracle.
    fn det4(m: &[[f64; 4]; 4]) -> f64 {
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let mut det = 0.0;
        for col in 0..4 {
            let mut minor = [[0.0; 3]; 3];
            for i in 1..4 {
                let mut jj = 0;
                for j in 0..4 {
                    if j != col {
                        minor[i - 1][jj] = m[i][j];
                        jj += 1;
                    }
                }
            }
            let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
            det += sign * m[0][col] * det3(minor);
        }
        det
    }
}
