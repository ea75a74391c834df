//! Per-dose information matrices, design Fisher information, and the D- and
//! c-optimality criteria.
//!
//! The continuation-ratio trinomial factors into two logistic experiments
//! per dose, so the per-dose Fisher information is block diagonal,
//! `mu(x, theta) = w_eff(x) u u^T + w_tox(x) v v^T` with `u = (1, x, 0, 0)`,
//! `v = (0, 0, 1, x)`. The unit tests pin this closed form against the raw
//! definition `sum_k pi_k^{-1} (d pi_k)(d pi_k)^T` computed by finite
//! differences.

use serde::{Deserialize, Serialize};

use crate::cr_model::ThetaParams;
use crate::sym4::{cholesky, Chol4};
use crate::Error;

/// Pivot tolerance below which a design information matrix is treated as
/// singular.
pub const SINGULAR_PIVOT_TOL: f64 = 1e-12;

/// A 4x4 symmetric positive-semidefinite information matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfoMatrix(pub [[f64; 4]; 4]);

impl InfoMatrix {
    pub fn zeros() -> Self {
        InfoMatrix([[0.0; 4]; 4])
    }

    /// `self += w * other`, entrywise.
    pub fn add_scaled(&mut self, w: f64, other: &InfoMatrix) {
        for i in 0..4 {
            for j in 0..4 {
                self.0[i][j] += w * other.0[i][j];
            }
        }
    }

    /// Cholesky factor, or `None` when singular at the pivot tolerance.
    pub fn factor(&self) -> Option<Chol4> {
        cholesky(&self.0, SINGULAR_PIVOT_TOL)
    }

    /// Log-determinant, or `None` when singular.
    pub fn ln_det(&self) -> Option<f64> {
        self.factor().map(|c| c.ln_det())
    }

    /// Quadratic form `b^T M^{-1} b` via a linear solve, or `None` when
    /// singular.
    pub fn inv_quadratic_form(&self, b: &[f64; 4]) -> Option<f64> {
        let chol = self.factor()?;
        let x = chol.solve(b);
        Some((0..4).map(|i| b[i] * x[i]).sum())
    }
}

/// A design measure: support points (log-doses) with allocation weights
/// summing to one. Points are kept sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMeasure {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl DesignMeasure {
    /// Validates, sorts by dose, and renormalizes the weights. The weight sum
    /// must already be within `1e-9` of one.
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self, Error> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(Error::InvalidDesign(format!(
                "need matching non-empty points/weights, got {}/{}",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidDesign("support points must be finite".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDesign("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDesign(format!("weights sum to {total}, expected 1")));
        }
        let mut pairs: Vec<(f64, f64)> = points.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (points, weights): (Vec<f64>, Vec<f64>) =
            pairs.into_iter().map(|(p, w)| (p, w / total)).unzip();
        Ok(DesignMeasure { points, weights })
    }

    /// Point mass at a single dose.
    pub fn point_mass(dose: f64) -> Self {
        DesignMeasure { points: vec![dose], weights: vec![1.0] }
    }

    /// Equal weights on the given doses.
    pub fn uniform(points: Vec<f64>) -> Result<Self, Error> {
        let n = points.len();
        DesignMeasure::new(points, vec![1.0 / n as f64; n])
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    /// Merges support points closer than `merge_tol` into their
    /// weight-averaged location, drops weights below `weight_tol`, and
    /// renormalizes. Falls back to the heaviest point if everything would be
    /// dropped.
    pub fn cleaned(&self, merge_tol: f64, weight_tol: f64) -> DesignMeasure {
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(self.len());
        for (p, w) in self.iter() {
            match merged.last_mut() {
                Some((mp, mw)) if p - *mp < merge_tol => {
                    let total = *mw + w;
                    if total > 0.0 {
                        *mp = (*mp * *mw + p * w) / total;
                    }
                    *mw = total;
                }
                _ => merged.push((p, w)),
            }
        }
        let mut kept: Vec<(f64, f64)> =
            merged.iter().copied().filter(|&(_, w)| w >= weight_tol).collect();
        if kept.is_empty() {
            let &(p, w) = merged
                .iter()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("cleanup of a non-empty design");
            kept.push((p, w.max(1.0)));
        }
        let total: f64 = kept.iter().map(|&(_, w)| w).sum();
        let (points, weights) = kept.into_iter().map(|(p, w)| (p, w / total)).unzip();
        DesignMeasure { points, weights }
    }
}

/// Gradient of the optimal biological dose with respect to the model
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CVector(pub [f64; 4]);

/// Block weights `(w_eff, w_tox)` of the per-dose information matrix
/// `mu(d) = w_eff * u u^T + w_tox * v v^T` with `u = (1, d, 0, 0)` and
/// `v = (0, 0, 1, d)`.
///
/// These are the trinomial Fisher weights of the two logistic factors:
/// `w_eff = p_eff (1 - p_eff) (1 - p_tox)` (the efficacy response is only
/// observed in the absence of toxicity) and `w_tox = p_tox (1 - p_tox)`.
#[inline]
pub(crate) fn mu_weights(d: f64, theta: &ThetaParams) -> (f64, f64) {
    let pe = theta.conditional_efficacy(d);
    let pt = theta.toxicity(d);
    let no_tox = 1.0 - pt;
    (pe * (1.0 - pe) * no_tox, pt * no_tox)
}

/// Per-dose information matrix. Errors when both block weights have
/// underflowed to zero at `d`.
pub fn mu(d: f64, theta: &ThetaParams) -> Result<InfoMatrix, Error> {
    if !d.is_finite() {
        return Err(Error::NonFinite("dose"));
    }
    let (w_eff, w_tox) = mu_weights(d, theta);
    if w_eff <= 0.0 && w_tox <= 0.0 {
        return Err(Error::DegenerateDose { dose: d, class: 0 });
    }
    let mut m = [[0.0; 4]; 4];
    m[0][0] = w_eff;
    m[0][1] = w_eff * d;
    m[1][0] = w_eff * d;
    m[1][1] = w_eff * d * d;
    m[2][2] = w_tox;
    m[2][3] = w_tox * d;
    m[3][2] = w_tox * d;
    m[3][3] = w_tox * d * d;
    Ok(InfoMatrix(m))
}

/// Design Fisher information `M(xi, theta) = sum_i rho_i mu(d_i, theta)`.
pub fn design_fim(design: &DesignMeasure, theta: &ThetaParams) -> Result<InfoMatrix, Error> {
    let mut m = InfoMatrix::zeros();
    for (d, w) in design.iter() {
        m.add_scaled(w, &mu(d, theta)?);
    }
    Ok(m)
}

/// D-criterion `-ln det M(xi, theta)`. Returns `+inf` for singular or
/// degenerate designs so the optimizer sees a total objective.
pub fn d_criterion(design: &DesignMeasure, theta: &ThetaParams) -> f64 {
    match design_fim(design, theta) {
        Ok(m) => m.ln_det().map_or(f64::INFINITY, |ld| -ld),
        Err(_) => f64::INFINITY,
    }
}

/// c-criterion `c^T M^{-1}(xi, theta) c` via a linear solve. Returns `+inf`
/// for singular or degenerate designs.
pub fn c_criterion(design: &DesignMeasure, theta: &ThetaParams, c: &CVector) -> f64 {
    match design_fim(design, theta) {
        Ok(m) => m.inv_quadratic_form(&c.0).unwrap_or(f64::INFINITY),
        Err(_) => f64::INFINITY,
    }
}

/// Gradient of the optimal biological dose, by implicit differentiation of
/// the stationarity residual `F(d, theta) = theta2 (1 - p_eff) - theta4 p_tox`
/// at `d = OBD(theta)`: `c_i = -(dF/dtheta_i) / (dF/dd)`.
pub fn c_vector(theta: &ThetaParams) -> Result<CVector, Error> {
    let d = theta.obd()?;
    let sa = theta.conditional_efficacy(d);
    let sb = theta.toxicity(d);
    let da = sa * (1.0 - sa);
    let db = sb * (1.0 - sb);
    let df_dd = -(theta.theta2 * theta.theta2 * da + theta.theta4 * theta.theta4 * db);
    if df_dd.abs() < 1e-12 {
        return Err(Error::DegenerateGradient);
    }
    let grad = [
        -theta.theta2 * da,
        (1.0 - sa) - theta.theta2 * da * d,
        -theta.theta4 * db,
        -sb - theta.theta4 * db * d,
    ];
    Ok(CVector([
        -grad[0] / df_dd,
        -grad[1] / df_dd,
        -grad[2] / df_dd,
        -grad[3] / df_dd,
    ]))
}
