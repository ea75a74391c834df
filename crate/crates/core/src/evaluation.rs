//! Design verification and comparison: equivalence-theorem sensitivity
//! curves, D-/c-efficiencies, the random-walk-rule benchmark, the expected
//! success proportion, and the composite score.
//!
//! Sensitivity functions are the standard directional derivatives of the two
//! criteria. For D-optimality `phi(d) = tr(M^{-1} mu(d)) - p` with `p = 4`
//! parameters; for c-optimality
//! `phi(d) = c^T M^{-1} mu(d) M^{-1} c / (c^T M^{-1} c) - 1`. An optimal
//! design has `phi <= 0` over the admissible doses with equality on its
//! support.

use serde::Serialize;

use crate::cr_model::ThetaParams;
use crate::information::{design_fim, mu_weights, CVector, DesignMeasure};
use crate::problems::{Criterion, DesignProblem, ResolvedBounds};
use crate::sym4::Chol4;
use crate::Error;

/// Violation tolerance for the equivalence-theorem check.
pub const GET_TOLERANCE: f64 = 1e-3;
/// Default sample count for sensitivity curves on an interval.
pub const SENSITIVITY_SAMPLES: usize = 2001;

/// D-criterion sensitivity evaluator for a fixed design.
pub(crate) struct DSens<'a> {
    chol: Chol4,
    theta: &'a ThetaParams,
}

impl<'a> DSens<'a> {
    /// `None` when the design information matrix is singular or degenerate.
    pub(crate) fn new(design: &DesignMeasure, theta: &'a ThetaParams) -> Option<Self> {
        let m = design_fim(design, theta).ok()?;
        Some(DSens { chol: m.factor()?, theta })
    }

    /// `tr(M^{-1} mu(d)) / 4`; equals 1 on the support of a D-optimal design.
    pub(crate) fn trace_ratio(&self, d: f64) -> f64 {
        let (w_eff, w_tox) = mu_weights(d, self.theta);
        let u = [1.0, d, 0.0, 0.0];
        let v = [0.0, 0.0, 1.0, d];
        let mu_u = self.chol.solve(&u);
        let mu_v = self.chol.solve(&v);
        let qu: f64 = (0..4).map(|i| u[i] * mu_u[i]).sum();
        let qv: f64 = (0..4).map(|i| v[i] * mu_v[i]).sum();
        (w_eff * qu + w_tox * qv) / 4.0
    }

    pub(crate) fn phi(&self, d: f64) -> f64 {
        4.0 * (self.trace_ratio(d) - 1.0)
    }
}

/// c-criterion sensitivity evaluator for a fixed design.
pub(crate) struct CSens<'a> {
    y: [f64; 4],
    denom: f64,
    theta: &'a ThetaParams,
}

impl<'a> CSens<'a> {
    pub(crate) fn new(
        design: &DesignMeasure,
        theta: &'a ThetaParams,
        c: &CVector,
    ) -> Option<Self> {
        let m = design_fim(design, theta).ok()?;
        let chol = m.factor()?;
        let y = chol.solve(&c.0);
        let denom: f64 = (0..4).map(|i| c.0[i] * y[i]).sum();
        (denom > 0.0).then_some(CSens { y, denom, theta })
    }

    /// `c^T M^{-1} mu(d) M^{-1} c / (c^T M^{-1} c)`; equals 1 on the support
    /// of a c-optimal design.
    pub(crate) fn ratio(&self, d: f64) -> f64 {
        let (w_eff, w_tox) = mu_weights(d, self.theta);
        let uy = self.y[0] + d * self.y[1];
        let vy = self.y[2] + d * self.y[3];
        (w_eff * uy * uy + w_tox * vy * vy) / self.denom
    }

    pub(crate) fn phi(&self, d: f64) -> f64 {
        self.ratio(d) - 1.0
    }
}

/// A sampled sensitivity (directional derivative) curve over the resolved
/// bounds of a problem, with the residuals at the design's support points.
#[derive(Debug, Clone, Serialize)]
pub struct SensitivityCurve {
    /// `(dose, phi)` samples in increasing dose order.
    pub samples: Vec<(f64, f64)>,
    /// Largest sampled `phi`; positive values violate optimality.
    pub max_violation: f64,
    /// `(support point, phi)` pairs; near zero for an optimal design.
    pub support_residuals: Vec<(f64, f64)>,
}

impl SensitivityCurve {
    /// Equivalence-theorem acceptance: no sampled violation above `tol` and
    /// support residuals within `tol` of zero.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation <= tol && self.support_residuals.iter().all(|&(_, r)| r.abs() <= tol)
    }
}

fn eval_points(bounds: &ResolvedBounds, samples: usize) -> Vec<f64> {
    match bounds {
        ResolvedBounds::Interval { lower, upper } => {
            let n = samples.max(2);
            (0..n)
                .map(|k| lower + (upper - lower) * k as f64 / (n - 1) as f64)
                .collect()
        }
        ResolvedBounds::Admissible { doses, .. } => doses.clone(),
    }
}

fn curve_from<F: Fn(f64) -> f64>(
    phi: F,
    design: &DesignMeasure,
    bounds: &ResolvedBounds,
    samples: usize,
) -> SensitivityCurve {
    let samples: Vec<(f64, f64)> =
        eval_points(bounds, samples).into_iter().map(|d| (d, phi(d))).collect();
    let max_violation =
        samples.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let support_residuals = design.points().iter().map(|&p| (p, phi(p))).collect();
    SensitivityCurve { samples, max_violation, support_residuals }
}

/// D-criterion sensitivity curve of a design over the resolved bounds.
pub fn sensitivity_d(
    design: &DesignMeasure,
    theta: &ThetaParams,
    bounds: &ResolvedBounds,
    samples: usize,
) -> Result<SensitivityCurve, Error> {
    let sens = DSens::new(design, theta)
        .ok_or_else(|| Error::SingularInformation("design under D-sensitivity check".into()))?;
    Ok(curve_from(|d| sens.phi(d), design, bounds, samples))
}

/// c-criterion sensitivity curve of a design over the resolved bounds.
pub fn sensitivity_c(
    design: &DesignMeasure,
    theta: &ThetaParams,
    c: &CVector,
    bounds: &ResolvedBounds,
    samples: usize,
) -> Result<SensitivityCurve, Error> {
    let sens = CSens::new(design, theta, c)
        .ok_or_else(|| Error::SingularInformation("design under c-sensitivity check".into()))?;
    Ok(curve_from(|d| sens.phi(d), design, bounds, samples))
}

/// Sensitivity curve for a design under a problem's own criterion and
/// bounds.
pub fn sensitivity(problem: &DesignProblem, design: &DesignMeasure) -> Result<SensitivityCurve, Error> {
    match problem.criterion {
        Criterion::D => {
            sensitivity_d(design, &problem.theta, &problem.bounds, SENSITIVITY_SAMPLES)
        }
        Criterion::C => sensitivity_c(
            design,
            &problem.theta,
            problem.c.as_ref().expect("c problems carry c"),
            &problem.bounds,
            SENSITIVITY_SAMPLES,
        ),
    }
}

/// Efficiency and ethics metrics of a design against reference designs.
#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyReport {
    /// `(det M(xi) / det M(ref_d))^{1/4}`.
    pub d_eff: f64,
    /// `c^T M^{-1}(ref_c) c / c^T M^{-1}(xi) c`.
    pub c_eff: f64,
    /// Euclidean distance of `(d_eff, c_eff)` from the ideal point `(1, 1)`.
    pub delta: f64,
    /// Expected success proportion relative to treating everyone at the best
    /// grid dose.
    pub s: f64,
    /// Composite score `sqrt((d*c + d*s + c*s) / 3)`.
    pub score: f64,
}

/// Composite design score from the efficiency/ethics triple.
pub fn score(d_eff: f64, c_eff: f64, s: f64) -> f64 {
    ((d_eff * c_eff + d_eff * s + c_eff * s) / 3.0).sqrt()
}

/// Expected proportion of successes under `design`, relative to the
/// most ethical allocation that treats every patient at the best grid dose.
pub fn success_proportion(
    design: &DesignMeasure,
    theta: &ThetaParams,
    grid: &[f64],
) -> Result<f64, Error> {
    if grid.len() < 2 {
        return Err(Error::InvalidDoseSpace("grid needs at least two doses".into()));
    }
    let obd_idx = theta.obd_index(grid);
    let best = theta.probs(grid[obd_idx]).success;
    let expected: f64 = design.iter().map(|(d, w)| w * theta.probs(d).success).sum();
    Ok(expected / best)
}

/// Full efficiency report for `design` against D- and c-reference designs.
///
/// `ref_d` anchors the D-efficiency, `ref_c` the c-efficiency; the success
/// proportion is taken relative to the best dose of `grid`.
pub fn efficiencies(
    design: &DesignMeasure,
    theta: &ThetaParams,
    ref_d: &DesignMeasure,
    ref_c: &DesignMeasure,
    c: &CVector,
    grid: &[f64],
) -> Result<EfficiencyReport, Error> {
    let ln_det = |xi: &DesignMeasure, name: &str| -> Result<f64, Error> {
        design_fim(xi, theta)?
            .ln_det()
            .ok_or_else(|| Error::SingularInformation(name.into()))
    };
    let quad = |xi: &DesignMeasure, name: &str| -> Result<f64, Error> {
        design_fim(xi, theta)?
            .inv_quadratic_form(&c.0)
            .ok_or_else(|| Error::SingularInformation(name.into()))
    };
    let d_eff = ((ln_det(design, "design under evaluation")? - ln_det(ref_d, "D reference design")?)
        / 4.0)
        .exp();
    let c_eff = quad(ref_c, "c reference design")? / quad(design, "design under evaluation")?;
    let delta = (1.0 - d_eff).hypot(1.0 - c_eff);
    let s = success_proportion(design, theta, grid)?;
    Ok(EfficiencyReport { d_eff, c_eff, delta, s, score: score(d_eff, c_eff, s) })
}

/// Stationary allocation of the random walk rule targeting the safe optimal
/// dose on a grid.
///
/// With `x_l` the largest dose whose toxicity probability does not exceed
/// `gamma`, the chain walks doses `x_1..x_l` (up on a neutral outcome, down
/// on toxicity, stay on success) and its stationary weights are
/// `Pi_i = prod_{j<=i} lambda_j` with
/// `lambda_k = pi0(x_{k-1}) / pi2(x_k)` and `lambda_1` the normalizer.
pub fn rwr_stationary(
    theta: &ThetaParams,
    grid: &[f64],
    gamma: f64,
) -> Result<DesignMeasure, Error> {
    if grid.len() < 2 {
        return Err(Error::InvalidDoseSpace("grid needs at least two doses".into()));
    }
    if !(gamma.is_finite() && gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidProbability { name: "gamma", value: gamma });
    }
    let safe_count = grid.iter().take_while(|&&x| theta.probs(x).toxicity <= gamma).count();
    if safe_count == 0 {
        return Err(Error::NoSafeDose {
            dose: grid[0],
            prob: theta.probs(grid[0]).toxicity,
            gamma,
        });
    }
    // Cumulative products prod_{j=2..k} lambda_j, with the k = 1 term equal
    // to one.
    let mut cumulative = Vec::with_capacity(safe_count);
    cumulative.push(1.0);
    for k in 1..safe_count {
        let lambda = theta.probs(grid[k - 1]).neutral / theta.probs(grid[k]).toxicity;
        cumulative.push(cumulative[k - 1] * lambda);
    }
    let total: f64 = cumulative.iter().sum();
    let weights: Vec<f64> = cumulative.iter().map(|p| p / total).collect();
    DesignMeasure::new(grid[..safe_count].to_vec(), weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::information::c_vector;
    use crate::scenarios::{standard_grid, Scenario};

    #[test]
    fn rwr_single_safe_dose_is_point_mass() {
        // Shift the toxicity curve so only the lowest dose is safe.
        let theta = ThetaParams::new(1.0, 1.0, -0.5, 1.0).unwrap();
        let grid = vec![-1.0, 1.0, 2.0];
        assert!(theta.probs(-1.0).toxicity <= 0.2);
        assert!(theta.probs(1.0).toxicity > 0.2);
        let xi = rwr_stationary(&theta, &grid, 0.2).unwrap();
        assert_eq!(xi.points(), &[-1.0]);
        assert_eq!(xi.weights(), &[1.0]);
    }

    #[test]
    fn rwr_two_dose_closed_form() {
        let theta = Scenario::D.theta();
        let grid = standard_grid();
        let xi = rwr_stationary(&theta, &grid, 0.2).unwrap();
        assert_eq!(xi.len(), 2);
        let lambda2 = theta.probs(grid[0]).neutral / theta.probs(grid[1]).toxicity;
        assert!((xi.weights()[0] - 1.0 / (1.0 + lambda2)).abs() < 1e-12);
        assert!((xi.weights()[1] - lambda2 / (1.0 + lambda2)).abs() < 1e-12);
    }

    #[test]
    fn rwr_no_safe_dose_errors() {
        let theta = ThetaParams::new(1.0, 1.0, -0.5, 1.0).unwrap();
        let err = rwr_stationary(&theta, &[1.0, 2.0], 0.2).unwrap_err();
        assert!(matches!(err, Error::NoSafeDose { .. }));
    }

    #[test]
    fn rwr_weights_sum_to_one_all_scenarios() {
        let grid = standard_grid();
        for s in Scenario::ALL {
            let xi = rwr_stationary(&s.theta(), &grid, 0.2).unwrap();
            let total: f64 = xi.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "{s:?}");
            assert!(xi.weights().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn success_proportion_point_mass_at_best_dose() {
        let theta = Scenario::A.theta();
        let grid = standard_grid();
        let best = grid[theta.obd_index(&grid)];
        let s = success_proportion(&DesignMeasure::point_mass(best), &theta, &grid).unwrap();
        assert_eq!(s, 1.0);
    }

    #[test]
    fn efficiency_of_design_against_itself_is_one() {
        let theta = Scenario::A.theta();
        let grid = standard_grid();
        let xi = DesignMeasure::new(vec![-1.20, 2.32, 4.38], vec![0.28, 0.36, 0.36]).unwrap();
        let c = c_vector(&theta).unwrap();
        let rep = efficiencies(&xi, &theta, &xi, &xi, &c, &grid).unwrap();
        assert_eq!(rep.d_eff, 1.0);
        assert_eq!(rep.c_eff, 1.0);
        assert_eq!(rep.delta, 0.0);
    }

    #[test]
    fn efficiency_invariances() {
        let theta = Scenario::B.theta();
        let grid = standard_grid();
        let c = c_vector(&theta).unwrap();
        let refd = DesignMeasure::new(vec![-1.20, -0.14, 4.01, 5.08], vec![0.25; 4]).unwrap();
        let refc = DesignMeasure::new(vec![-1.20, 0.18, 3.71, 5.08], vec![0.09, 0.29, 0.54, 0.08])
            .unwrap();
        // Support-point permutation does not change efficiencies.
        let xi1 = DesignMeasure::new(vec![0.5, 3.0], vec![0.4, 0.6]).unwrap();
        let xi2 = DesignMeasure::new(vec![3.0, 0.5], vec![0.6, 0.4]).unwrap();
        let r1 = efficiencies(&xi1, &theta, &refd, &refc, &c, &grid).unwrap();
        let r2 = efficiencies(&xi2, &theta, &refd, &refc, &c, &grid).unwrap();
        assert_eq!(r1.d_eff, r2.d_eff);
        assert_eq!(r1.c_eff, r2.c_eff);
        // Scaling c by a power of two leaves c-efficiency bit-identical.
        let c2 = CVector([2.0 * c.0[0], 2.0 * c.0[1], 2.0 * c.0[2], 2.0 * c.0[3]]);
        let r3 = efficiencies(&xi1, &theta, &refd, &refc, &c2, &grid).unwrap();
        assert_eq!(r1.c_eff, r3.c_eff);
    }

    #[test]
    fn singular_design_named_in_error() {
        let theta = Scenario::A.theta();
        let grid = standard_grid();
        let c = c_vector(&theta).unwrap();
        let good = DesignMeasure::new(vec![0.0, 3.0], vec![0.5, 0.5]).unwrap();
        let singular = DesignMeasure::point_mass(2.0);
        let err = efficiencies(&singular, &theta, &good, &good, &c, &grid).unwrap_err();
        assert!(matches!(err, Error::SingularInformation(ref which) if which.contains("evaluation")));
        let err = efficiencies(&good, &theta, &singular, &good, &c, &grid).unwrap_err();
        assert!(matches!(err, Error::SingularInformation(ref which) if which.contains("reference")));
    }

    #[test]
    fn score_formula() {
        assert!((score(1.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((score(1.0, 0.89, 0.85) - 0.91).abs() < 0.005);
    }

    #[test]
    fn sensitivity_scaling_invariance_in_c() {
        let theta = Scenario::A.theta();
        let c = c_vector(&theta).unwrap();
        let c3 = CVector([3.0 * c.0[0], 3.0 * c.0[1], 3.0 * c.0[2], 3.0 * c.0[3]]);
        let xi = DesignMeasure::new(vec![-0.6, 3.86], vec![0.3, 0.7]).unwrap();
        let bounds = ResolvedBounds::Interval { lower: -1.20, upper: 4.38 };
        let a = sensitivity_c(&xi, &theta, &c, &bounds, 101).unwrap();
        let b = sensitivity_c(&xi, &theta, &c3, &bounds, 101).unwrap();
        for ((d1, v1), (d2, v2)) in a.samples.iter().zip(b.samples.iter()) {
            assert_eq!(d1, d2);
            assert!((v1 - v2).abs() < 1e-9);
        }
    }

    #[test]
    fn perturbed_design_fails_get() {
        // Shifting a support point away from an optimal design produces a
        // positive sensitivity violation.
        let theta = Scenario::D.theta();
        let bounds = ResolvedBounds::Interval { lower: -1.20, upper: 0.11307 };
        let shifted = DesignMeasure::new(vec![-1.20, -0.39], vec![0.5, 0.5]).unwrap();
        let curve = sensitivity_d(&shifted, &theta, &bounds, 501).unwrap();
        assert!(curve.max_violation > 0.0);
        assert!(!curve.passes(GET_TOLERANCE));
    }

    #[test]
    fn singular_design_sensitivity_errors() {
        let theta = Scenario::A.theta();
        let bounds = ResolvedBounds::Interval { lower: -1.0, upper: 1.0 };
        let xi = DesignMeasure::point_mass(0.0);
        assert!(sensitivity_d(&xi, &theta, &bounds, 101).is_err());
    }
}
