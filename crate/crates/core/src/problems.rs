//! The restricted optimal design problems: a criterion (D or c), an ethical
//! restriction (MTD cap or therapeutic window), and a dose space bound
//! together into an objective for the optimizer.
//!
//! Restrictions are resolved once at the local parameter value, so the
//! search bounds are fixed constants during optimization. Solving runs the
//! particle swarm globally and then a deterministic local polish
//! (multiplicative weight updates, coordinate-wise support moves, and
//! sensitivity-guided support augmentation) so that solutions certify
//! against the equivalence theorem.

use serde::{Deserialize, Serialize};

use crate::cr_model::{DiscreteTargets, DoseSpace, MinEdDefinition, TargetDoses, ThetaParams};
use crate::evaluation::{CSens, DSens};
use crate::information::{c_criterion, c_vector, d_criterion, CVector, DesignMeasure};
use crate::numeric::local_min_1d;
use crate::pso::{optimize, Encoding, PsoConfig, PsoResult, CONTINUOUS_SUPPORT_POINTS, MERGE_TOL, WEIGHT_DROP_TOL};
use crate::Error;

/// Design optimality criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    /// Minimize `-ln det M`.
    D,
    /// Minimize `c^T M^{-1} c` for the OBD gradient `c`.
    C,
}

/// Ethical restriction on the admissible doses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Restriction {
    /// Doses must not exceed the maximum tolerated dose.
    MtdCap,
    /// Doses must lie inside the therapeutic window `[MinED, MTD]`.
    TherapeuticWindow,
}

/// Restriction bounds resolved against a concrete dose space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ResolvedBounds {
    Interval { lower: f64, upper: f64 },
    /// Admissible grid doses with their indices into the full grid.
    Admissible { doses: Vec<f64>, indices: Vec<usize> },
}

impl ResolvedBounds {
    /// Whether `d` is admissible, up to a small placement tolerance.
    pub fn contains(&self, d: f64) -> bool {
        match self {
            ResolvedBounds::Interval { lower, upper } => {
                d >= lower - 1e-9 && d <= upper + 1e-9
            }
            ResolvedBounds::Admissible { doses, .. } => {
                doses.iter().any(|&x| (x - d).abs() <= 1e-9)
            }
        }
    }
}

/// A fully resolved restricted design problem.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub criterion: Criterion,
    pub restriction: Restriction,
    pub space: DoseSpace,
    pub theta: ThetaParams,
    pub gamma: f64,
    pub mined_def: MinEdDefinition,
    pub bounds: ResolvedBounds,
    pub targets: TargetDoses,
    /// Discrete targets when the space is a grid.
    pub discrete_targets: Option<DiscreteTargets>,
    /// OBD gradient, present for c-criterion problems.
    pub c: Option<CVector>,
}

/// Resolves the restriction against the dose space and binds criterion,
/// space, and parameters into a solvable problem.
pub fn build_problem(
    criterion: Criterion,
    restriction: Restriction,
    space: DoseSpace,
    theta: ThetaParams,
    gamma: f64,
    mined_def: MinEdDefinition,
) -> Result<DesignProblem, Error> {
    theta.validate()?;
    let targets = theta.targets(gamma, mined_def)?;
    let (bounds, discrete_targets) = match &space {
        DoseSpace::Interval { lower, upper } => {
            let hi = upper.min(targets.mtd);
            let lo = match restriction {
                Restriction::MtdCap => *lower,
                Restriction::TherapeuticWindow => lower.max(targets.mined),
            };
            if !(lo < hi) {
                return Err(Error::EmptyWindow(format!(
                    "restriction resolves to [{lo:.4}, {hi:.4}] on [{lower}, {upper}] \
                     (MinED {:.4}, MTD {:.4})",
                    targets.mined, targets.mtd
                )));
            }
            (ResolvedBounds::Interval { lower: lo, upper: hi }, None)
        }
        DoseSpace::Grid(grid) => {
            let dt = theta.discrete_targets(grid, gamma, mined_def)?;
            let range = match restriction {
                Restriction::MtdCap => 0..=dt.mtd,
                Restriction::TherapeuticWindow => dt.mined.min(dt.mtd)..=dt.mtd,
            };
            if matches!(restriction, Restriction::TherapeuticWindow) && dt.mined > dt.mtd {
                return Err(Error::EmptyWindow(format!(
                    "discrete window is empty: MinED' index {} above MTD' index {}",
                    dt.mined, dt.mtd
                )));
            }
            let indices: Vec<usize> = range.collect();
            if indices.len() < 2 {
                return Err(Error::EmptyWindow(format!(
                    "only {} admissible grid dose(s); the information matrix cannot be \
                     nonsingular",
                    indices.len()
                )));
            }
            let doses = indices.iter().map(|&i| grid[i]).collect();
            (ResolvedBounds::Admissible { doses, indices }, Some(dt))
        }
    };
    let c = match criterion {
        Criterion::D => None,
        Criterion::C => Some(c_vector(&theta)?),
    };
    Ok(DesignProblem {
        criterion,
        restriction,
        space,
        theta,
        gamma,
        mined_def,
        bounds,
        targets,
        discrete_targets,
        c,
    })
}

impl DesignProblem {
    /// Objective value of a design under this problem's criterion; `+inf`
    /// for singular designs.
    pub fn criterion_value(&self, design: &DesignMeasure) -> f64 {
        match self.criterion {
            Criterion::D => d_criterion(design, &self.theta),
            Criterion::C => {
                c_criterion(design, &self.theta, self.c.as_ref().expect("c problems carry c"))
            }
        }
    }

    /// Particle encoding implied by the resolved bounds.
    pub fn encoding(&self) -> Encoding {
        match &self.bounds {
            ResolvedBounds::Interval { lower, upper } => Encoding::Continuous {
                n_points: CONTINUOUS_SUPPORT_POINTS,
                lower: *lower,
                upper: *upper,
            },
            ResolvedBounds::Admissible { doses, .. } => {
                Encoding::DiscreteWeights { doses: doses.clone() }
            }
        }
    }

    /// Solves the problem: global swarm search followed by the local polish.
    /// Every support point of the returned design lies inside the resolved
    /// bounds.
    pub fn solve(&self, cfg: &PsoConfig) -> Result<PsoResult, Error> {
        let encoding = self.encoding();
        let mut result = optimize(|xi| self.criterion_value(xi), &encoding, cfg)?;
        let (design, value) = self.polish(&result.best_design);
        if value <= result.best_value {
            result.best_design = design;
            result.best_value = value;
        }
        for &p in result.best_design.points() {
            if !self.bounds.contains(p) {
                return Err(Error::InvalidDesign(format!(
                    "solver produced support point {p} outside the resolved bounds"
                )));
            }
        }
        Ok(result)
    }

    /// Deterministic local refinement of a candidate design.
    ///
    /// Alternates optimal-weight updates on the current support with
    /// coordinate-wise support moves (continuous spaces only), merging and
    /// dropping negligible atoms, and finally augments the support where the
    /// sensitivity function still pokes above zero. Returns the refined
    /// design with its criterion value.
    pub fn polish(&self, design: &DesignMeasure) -> (DesignMeasure, f64) {
        let start_value = self.criterion_value(design);
        if !start_value.is_finite() {
            return (design.clone(), start_value);
        }
        let mut current = match &self.bounds {
            // Spread the start over the whole admissible set so that doses
            // dropped by the decode cleanup can re-enter if they carry
            // optimal weight.
            ResolvedBounds::Admissible { doses, .. } => {
                let floor = 1e-8;
                let weights: Vec<f64> = doses
                    .iter()
                    .map(|&x| {
                        design
                            .iter()
                            .find(|&(p, _)| (p - x).abs() <= 1e-9)
                            .map_or(floor, |(_, w)| w.max(floor))
                    })
                    .collect();
                let total: f64 = weights.iter().sum();
                DesignMeasure::new(doses.clone(), weights.iter().map(|w| w / total).collect())
                    .expect("admissible support is a valid design")
            }
            ResolvedBounds::Interval { .. } => design.clone(),
        };

        let merge_tol = match self.bounds {
            ResolvedBounds::Interval { .. } => MERGE_TOL,
            ResolvedBounds::Admissible { .. } => 0.0,
        };
        for _round in 0..12 {
            current = self.reweight(&current);
            current = current.cleaned(merge_tol, WEIGHT_DROP_TOL);
            current = self.reweight(&current);
            if let ResolvedBounds::Interval { lower, upper } = self.bounds {
                let before = self.criterion_value(&current);
                current = self.move_points(&current, lower, upper);
                current = current.cleaned(MERGE_TOL, WEIGHT_DROP_TOL);
                current = self.reweight(&current);
                let after = self.criterion_value(&current);
                if !(before - after > 1e-13 * (1.0 + before.abs())) {
                    if !self.augment(&mut current) {
                        break;
                    }
                } else {
                    continue;
                }
            } else {
                // Weight optimization over a fixed grid is convex; one
                // reweight pass after cleanup settles it.
                break;
            }
        }

        current = self.reduce_support(current);

        let value = self.criterion_value(&current);
        if value <= start_value {
            (current, value)
        } else {
            (design.clone(), start_value)
        }
    }

    /// Drops atoms whose removal (followed by reweighting) leaves the
    /// criterion value unchanged, preferring the minimal-support
    /// representation among equally optimal designs.
    fn reduce_support(&self, mut design: DesignMeasure) -> DesignMeasure {
        loop {
            let value = self.criterion_value(&design);
            if !value.is_finite() || design.len() <= 2 {
                return design;
            }
            let mut order: Vec<usize> = (0..design.len()).collect();
            order.sort_by(|&a, &b| design.weights()[a].total_cmp(&design.weights()[b]));
            let mut removed = false;
            for idx in order {
                let points: Vec<f64> = design
                    .points()
                    .iter()
                    .enumerate()
                    .filter_map(|(i, &p)| (i != idx).then_some(p))
                    .collect();
                let weights: Vec<f64> = design
                    .weights()
                    .iter()
                    .enumerate()
                    .filter_map(|(i, &w)| (i != idx).then_some(w))
                    .collect();
                let total: f64 = weights.iter().sum();
                if total <= 0.0 {
                    continue;
                }
                let candidate = DesignMeasure::new(
                    points,
                    weights.iter().map(|w| w / total).collect(),
                )
                .expect("reduced design is valid");
                let candidate = self.reweight(&candidate);
                if self.criterion_value(&candidate) <= value + 1e-9 * (1.0 + value.abs()) {
                    design = candidate;
                    removed = true;
                    break;
                }
            }
            if !removed {
                return design;
            }
        }
    }

    /// Multiplicative weight optimization on a fixed support.
    fn reweight(&self, design: &DesignMeasure) -> DesignMeasure {
        let points = design.points().to_vec();
        let mut weights = design.weights().to_vec();
        if points.len() < 2 {
            return design.clone();
        }
        let mut last = f64::INFINITY;
        let mut flat = 0;
        for _ in 0..4000 {
            let xi = DesignMeasure::new(points.clone(), weights.clone())
                .expect("reweight keeps a valid design");
            let value = self.criterion_value(&xi);
            if !value.is_finite() {
                return design.clone();
            }
            let ratios: Option<Vec<f64>> = match self.criterion {
                Criterion::D => DSens::new(&xi, &self.theta)
                    .map(|s| points.iter().map(|&p| s.trace_ratio(p)).collect()),
                Criterion::C => {
                    CSens::new(&xi, &self.theta, self.c.as_ref().expect("c problems carry c"))
                        .map(|s| points.iter().map(|&p| s.ratio(p).max(0.0).sqrt()).collect())
                }
            };
            let Some(ratios) = ratios else { return design.clone() };
            for (w, r) in weights.iter_mut().zip(&ratios) {
                *w *= r;
            }
            let total: f64 = weights.iter().sum();
            if !(total.is_finite() && total > 0.0) {
                return design.clone();
            }
            for w in &mut weights {
                *w /= total;
            }
            if last - value <= 1e-15 * (1.0 + value.abs()) {
                flat += 1;
                if flat >= 8 {
                    break;
                }
            } else {
                flat = 0;
            }
            last = value;
        }
        DesignMeasure::new(points, weights).expect("reweight keeps a valid design")
    }

    /// One sweep of coordinate-wise support-point moves.
    fn move_points(&self, design: &DesignMeasure, lower: f64, upper: f64) -> DesignMeasure {
        let mut points = design.points().to_vec();
        let weights = design.weights().to_vec();
        for i in 0..points.len() {
            let objective = |x: f64| {
                let mut pts = points.clone();
                pts[i] = x;
                DesignMeasure::new(pts, weights.clone())
                    .map_or(f64::INFINITY, |xi| self.criterion_value(&xi))
            };
            points[i] = local_min_1d(objective, points[i], lower, upper, 1e-10);
        }
        DesignMeasure::new(points, weights).expect("moved points stay a valid design")
    }

    /// Adds the sensitivity argmax as a new support atom when the
    /// equivalence-theorem condition is still violated. Returns whether the
    /// support changed.
    fn augment(&self, design: &mut DesignMeasure) -> bool {
        let ResolvedBounds::Interval { lower, upper } = self.bounds else {
            return false;
        };
        let samples = 2001;
        let phi = |d: f64| -> Option<f64> {
            match self.criterion {
                Criterion::D => DSens::new(design, &self.theta).map(|s| s.phi(d)),
                Criterion::C => {
                    CSens::new(design, &self.theta, self.c.as_ref().expect("c problems carry c"))
                        .map(|s| s.phi(d))
                }
            }
        };
        let mut best: Option<(f64, f64)> = None;
        for k in 0..samples {
            let d = lower + (upper - lower) * k as f64 / (samples - 1) as f64;
            let Some(v) = phi(d) else { return false };
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((d, v));
            }
        }
        let Some((at, violation)) = best else { return false };
        if violation <= 2.5e-4 {
            return false;
        }
        let alpha = 0.05;
        let mut points = design.points().to_vec();
        let mut weights: Vec<f64> = design.weights().iter().map(|w| w * (1.0 - alpha)).collect();
        points.push(at);
        weights.push(alpha);
        *design = DesignMeasure::new(points, weights).expect("augmented design is valid");
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{standard_grid, Scenario};

    const GAMMA: f64 = 0.2;
    const NEUTRAL: MinEdDefinition = MinEdDefinition::NeutralProbability(0.2);

    fn interval() -> DoseSpace {
        DoseSpace::interval(-1.20, 5.77).unwrap()
    }

    fn grid_space() -> DoseSpace {
        DoseSpace::grid(standard_grid()).unwrap()
    }

    #[test]
    fn bounds_scenario_a_mtd_cap() {
        let p = build_problem(
            Criterion::D,
            Restriction::MtdCap,
            interval(),
            Scenario::A.theta(),
            GAMMA,
            NEUTRAL,
        )
        .unwrap();
        let ResolvedBounds::Interval { lower, upper } = p.bounds else { panic!() };
        assert!((lower - (-1.20)).abs() < 1e-12);
        assert!((upper - 4.38).abs() < 0.01);
    }

    #[test]
    fn bounds_scenario_a_window_discrete() {
        let p = build_problem(
            Criterion::D,
            Restriction::TherapeuticWindow,
            grid_space(),
            Scenario::A.theta(),
            GAMMA,
            NEUTRAL,
        )
        .unwrap();
        let ResolvedBounds::Admissible { indices, .. } = &p.bounds else { panic!() };
        assert_eq!(indices, &[2, 3, 4, 5, 6]);
    }

    #[test]
    fn bounds_scenario_c_cap_at_range_top() {
        // The MTD (6.87) exceeds the dose range, so the cap resolves to the
        // range's upper limit.
        let p = build_problem(
            Criterion::D,
            Restriction::MtdCap,
            interval(),
            Scenario::C.theta(),
            GAMMA,
            NEUTRAL,
        )
        .unwrap();
        let ResolvedBounds::Interval { lower, upper } = p.bounds else { panic!() };
        assert_eq!(lower, -1.20);
        assert_eq!(upper, 5.77);
    }

    #[test]
    fn empty_window_reported() {
        // Gamma small enough to push the MTD below the dose range.
        let err = build_problem(
            Criterion::D,
            Restriction::MtdCap,
            interval(),
            Scenario::A.theta(),
            1e-4,
            NEUTRAL,
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyWindow(_)));
    }

    #[test]
    fn c_problems_carry_gradient() {
        let p = build_problem(
            Criterion::C,
            Restriction::MtdCap,
            grid_space(),
            Scenario::B.theta(),
            GAMMA,
            NEUTRAL,
        )
        .unwrap();
        assert!(p.c.is_some());
        assert!(p.discrete_targets.is_some());
    }

    #[test]
    fn two_dose_d_optimal_weights_are_equal() {
        // On a two-dose admissible grid the D-optimal allocation is 1/2, 1/2;
        // brute-force weight scan agrees.
        let p = build_problem(
            Criterion::D,
            Restriction::MtdCap,
            grid_space(),
            Scenario::D.theta(),
            GAMMA,
            NEUTRAL,
        )
        .unwrap();
        let ResolvedBounds::Admissible { doses, .. } = p.bounds.clone() else { panic!() };
        assert_eq!(doses.len(), 2);
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=1000 {
            let w = k as f64 / 1000.0;
            let Ok(xi) = DesignMeasure::new(doses.clone(), vec![w, 1.0 - w]) else { continue };
            let v = p.criterion_value(&xi);
            if v < best.0 {
                best = (v, w);
            }
        }
        assert!((best.1 - 0.5).abs() < 1e-9);

        let cfg = PsoConfig { restarts: 2, max_iters: 600, ..PsoConfig::default() };
        let solved = p.solve(&cfg).unwrap();
        assert_eq!(solved.best_design.len(), 2);
        for &w in solved.best_design.weights() {
            assert!((w - 0.5).abs() < 1e-6, "weight {w}");
        }
    }

    #[test]
    fn scaling_c_leaves_the_solution_unchanged() {
        // Doubling c scales the objective by exactly 4 and leaves the swarm
        // trajectory (same seed) and the solved design bitwise unchanged.
        use crate::information::{c_criterion, c_vector, CVector};
        use crate::pso::optimize;
        let theta = Scenario::A.theta();
        let p = build_problem(
            Criterion::C,
            Restriction::MtdCap,
            grid_space(),
            theta,
            GAMMA,
            NEUTRAL,
        )
        .unwrap();
        let c = c_vector(&theta).unwrap();
        let c2 = CVector([2.0 * c.0[0], 2.0 * c.0[1], 2.0 * c.0[2], 2.0 * c.0[3]]);
        let cfg = PsoConfig { restarts: 1, max_iters: 300, ..PsoConfig::default() };
        let a = optimize(|xi| c_criterion(xi, &theta, &c), &p.encoding(), &cfg).unwrap();
        let b = optimize(|xi| c_criterion(xi, &theta, &c2), &p.encoding(), &cfg).unwrap();
        assert_eq!(a.best_design, b.best_design);
        assert_eq!((4.0 * a.best_value).to_bits(), b.best_value.to_bits());
    }

    #[test]
    fn discrete_solutions_stay_admissible() {
        let p = build_problem(
            Criterion::C,
            Restriction::TherapeuticWindow,
            grid_space(),
            Scenario::A.theta(),
            GAMMA,
            NEUTRAL,
        )
        .unwrap();
        let cfg = PsoConfig { restarts: 2, max_iters: 400, ..PsoConfig::default() };
        let solved = p.solve(&cfg).unwrap();
        for &pt in solved.best_design.points() {
            assert!(p.bounds.contains(pt));
        }
    }
}
