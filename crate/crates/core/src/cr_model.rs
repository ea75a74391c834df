//! The four-parameter continuation-ratio dose-response model and its target
//! doses.
//!
//! Doses are handled on the log scale throughout. The model factors a
//! trinomial outcome (neutral / success / toxicity) into two logistics: the
//! conditional probability of efficacy given no toxicity,
//! `sigma(theta1 + theta2 * d)`, and the probability of toxicity,
//! `sigma(theta3 + theta4 * d)`.

use serde::{Deserialize, Serialize};

use crate::numeric::{brent_root, logistic, logit};
use crate::Error;

/// Function-value tolerance for the scalar root finders.
const ROOT_F_TOL: f64 = 1e-12;
/// Initial root-finding bracket on the log-dose axis.
const ROOT_BRACKET: (f64, f64) = (-50.0, 50.0);

/// Model parameters `(theta1, theta2, theta3, theta4)` with the sign
/// restrictions `theta1 >= theta3`, `theta3 < 0`, `theta2 > 0`, `theta4 > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    /// Conditional-efficacy intercept.
    pub theta1: f64,
    /// Conditional-efficacy slope per unit log-dose.
    pub theta2: f64,
    /// Toxicity intercept.
    pub theta3: f64,
    /// Toxicity slope per unit log-dose.
    pub theta4: f64,
}

/// Outcome probabilities at a dose: `neutral + success + toxicity = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutcomeProbs {
    /// No efficacy and no toxicity.
    pub neutral: f64,
    /// Efficacy without toxicity.
    pub success: f64,
    /// Toxicity.
    pub toxicity: f64,
}

impl OutcomeProbs {
    pub fn as_array(&self) -> [f64; 3] {
        [self.neutral, self.success, self.toxicity]
    }
}

/// How the minimum efficacious dose is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MinEdDefinition {
    /// Dose at which the neutral-outcome probability equals the threshold.
    NeutralProbability(f64),
    /// Dose at which the conditional probability of efficacy given no
    /// toxicity equals the level.
    ConditionalEfficacy(f64),
}

impl MinEdDefinition {
    pub fn validate(&self) -> Result<(), Error> {
        let (name, v) = match self {
            MinEdDefinition::NeutralProbability(v) => ("delta", *v),
            MinEdDefinition::ConditionalEfficacy(v) => ("efficacy level", *v),
        };
        if !(v.is_finite() && v > 0.0 && v < 1.0) {
            return Err(Error::InvalidProbability { name, value: v });
        }
        Ok(())
    }
}

/// Continuous target doses for a parameter vector. The therapeutic window
/// `[mined, mtd]` may be empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetDoses {
    pub mined: f64,
    pub obd: f64,
    pub mtd: f64,
}

impl TargetDoses {
    /// `[mined, mtd]` when non-empty.
    pub fn therapeutic_window(&self) -> Option<(f64, f64)> {
        (self.mined <= self.mtd).then_some((self.mined, self.mtd))
    }
}

/// Discrete target doses as zero-based grid indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DiscreteTargets {
    pub mined: usize,
    pub obd: usize,
    pub mtd: usize,
}

/// Dose design space: a continuous log-dose interval or an ordered grid of
/// log-doses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DoseSpace {
    Interval { lower: f64, upper: f64 },
    Grid(Vec<f64>),
}

impl DoseSpace {
    pub fn interval(lower: f64, upper: f64) -> Result<Self, Error> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidDoseSpace("interval bounds must be finite".into()));
        }
        if lower >= upper {
            return Err(Error::InvalidDoseSpace(format!(
                "interval requires lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(DoseSpace::Interval { lower, upper })
    }

    pub fn grid(doses: Vec<f64>) -> Result<Self, Error> {
        if doses.len() < 2 {
            return Err(Error::InvalidDoseSpace("grid needs at least two doses".into()));
        }
        if doses.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidDoseSpace("grid doses must be finite".into()));
        }
        if doses.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDoseSpace("grid doses must be strictly increasing".into()));
        }
        Ok(DoseSpace::Grid(doses))
    }

    /// Lower and upper limits of the space.
    pub fn limits(&self) -> (f64, f64) {
        match self {
            DoseSpace::Interval { lower, upper } => (*lower, *upper),
            DoseSpace::Grid(doses) => (doses[0], *doses.last().unwrap()),
        }
    }
}

impl ThetaParams {
    pub fn new(theta1: f64, theta2: f64, theta3: f64, theta4: f64) -> Result<Self, Error> {
        let t = ThetaParams { theta1, theta2, theta3, theta4 };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let vals = [self.theta1, self.theta2, self.theta3, self.theta4];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTheta("parameters must be finite".into()));
        }
        if self.theta1 < self.theta3 {
            return Err(Error::InvalidTheta(format!(
                "theta1 ({}) must be >= theta3 ({})",
                self.theta1, self.theta3
            )));
        }
        if self.theta3 >= 0.0 {
            return Err(Error::InvalidTheta(format!("theta3 ({}) must be negative", self.theta3)));
        }
        if self.theta2 <= 0.0 || self.theta4 <= 0.0 {
            return Err(Error::InvalidTheta(format!(
                "slopes must be positive, got theta2={} theta4={}",
                self.theta2, self.theta4
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.theta1, self.theta2, self.theta3, self.theta4]
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self, Error> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// Conditional probability of efficacy given no toxicity.
    pub fn conditional_efficacy(&self, d: f64) -> f64 {
        logistic(self.theta1 + self.theta2 * d)
    }

    /// Probability of toxicity.
    pub fn toxicity(&self, d: f64) -> f64 {
        logistic(self.theta3 + self.theta4 * d)
    }

    pub(crate) fn probs(&self, d: f64) -> OutcomeProbs {
        let pe = self.conditional_efficacy(d);
        let no_tox = logistic(-(self.theta3 + self.theta4 * d));
        OutcomeProbs {
            neutral: (1.0 - pe) * no_tox,
            success: pe * no_tox,
            toxicity: self.toxicity(d),
        }
    }

    /// Outcome probabilities `(neutral, success, toxicity)` at log-dose `d`.
    pub fn outcome_probabilities(&self, d: f64) -> Result<OutcomeProbs, Error> {
        if !d.is_finite() {
            return Err(Error::NonFinite("dose"));
        }
        Ok(self.probs(d))
    }

    /// Maximum tolerated dose: `(logit(gamma) - theta3) / theta4`, the dose
    /// whose toxicity probability equals `gamma`.
    pub fn mtd(&self, gamma: f64) -> Result<f64, Error> {
        if !(gamma.is_finite() && gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidProbability { name: "gamma", value: gamma });
        }
        Ok((logit(gamma) - self.theta3) / self.theta4)
    }

    /// Stationarity residual of the success probability:
    /// `theta2 * (1 - p_eff(d)) - theta4 * p_tox(d)`, which is proportional
    /// to `d/dd ln pi1(d)`. Strictly decreasing in `d` with a unique root at
    /// the OBD.
    pub(crate) fn obd_residual(&self, d: f64) -> f64 {
        let sa = self.conditional_efficacy(d);
        let sb = self.toxicity(d);
        self.theta2 * (1.0 - sa) - self.theta4 * sb
    }

    /// Optimal biological dose: the unique maximizer of the success
    /// probability `pi1(d)`, found as the root of the stationarity residual.
    pub fn obd(&self) -> Result<f64, Error> {
        brent_root(|d| self.obd_residual(d), ROOT_BRACKET.0, ROOT_BRACKET.1, ROOT_F_TOL)
    }

    /// Minimum efficacious dose under the chosen definition.
    ///
    /// The neutral-probability form solves `pi0(d) = delta` (pi0 is strictly
    /// decreasing); the conditional-efficacy form inverts the efficacy
    /// logistic in closed form.
    pub fn mined(&self, def: MinEdDefinition) -> Result<f64, Error> {
        def.validate()?;
        match def {
            MinEdDefinition::NeutralProbability(delta) => brent_root(
                |d| self.probs(d).neutral - delta,
                ROOT_BRACKET.0,
                ROOT_BRACKET.1,
                ROOT_F_TOL,
            ),
            MinEdDefinition::ConditionalEfficacy(level) => {
                Ok((logit(level) - self.theta1) / self.theta2)
            }
        }
    }

    /// All three continuous target doses.
    pub fn targets(&self, gamma: f64, def: MinEdDefinition) -> Result<TargetDoses, Error> {
        Ok(TargetDoses {
            mined: self.mined(def)?,
            obd: self.obd()?,
            mtd: self.mtd(gamma)?,
        })
    }

    /// Grid index maximizing the success probability; ties break toward the
    /// lower dose.
    pub fn obd_index(&self, grid: &[f64]) -> usize {
        let mut best = 0;
        let mut best_p = f64::NEG_INFINITY;
        for (i, &x) in grid.iter().enumerate() {
            let p = self.probs(x).success;
            if p > best_p {
                best_p = p;
                best = i;
            }
        }
        best
    }

    /// Discrete target doses on a grid: nearest-by-probability analogues of
    /// the continuous targets. Ties break toward the lower dose.
    pub fn discrete_targets(
        &self,
        grid: &[f64],
        gamma: f64,
        def: MinEdDefinition,
    ) -> Result<DiscreteTargets, Error> {
        if grid.len() < 2 {
            return Err(Error::InvalidDoseSpace("grid needs at least two doses".into()));
        }
        if !(gamma.is_finite() && gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidProbability { name: "gamma", value: gamma });
        }
        def.validate()?;
        let argmin_dist = |f: &dyn Fn(f64) -> f64, target: f64| -> usize {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, &x) in grid.iter().enumerate() {
                let dist = (f(x) - target).abs();
                if dist < best_d {
                    best_d = dist;
                    best = i;
                }
            }
            best
        };
        let mtd = argmin_dist(&|x| self.probs(x).toxicity, gamma);
        let mined = match def {
            MinEdDefinition::NeutralProbability(delta) => {
                argmin_dist(&|x| self.probs(x).neutral, delta)
            }
            MinEdDefinition::ConditionalEfficacy(level) => {
                argmin_dist(&|x| self.conditional_efficacy(x), level)
            }
        };
        Ok(DiscreteTargets { mined, obd: self.obd_index(grid), mtd })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{standard_grid, Scenario};

    const GAMMA: f64 = 0.2;
    const NEUTRAL: MinEdDefinition = MinEdDefinition::NeutralProbability(0.2);

    #[test]
    fn invalid_theta_rejected() {
        assert!(ThetaParams::new(0.0, 1.0, 0.5, 1.0).is_err()); // theta3 >= 0
        assert!(ThetaParams::new(-10.0, 1.0, -5.0, 1.0).is_err()); // theta1 < theta3
        assert!(ThetaParams::new(0.0, -1.0, -5.0, 1.0).is_err()); // theta2 <= 0
        assert!(ThetaParams::new(0.0, 1.0, -5.0, f64::NAN).is_err());
    }

    #[test]
    fn probabilities_at_published_points() {
        let a = Scenario::A.theta();
        // At the scenario-A MTD the toxicity probability is 0.20.
        let p = a.outcome_probabilities(4.38).unwrap();
        assert!((p.toxicity - 0.2).abs() < 1e-3);
        // Logistic midpoint of the toxicity curve.
        let mid = -a.theta3 / a.theta4;
        assert!((a.outcome_probabilities(mid).unwrap().toxicity - 0.5).abs() < 1e-12);
        // Scenario C: toxicity at the top of the standard dose range.
        let c = Scenario::C.theta();
        assert!((c.outcome_probabilities(5.77).unwrap().toxicity - 0.0044).abs() < 2e-4);
        // Non-finite dose is a domain error.
        assert!(a.outcome_probabilities(f64::INFINITY).is_err());
    }

    #[test]
    fn obd_matches_brute_force_grid_search() {
        // Scenario A: argmax pi1 over a fine grid lands at 2.75.
        let a = Scenario::A.theta();
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut d = -10.0;
        while d <= 10.0 {
            let p = a.probs(d).success;
            if p > best.0 {
                best = (p, d);
            }
            d += 1e-4;
        }
        assert!((best.1 - 2.75).abs() < 5e-3);
        assert!((a.obd().unwrap() - best.1).abs() < 1e-3);
    }

    #[test]
    fn continuous_targets_all_scenarios() {
        // (mined, obd, mtd) per scenario, to two decimals.
        let expect = [
            (Scenario::A, 0.92, 2.75, 4.38),
            (Scenario::B, -0.22, 2.04, 5.08),
            (Scenario::C, 4.38, 6.03, 6.87),
            (Scenario::D, -1.02, -1.80, 0.11),
        ];
        for (s, mined, obd, mtd) in expect {
            let t = s.theta().targets(GAMMA, NEUTRAL).unwrap();
            assert!((t.mined - mined).abs() < 0.01, "{s:?} mined {}", t.mined);
            assert!((t.obd - obd).abs() < 0.01, "{s:?} obd {}", t.obd);
            assert!((t.mtd - mtd).abs() < 0.01, "{s:?} mtd {}", t.mtd);
        }
    }

    #[test]
    fn mtd_closed_form_residual() {
        for s in [Scenario::A, Scenario::B, Scenario::C, Scenario::D] {
            let th = s.theta();
            let mtd = th.mtd(GAMMA).unwrap();
            assert!((th.probs(mtd).toxicity - GAMMA).abs() < 1e-12);
            // Gamma = 0.5 is the logistic midpoint.
            assert!((th.mtd(0.5).unwrap() + th.theta3 / th.theta4).abs() < 1e-12);
        }
        assert!(Scenario::A.theta().mtd(0.0).is_err());
        assert!(Scenario::A.theta().mtd(1.0).is_err());
    }

    #[test]
    fn mined_definitions() {
        let a = Scenario::A.theta();
        let m = a.mined(NEUTRAL).unwrap();
        assert!((a.probs(m).neutral - 0.2).abs() < 1e-10);
        let m_star = a.mined(MinEdDefinition::ConditionalEfficacy(0.6)).unwrap();
        assert!((m_star - (-0.79)).abs() < 0.01);
        let mid = a.mined(MinEdDefinition::ConditionalEfficacy(0.5)).unwrap();
        assert!((mid + a.theta1 / a.theta2).abs() < 1e-12);
        assert!(a.mined(MinEdDefinition::NeutralProbability(1.5)).is_err());
    }

    #[test]
    fn discrete_targets_standard_grid() {
        let grid = standard_grid();
        // Zero-based indices: (mined, obd, mtd).
        let expect = [
            (Scenario::A, 2, 4, 6),
            (Scenario::B, 1, 3, 7),
            (Scenario::C, 6, 8, 8),
            (Scenario::D, 0, 0, 1),
        ];
        for (s, mined, obd, mtd) in expect {
            let t = s.theta().discrete_targets(&grid, GAMMA, NEUTRAL).unwrap();
            assert_eq!((t.mined, t.obd, t.mtd), (mined, obd, mtd), "{s:?}");
        }
        // Alternative minimum-dose definition moves MinED' down to x1.
        let t = Scenario::A
            .theta()
            .discrete_targets(&grid, GAMMA, MinEdDefinition::ConditionalEfficacy(0.6))
            .unwrap();
        assert_eq!(t.mined, 0);
    }

    #[test]
    fn discrete_targets_ignore_farther_appended_doses() {
        let grid = standard_grid();
        let t0 = Scenario::A.theta().discrete_targets(&grid, GAMMA, NEUTRAL).unwrap();
        let mut extended = grid.to_vec();
        extended.push(40.0); // far beyond every target level
        let t1 = Scenario::A.theta().discrete_targets(&extended, GAMMA, NEUTRAL).unwrap();
        assert_eq!(t0, t1);
    }

    #[test]
    fn monotone_outcome_curves() {
        let th = Scenario::B.theta();
        let mut prev = th.probs(-8.0);
        let mut d = -7.9;
        while d <= 8.0 {
            let p = th.probs(d);
            assert!(p.neutral < prev.neutral);
            assert!(p.toxicity > prev.toxicity);
            prev = p;
            d += 0.1;
        }
    }

    #[test]
    fn dose_space_validation() {
        assert!(DoseSpace::interval(1.0, 1.0).is_err());
        assert!(DoseSpace::grid(vec![1.0]).is_err());
        assert!(DoseSpace::grid(vec![1.0, 1.0]).is_err());
        let g = DoseSpace::grid(vec![-1.0, 0.5, 2.0]).unwrap();
        assert_eq!(g.limits(), (-1.0, 2.0));
    }

    #[test]
    fn window_empty_flag() {
        // Scenario D window [-1.02, 0.11] is non-empty.
        let t = Scenario::D.theta().targets(GAMMA, NEUTRAL).unwrap();
        assert!(t.therapeutic_window().is_some());
        // A tight gamma pushes the MTD below the MinED.
        let t = Scenario::A
            .theta()
            .targets(1e-4, NEUTRAL)
            .unwrap();
        assert!(t.therapeutic_window().is_none());
    }
}
