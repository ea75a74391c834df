//! Particle swarm optimizer with the two design encodings: doses plus
//! weights on a continuous interval, or allocation weights over a fixed
//! dose grid.
//!
//! Weights are carried as raw coordinates and squared-normalized on decode,
//! `rho_i = p_i^2 / sum_j p_j^2`, so every position maps to a valid
//! allocation. Positions are clamped to the search box after every move and
//! the velocity component is zeroed on clamped coordinates.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::information::DesignMeasure;
use crate::Error;

/// Support points closer than this (log-dose units) are merged on decode.
pub const MERGE_TOL: f64 = 0.05;
/// Decoded weights below this are dropped and the rest renormalized.
pub const WEIGHT_DROP_TOL: f64 = 0.01;
/// Default base seed when none is configured.
pub const DEFAULT_SEED: u64 = 1729;
/// Initial number of support points for the continuous encoding (the upper
/// bound 4 * 5 / 2 on the support size of a D-optimal design for a
/// four-parameter model).
pub const CONTINUOUS_SUPPORT_POINTS: usize = 10;

/// Inertia weight schedule
/// `w_j = w_end + (w_start - w_end) * ((N - j) / (N - 1))^relaxation`,
/// decreasing from `w_start` at the first iteration to `w_end` at the last.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertiaSchedule {
    pub w_start: f64,
    pub w_end: f64,
    pub relaxation: f64,
}

impl Default for InertiaSchedule {
    fn default() -> Self {
        InertiaSchedule { w_start: 0.9, w_end: 0.4, relaxation: 1.25 }
    }
}

impl InertiaSchedule {
    /// Weight for 1-based iteration `iter` out of `max_iters`.
    pub fn weight(&self, iter: usize, max_iters: usize) -> f64 {
        if max_iters <= 1 {
            return self.w_end;
        }
        let frac = (max_iters - iter) as f64 / (max_iters - 1) as f64;
        self.w_end + (self.w_start - self.w_end) * frac.powf(self.relaxation)
    }
}

/// Swarm hyperparameters. Defaults follow the standard setup: 50 particles,
/// 1500 iterations, cognitive 2.5, social 0.5, inertia 0.9 -> 0.4 with
/// relaxation 1.25.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub max_iters: usize,
    pub cognitive: f64,
    pub social: f64,
    pub inertia: InertiaSchedule,
    pub seed: u64,
    pub restarts: usize,
    /// Stop after this many consecutive iterations without relative
    /// improvement beyond `rel_tol`.
    pub stall_iters: usize,
    pub rel_tol: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            swarm_size: 50,
            max_iters: 1500,
            cognitive: 2.5,
            social: 0.5,
            inertia: InertiaSchedule::default(),
            seed: DEFAULT_SEED,
            restarts: 10,
            stall_iters: 200,
            rel_tol: 1e-10,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.swarm_size < 2 {
            return Err(Error::InvalidConfig("swarm_size must be at least 2".into()));
        }
        if self.max_iters < 1 || self.restarts < 1 {
            return Err(Error::InvalidConfig("max_iters and restarts must be positive".into()));
        }
        if self.cognitive < 0.0 || self.social < 0.0 {
            return Err(Error::InvalidConfig("cognitive/social coefficients must be >= 0".into()));
        }
        let w = &self.inertia;
        if !(w.w_start >= w.w_end && w.w_end > 0.0 && w.relaxation > 0.0) {
            return Err(Error::InvalidConfig(
                "inertia schedule requires w_start >= w_end > 0 and relaxation > 0".into(),
            ));
        }
        Ok(())
    }

    /// Derived seed for restart `index`, decorrelated by SplitMix64.
    pub fn restart_seed(&self, index: usize) -> u64 {
        splitmix64(self.seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1)))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Particle encoding of a design measure.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoding {
    /// `n_points` free doses in `[lower, upper]` followed by `n_points` raw
    /// weight coordinates.
    Continuous { n_points: usize, lower: f64, upper: f64 },
    /// Raw weight coordinates over a fixed set of doses.
    DiscreteWeights { doses: Vec<f64> },
}

impl Encoding {
    pub fn dims(&self) -> usize {
        match self {
            Encoding::Continuous { n_points, .. } => 2 * n_points,
            Encoding::DiscreteWeights { doses } => doses.len(),
        }
    }

    /// Per-coordinate search box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Encoding::Continuous { n_points, lower, upper } => {
                let mut lo = vec![*lower; *n_points];
                let mut hi = vec![*upper; *n_points];
                lo.extend(std::iter::repeat_n(0.0, *n_points));
                hi.extend(std::iter::repeat_n(1.0, *n_points));
                (lo, hi)
            }
            Encoding::DiscreteWeights { doses } => (vec![0.0; doses.len()], vec![1.0; doses.len()]),
        }
    }

    /// Squared-normalized weights; uniform fallback when all raw weights are
    /// zero.
    fn decode_weights(raw: &[f64]) -> Vec<f64> {
        let total: f64 = raw.iter().map(|p| p * p).sum();
        if total <= 0.0 {
            return vec![1.0 / raw.len() as f64; raw.len()];
        }
        raw.iter().map(|p| p * p / total).collect()
    }

    /// Decodes a position without cleanup; used for fitness evaluation
    /// during the search.
    pub(crate) fn decode_raw(&self, position: &[f64]) -> DesignMeasure {
        match self {
            Encoding::Continuous { n_points, .. } => {
                let n = *n_points;
                let weights = Self::decode_weights(&position[n..2 * n]);
                DesignMeasure::new(position[..n].to_vec(), weights)
                    .expect("decoded position is a valid design")
            }
            Encoding::DiscreteWeights { doses } => {
                let weights = Self::decode_weights(position);
                DesignMeasure::new(doses.clone(), weights)
                    .expect("decoded position is a valid design")
            }
        }
    }

    /// Decodes a position into a cleaned design: squared-normalized weights,
    /// nearby points merged (continuous encoding only; grid doses are kept
    /// in place), negligible weights dropped.
    pub fn decode(&self, position: &[f64]) -> DesignMeasure {
        let merge = match self {
            Encoding::Continuous { .. } => MERGE_TOL,
            Encoding::DiscreteWeights { .. } => 0.0,
        };
        self.decode_raw(position).cleaned(merge, WEIGHT_DROP_TOL)
    }
}

/// Outcome of an optimization run: the best (cleaned) design over all
/// restarts with its objective value and the winning restart's trace.
#[derive(Debug, Clone)]
pub struct PsoResult {
    pub best_design: DesignMeasure,
    pub best_value: f64,
    pub iterations_run: usize,
    /// `(iteration, global best value)` per iteration, entry 0 holding the
    /// initial swarm best.
    pub history: Vec<(usize, f64)>,
    pub restart_index: usize,
}

/// Minimizes `objective` over design measures under the given encoding,
/// returning the best cleaned design across `cfg.restarts` independently
/// seeded swarms.
pub fn optimize<F>(objective: F, encoding: &Encoding, cfg: &PsoConfig) -> Result<PsoResult, Error>
where
    F: Fn(&DesignMeasure) -> f64,
{
    cfg.validate()?;
    if encoding.dims() == 0 {
        return Err(Error::InvalidConfig("encoding has no coordinates".into()));
    }
    let (lo, hi) = encoding.bounds();
    let mut best: Option<PsoResult> = None;
    for restart in 0..cfg.restarts {
        let fitness = |pos: &[f64]| objective(&encoding.decode_raw(pos));
        let run = swarm_search(&fitness, &lo, &hi, cfg, cfg.restart_seed(restart));
        let design = encoding.decode(&run.position);
        let value = objective(&design);
        if best.as_ref().is_none_or(|b| value < b.best_value) {
            best = Some(PsoResult {
                best_design: design,
                best_value: value,
                iterations_run: run.iterations,
                history: run.history,
                restart_index: restart,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

pub(crate) struct SwarmRun {
    pub position: Vec<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub value: f64,
    pub iterations: usize,
    pub history: Vec<(usize, f64)>,
}

/// One synchronous swarm on a raw coordinate box. Random draws happen in a
/// fixed particle order, so a seed pins the whole trajectory.
pub(crate) fn swarm_search<F>(fitness: &F, lo: &[f64], hi: &[f64], cfg: &PsoConfig, seed: u64) -> SwarmRun
where
    F: Fn(&[f64]) -> f64,
{
    let dims = lo.len();
    let s = cfg.swarm_size;
    let mut rng = StdRng::seed_from_u64(seed);

    let mut positions = vec![vec![0.0; dims]; s];
    let mut velocities = vec![vec![0.0; dims]; s];
    for i in 0..s {
        for k in 0..dims {
            positions[i][k] = rng.random_range(lo[k]..=hi[k]);
        }
        for k in 0..dims {
            let half = 0.5 * (hi[k] - lo[k]);
            velocities[i][k] = rng.random_range(-half..=half);
        }
    }

    let mut personal_best = positions.clone();
    let mut personal_value: Vec<f64> = positions.iter().map(|p| fitness(p)).collect();
    let (mut global_best, mut global_value) = {
        let mut idx = 0;
        for i in 1..s {
            if personal_value[i] < personal_value[idx] {
                idx = i;
            }
        }
        (personal_best[idx].clone(), personal_value[idx])
    };

    let mut history = Vec::with_capacity(cfg.max_iters + 1);
    history.push((0, global_value));
    let mut stall = 0usize;
    let mut iterations = 0usize;

    for iter in 1..=cfg.max_iters {
        iterations = iter;
        let w = cfg.inertia.weight(iter, cfg.max_iters);
        for i in 0..s {
            for k in 0..dims {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                velocities[i][k] = w * velocities[i][k]
                    + cfg.cognitive * r1 * (personal_best[i][k] - positions[i][k])
                    + cfg.social * r2 * (global_best[k] - positions[i][k]);
                positions[i][k] += velocities[i][k];
                if positions[i][k] < lo[k] {
                    positions[i][k] = lo[k];
                    velocities[i][k] = 0.0;
                } else if positions[i][k] > hi[k] {
                    positions[i][k] = hi[k];
                    velocities[i][k] = 0.0;
                }
            }
            let value = fitness(&positions[i]);
            if value < personal_value[i] {
                personal_value[i] = value;
                personal_best[i].copy_from_slice(&positions[i]);
            }
        }
        let prev = global_value;
        for i in 0..s {
            if personal_value[i] < global_value {
                global_value = personal_value[i];
                global_best.copy_from_slice(&personal_best[i]);
            }
        }
        history.push((iter, global_value));
        let improved = prev.is_infinite() && global_value.is_finite()
            || prev - global_value > cfg.rel_tol * (1.0 + prev.abs());
        if improved {
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.stall_iters {
                break;
            }
        }
    }

    SwarmRun { position: global_best, value: global_value, iterations, history }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inertia_schedule_endpoints() {
        let w = InertiaSchedule::default();
        assert_eq!(w.weight(1, 1500), 0.9);
        assert_eq!(w.weight(1500, 1500), 0.4);
        assert!(w.weight(750, 1500) < 0.9);
        assert!(w.weight(750, 1500) > 0.4);
    }

    #[test]
    fn sphere_on_box_converges() {
        // Minimum of sum (x_k - 0.3)^2 over [0, 1]^5.
        let cfg = PsoConfig { restarts: 1, ..PsoConfig::default() };
        let run = swarm_search(
            &|p: &[f64]| p.iter().map(|x| (x - 0.3) * (x - 0.3)).sum(),
            &[0.0; 5],
            &[1.0; 5],
            &cfg,
            7,
        );
        assert!(run.value < 1e-8, "best value {}", run.value);
    }

    #[test]
    fn decode_weight_normalization() {
        let enc = Encoding::DiscreteWeights { doses: vec![0.0, 1.0, 2.0, 3.0] };
        let xi = enc.decode(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(xi.weights(), &[0.25, 0.25, 0.25, 0.25]);

        // One live coordinate collapses to a point mass after cleanup.
        let xi = enc.decode(&[2.0, 0.0, 0.0, 0.0]);
        assert_eq!(xi.len(), 1);
        assert_eq!(xi.points(), &[0.0]);
        assert_eq!(xi.weights(), &[1.0]);
    }

    #[test]
    fn decode_uniform_fallback_on_zero_weights() {
        let enc = Encoding::Continuous { n_points: 3, lower: -1.0, upper: 1.0 };
        let xi = enc.decode_raw(&[-1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(xi.weights(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn decode_weights_on_simplex_for_fuzzed_positions() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(11);
        let enc = Encoding::Continuous { n_points: 5, lower: -2.0, upper: 6.0 };
        for _ in 0..2000 {
            let pos: Vec<f64> = (0..10)
                .map(|k| if k < 5 { rng.random_range(-2.0..6.0) } else { rng.random_range(0.0..1.0) })
                .collect();
            for xi in [enc.decode_raw(&pos), enc.decode(&pos)] {
                assert!(xi.weights().iter().all(|&w| w >= 0.0));
                let total: f64 = xi.weights().iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn determinism_and_monotone_history() {
        let enc = Encoding::Continuous { n_points: 4, lower: 0.0, upper: 2.0 };
        let cfg = PsoConfig { max_iters: 300, restarts: 2, ..PsoConfig::default() };
        let objective = |xi: &DesignMeasure| {
            xi.iter().map(|(p, w)| w * (p - 1.3) * (p - 1.3)).sum::<f64>()
        };
        let a = optimize(objective, &enc, &cfg).unwrap();
        let b = optimize(objective, &enc, &cfg).unwrap();
        assert_eq!(a.history.len(), b.history.len());
        for (x, y) in a.history.iter().zip(b.history.iter()) {
            assert_eq!(x.0, y.0);
            assert_eq!(x.1.to_bits(), y.1.to_bits());
        }
        assert!(a.history.windows(2).all(|w| w[1].1 <= w[0].1));
        assert_eq!(a.best_design, b.best_design);
    }

    #[test]
    fn best_value_matches_objective_at_best_design() {
        let enc = Encoding::DiscreteWeights { doses: vec![0.0, 1.0, 2.0] };
        let cfg = PsoConfig { max_iters: 200, restarts: 3, ..PsoConfig::default() };
        let objective =
            |xi: &DesignMeasure| xi.weights().iter().map(|w| (w - 0.4) * (w - 0.4)).sum::<f64>();
        let res = optimize(objective, &enc, &cfg).unwrap();
        assert!((res.best_value - objective(&res.best_design)).abs() <= 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut cfg = PsoConfig { swarm_size: 1, ..PsoConfig::default() };
        assert!(cfg.validate().is_err());
        cfg.swarm_size = 10;
        cfg.inertia.w_end = 0.0;
        assert!(cfg.validate().is_err());
    }
}
