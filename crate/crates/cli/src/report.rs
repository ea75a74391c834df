//! Batch execution and report emission.
//!
//! A run solves the requested problems (reference problems first so that
//! efficiencies are well defined), verifies each solution against the
//! equivalence theorem, attaches the random-walk-rule comparison, and
//! serializes everything to JSON and/or CSV. Reports are byte-stable for a
//! fixed seed except for the timestamp field.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

use lord_core::evaluation::{
    efficiencies, rwr_stationary, sensitivity, success_proportion, EfficiencyReport,
    GET_TOLERANCE,
};
use lord_core::information::c_vector;
use lord_core::problems::{build_problem, DesignProblem, ResolvedBounds};
use lord_core::{CVector, DesignMeasure, DoseSpace};

use crate::config::{
    CriterionConfig, MinedConfig, OutputFormat, ProblemConfig, ResolvedRun, RestrictionConfig,
    SpaceKind,
};

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    pub timestamp_unix: u64,
    pub seed: u64,
    pub config_hash: String,
    pub scenario: Option<String>,
    pub theta: [f64; 4],
    pub gamma: f64,
    pub mined: MinedConfig,
    pub grid: Vec<f64>,
    pub interval: [f64; 2],
    pub targets: TargetsBlock,
    /// Populated when a reference problem could not be solved; efficiencies
    /// are omitted in that case.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub reference_notes: Vec<String>,
    pub problems: Vec<ProblemReport>,
    pub rwr: Option<RwrBlock>,
    /// Whether every solved problem passed equivalence verification.
    pub all_verified: bool,
}

#[derive(Debug, Serialize)]
pub struct TargetsBlock {
    pub mined: f64,
    pub obd: f64,
    pub mtd: f64,
    pub window_empty: bool,
    /// Targets may legitimately fall outside the studied dose range.
    pub in_range: [bool; 3],
    pub discrete_indices: DiscreteBlock,
}

#[derive(Debug, Serialize)]
pub struct DiscreteBlock {
    pub mined: usize,
    pub obd: usize,
    pub mtd: usize,
    pub mined_dose: f64,
    pub obd_dose: f64,
    pub mtd_dose: f64,
}

#[derive(Debug, Serialize)]
pub struct ProblemReport {
    pub label: String,
    pub criterion: CriterionConfig,
    pub restriction: RestrictionConfig,
    pub space: SpaceKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<Vec<Atom>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<EfficiencyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverBlock>,
}

#[derive(Debug, Serialize)]
pub struct BoundsBlock {
    pub kind: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub admissible_doses: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Atom {
    pub dose: f64,
    pub weight: f64,
}

#[derive(Debug, Serialize)]
pub struct VerificationBlock {
    pub max_violation: f64,
    pub worst_support_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// `(dose, phi)` samples of the sensitivity curve, doses increasing.
    pub sensitivity: Vec<(f64, f64)>,
}

#[derive(Debug, Serialize)]
pub struct SolverBlock {
    pub seed: u64,
    pub restarts: usize,
    pub iterations_run: usize,
    pub winning_restart: usize,
}

#[derive(Debug, Serialize)]
pub struct RwrBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<Vec<Atom>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<EfficiencyReport>,
}

fn atoms(design: &DesignMeasure) -> Vec<Atom> {
    design.iter().map(|(dose, weight)| Atom { dose, weight }).collect()
}

/// FNV-1a hash of the canonical configuration serialization.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

struct ProblemKey(CriterionConfig, RestrictionConfig, SpaceKind);

impl ProblemKey {
    fn id(&self) -> u8 {
        let c = matches!(self.0, CriterionConfig::C) as u8;
        let r = matches!(self.1, RestrictionConfig::TherapeuticWindow) as u8;
        let s = matches!(self.2, SpaceKind::Discrete) as u8;
        c << 2 | r << 1 | s
    }
}

/// Executes a resolved run plan.
pub fn run(plan: &ResolvedRun, config_text: &str) -> Result<RunReport> {
    let theta = plan.theta;
    let mined_def = plan.mined.to_definition();
    let targets = theta.targets(plan.gamma, mined_def).map_err(|e| anyhow::anyhow!("{e}"))?;
    let discrete = theta
        .discrete_targets(&plan.grid, plan.gamma, mined_def)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let in_range = |d: f64| d >= plan.interval.0 && d <= plan.interval.1;
    let targets_block = TargetsBlock {
        mined: targets.mined,
        obd: targets.obd,
        mtd: targets.mtd,
        window_empty: targets.therapeutic_window().is_none(),
        in_range: [in_range(targets.mined), in_range(targets.obd), in_range(targets.mtd)],
        discrete_indices: DiscreteBlock {
            mined: discrete.mined + 1,
            obd: discrete.obd + 1,
            mtd: discrete.mtd + 1,
            mined_dose: plan.grid[discrete.mined],
            obd_dose: plan.grid[discrete.obd],
            mtd_dose: plan.grid[discrete.mtd],
        },
    };

    let c_vec = c_vector(&theta).map_err(|e| anyhow::anyhow!("{e}"))?;

    // Solve the reference problems first (MTD-capped D and c problems in the
    // configured reference spaces), then every requested problem, caching by
    // problem identity.
    let ref_d_cfg = ProblemConfig {
        criterion: CriterionConfig::D,
        restriction: RestrictionConfig::MtdCap,
        space: plan.references.d,
    };
    let ref_c_cfg = ProblemConfig {
        criterion: CriterionConfig::C,
        restriction: RestrictionConfig::MtdCap,
        space: plan.references.c,
    };
    let mut cache: BTreeMap<u8, (DesignProblem, DesignMeasure, f64, SolverBlock)> =
        BTreeMap::new();
    let mut solve_cached = |pc: &ProblemConfig| -> Result<(DesignMeasure, f64, SolverBlock)> {
        let key = ProblemKey(pc.criterion, pc.restriction, pc.space).id();
        if let Some((_, design, value, solver)) = cache.get(&key) {
            return Ok((
                design.clone(),
                *value,
                SolverBlock {
                    seed: solver.seed,
                    restarts: solver.restarts,
                    iterations_run: solver.iterations_run,
                    winning_restart: solver.winning_restart,
                },
            ));
        }
        let problem = build(plan, pc)?;
        let result = problem.solve(&plan.pso).map_err(|e| anyhow::anyhow!("{e}"))?;
        let solver = SolverBlock {
            seed: plan.pso.seed,
            restarts: plan.pso.restarts,
            iterations_run: result.iterations_run,
            winning_restart: result.restart_index,
        };
        cache.insert(
            key,
            (
                problem,
                result.best_design.clone(),
                result.best_value,
                SolverBlock {
                    seed: solver.seed,
                    restarts: solver.restarts,
                    iterations_run: solver.iterations_run,
                    winning_restart: solver.winning_restart,
                },
            ),
        );
        Ok((result.best_design, result.best_value, solver))
    };

    let mut reference_notes = Vec::new();
    let ref_d_design = match solve_cached(&ref_d_cfg) {
        Ok((design, _, _)) => Some(design),
        Err(e) => {
            reference_notes.push(format!("D reference problem unavailable: {e:#}"));
            None
        }
    };
    let ref_c_design = match solve_cached(&ref_c_cfg) {
        Ok((design, _, _)) => Some(design),
        Err(e) => {
            reference_notes.push(format!("c reference problem unavailable: {e:#}"));
            None
        }
    };
    let refs = ref_d_design.as_ref().zip(ref_c_design.as_ref());

    let mut problems = Vec::new();
    let mut all_verified = true;
    for pc in &plan.problems {
        let mut report = ProblemReport {
            label: pc.label(),
            criterion: pc.criterion,
            restriction: pc.restriction,
            space: pc.space,
            error: None,
            bounds: None,
            design: None,
            criterion_value: None,
            verification: None,
            efficiency: None,
            solver: None,
        };
        match solve_one(plan, pc, &mut solve_cached, &theta, &c_vec, refs) {
            Ok((bounds, design, value, verification, efficiency, solver)) => {
                all_verified &= verification.pass;
                report.bounds = Some(bounds);
                report.design = Some(atoms(&design));
                report.criterion_value = Some(value);
                report.verification = Some(verification);
                report.efficiency = efficiency;
                report.solver = Some(solver);
            }
            Err(e) => {
                // Degenerate problems are reported without aborting the batch.
                report.error = Some(format!("{e:#}"));
            }
        }
        problems.push(report);
    }

    let rwr = Some(match rwr_stationary(&theta, &plan.grid, plan.gamma) {
        Ok(design) => {
            let efficiency = match refs {
                Some((rd, rc)) => Some(
                    efficiencies(&design, &theta, rd, rc, &c_vec, &plan.grid)
                        .map_err(|e| anyhow::anyhow!("{e}"))?,
                ),
                None => None,
            };
            RwrBlock { error: None, design: Some(atoms(&design)), efficiency }
        }
        Err(e) => RwrBlock { error: Some(e.to_string()), design: None, efficiency: None },
    });

    Ok(RunReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        seed: plan.pso.seed,
        config_hash: config_hash(config_text),
        scenario: plan.scenario.map(|s| s.to_string()),
        theta: theta.as_array(),
        gamma: plan.gamma,
        mined: plan.mined,
        grid: plan.grid.clone(),
        interval: [plan.interval.0, plan.interval.1],
        targets: targets_block,
        reference_notes,
        problems,
        rwr,
        all_verified,
    })
}

fn build(plan: &ResolvedRun, pc: &ProblemConfig) -> Result<DesignProblem> {
    let space = match pc.space {
        SpaceKind::Continuous => DoseSpace::interval(plan.interval.0, plan.interval.1),
        SpaceKind::Discrete => DoseSpace::grid(plan.grid.clone()),
    }
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    build_problem(
        pc.criterion.into(),
        pc.restriction.into(),
        space,
        plan.theta,
        plan.gamma,
        plan.mined.to_definition(),
    )
    .map_err(|e| anyhow::anyhow!("{e}"))
}

type Solved =
    (BoundsBlock, DesignMeasure, f64, VerificationBlock, Option<EfficiencyReport>, SolverBlock);

fn solve_one(
    plan: &ResolvedRun,
    pc: &ProblemConfig,
    solve_cached: &mut impl FnMut(&ProblemConfig) -> Result<(DesignMeasure, f64, SolverBlock)>,
    theta: &lord_core::ThetaParams,
    c_vec: &CVector,
    refs: Option<(&DesignMeasure, &DesignMeasure)>,
) -> Result<Solved> {
    let problem = build(plan, pc)?;
    let (design, value, solver) = solve_cached(pc)?;
    let curve = sensitivity(&problem, &design).map_err(|e| anyhow::anyhow!("{e}"))?;
    let worst_support_residual =
        curve.support_residuals.iter().map(|(_, r)| r.abs()).fold(0.0_f64, f64::max);
    let verification = VerificationBlock {
        max_violation: curve.max_violation,
        worst_support_residual,
        tolerance: GET_TOLERANCE,
        pass: curve.passes(GET_TOLERANCE),
        sensitivity: curve.samples,
    };
    let efficiency = match refs {
        Some((ref_d, ref_c)) => Some(
            efficiencies(&design, theta, ref_d, ref_c, c_vec, &plan.grid)
                .map_err(|e| anyhow::anyhow!("{e}"))?,
        ),
        None => None,
    };
    let bounds = match &problem.bounds {
        ResolvedBounds::Interval { lower, upper } => BoundsBlock {
            kind: "interval".into(),
            lower: *lower,
            upper: *upper,
            admissible_doses: Vec::new(),
        },
        ResolvedBounds::Admissible { doses, .. } => BoundsBlock {
            kind: "admissible-doses".into(),
            lower: doses[0],
            upper: *doses.last().unwrap(),
            admissible_doses: doses.clone(),
        },
    };
    Ok((bounds, design, value, verification, efficiency, solver))
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Writes the report in the requested formats; returns the written paths.
pub fn export(report: &RunReport, dir: &Path, formats: &[OutputFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            OutputFormat::Json => {
                let path = dir.join("report.json");
                let json = serde_json::to_string_pretty(report)?;
                fs::write(&path, json.as_bytes())
                    .with_context(|| format!("writing {}", path.display()))?;
                written.push(path);
            }
            OutputFormat::Csv => {
                written.extend(export_csv(report, dir)?);
            }
        }
    }
    Ok(written)
}

fn export_csv(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut write = |name: &str, header: &str, rows: &[String]| -> Result<()> {
        let path = dir.join(name);
        let mut text = String::from(header);
        text.push('\n');
        for row in rows {
            text.push_str(row);
            text.push('\n');
        }
        fs::write(&path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        Ok(())
    };

    let mut design_rows = Vec::new();
    let mut eff_rows = Vec::new();
    let mut radar_rows = Vec::new();
    for p in &report.problems {
        if let Some(design) = &p.design {
            for atom in design {
                design_rows.push(format!("{},{:.6},{:.6}", p.label, atom.dose, atom.weight));
            }
        }
        if let Some(e) = &p.efficiency {
            eff_rows.push(format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                p.label, e.d_eff, e.c_eff, e.delta, e.s, e.score
            ));
            radar_rows.push(format!(
                "{},{:.2},{:.2},{:.2}",
                p.label, e.d_eff, e.c_eff, e.s
            ));
        }
    }
    if let Some(rwr) = &report.rwr {
        if let Some(design) = &rwr.design {
            for atom in design {
                design_rows.push(format!("RWR,{:.6},{:.6}", atom.dose, atom.weight));
            }
        }
        if let Some(e) = &rwr.efficiency {
            eff_rows.push(format!(
                "RWR,{:.6},{:.6},{:.6},{:.6},{:.6}",
                e.d_eff, e.c_eff, e.delta, e.s, e.score
            ));
            radar_rows.push(format!("RWR,{:.2},{:.2},{:.2}", e.d_eff, e.c_eff, e.s));
        }
    }
    write("designs.csv", "design,dose,weight", &design_rows)?;
    write("efficiencies.csv", "design,d_eff,c_eff,delta,s,score", &eff_rows)?;
    write("radar.csv", "design,d_eff,c_eff,s", &radar_rows)?;

    for p in &report.problems {
        if let Some(v) = &p.verification {
            let rows: Vec<String> =
                v.sensitivity.iter().map(|(d, phi)| format!("{d:.6},{phi:.9e}")).collect();
            let name = format!("sensitivity_{}.csv", p.label.replace('\'', "p"));
            write(&name, "dose,phi", &rows)?;
        }
    }
    Ok(written)
}

/// Compact design formatting for terminal output.
pub fn format_design(design: &[Atom]) -> String {
    design
        .iter()
        .map(|a| format!("{:.3}:{:.3}", a.dose, a.weight))
        .collect::<Vec<_>>()
        .join(", ")
}

/// One-problem terminal summary.
pub fn print_problem(p: &ProblemReport) {
    match (&p.error, &p.design, &p.verification) {
        (Some(err), ..) => println!("problem {:<4} ERROR: {err}", p.label),
        (None, Some(design), Some(v)) => {
            let eff = match &p.efficiency {
                Some(e) => format!(
                    "  d_eff {:.3} c_eff {:.3} s {:.3} score {:.3}",
                    e.d_eff, e.c_eff, e.s, e.score
                ),
                None => String::new(),
            };
            println!(
                "problem {:<4} [{}] design {{{}}}  max_phi {:.2e}{eff}",
                p.label,
                if v.pass { "verified" } else { "VIOLATED" },
                format_design(design),
                v.max_violation,
            );
        }
        _ => println!("problem {:<4} (incomplete)", p.label),
    }
}

/// Verifies a user-supplied design against a problem's criterion; used by
/// the `verify` subcommand.
pub fn verify_design(
    plan: &ResolvedRun,
    pc: &ProblemConfig,
    design: &DesignMeasure,
) -> Result<(VerificationBlock, f64, f64)> {
    let problem = build(plan, pc)?;
    for &p in design.points() {
        if !problem.bounds.contains(p) {
            anyhow::bail!("support point {p} lies outside the problem's resolved bounds");
        }
    }
    let curve = sensitivity(&problem, design).map_err(|e| anyhow::anyhow!("{e}"))?;
    let worst_support_residual =
        curve.support_residuals.iter().map(|(_, r)| r.abs()).fold(0.0_f64, f64::max);
    let value = problem.criterion_value(design);
    let s = success_proportion(design, &plan.theta, &plan.grid)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok((
        VerificationBlock {
            max_violation: curve.max_violation,
            worst_support_residual,
            tolerance: GET_TOLERANCE,
            pass: curve.passes(GET_TOLERANCE),
            sensitivity: curve.samples,
        },
        value,
        s,
    ))
}
