//! `lord` — builds, verifies, and compares locally optimal restricted
//! dose-finding designs under the four-parameter continuation-ratio model.
//!
//! Exit codes: 0 when every requested verification passes, 2 when a solve
//! completed but an equivalence check exceeded tolerance, 1 on
//! configuration or runtime errors.

mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lord_core::evaluation::score;
use lord_core::scenarios::{DEFAULT_DELTA, DEFAULT_GAMMA};
use lord_core::DesignMeasure;

use config::{
    CriterionConfig, MinedConfig, MinedKind, OutputConfig, OutputFormat, ProblemConfig,
    ReferencesConfig, RestrictionConfig, RunConfig, SpaceKind,
};

#[derive(Parser)]
#[command(
    name = "lord",
    version,
    about = "Locally optimal restricted designs for phase I/II dose-finding",
    long_about = "Finds D- and c-optimal dose-allocation designs under ethical restrictions \
                  (MTD cap or therapeutic window) for the continuation-ratio model, verifies \
                  them against the equivalence theorem, and compares them with the random \
                  walk rule."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the target doses (MinED, OBD, MTD) and their grid analogues.
    Targets(TargetsArgs),
    /// Solve one restricted design problem and verify it.
    Solve(SolveArgs),
    /// Run a batch of problems from a configuration file.
    Batch(BatchArgs),
    /// Check a user-supplied design against the equivalence theorem.
    Verify(VerifyArgs),
    /// Compare the four discrete designs and the random walk rule.
    Compare(CompareArgs),
}

/// Model and dose-space selection shared by the subcommands.
#[derive(Args, Clone)]
struct ModelArgs {
    /// Scenario preset (A, B, C, or D).
    #[arg(long, conflicts_with = "theta")]
    scenario: Option<String>,
    /// Explicit parameters theta1,theta2,theta3,theta4.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Option<Vec<f64>>,
    /// Target toxicity level.
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    /// Neutral-outcome threshold defining the minimum efficacious dose.
    #[arg(long, default_value_t = DEFAULT_DELTA, conflicts_with = "efficacy_level")]
    delta: f64,
    /// Define the minimum efficacious dose by conditional efficacy at this
    /// level instead of the neutral-outcome threshold.
    #[arg(long)]
    efficacy_level: Option<f64>,
    /// Dose grid (comma-separated log-doses unless --raw-scale).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    grid: Option<Vec<f64>>,
    /// Continuous interval lower,upper (defaults to the grid range).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    interval: Option<Vec<f64>>,
    /// Doses are given on the raw (mg) scale and are log-transformed.
    #[arg(long)]
    raw_scale: bool,
}

impl ModelArgs {
    fn to_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::parse("")?;
        cfg.scenario = self.scenario.clone();
        cfg.theta = match &self.theta {
            Some(v) if v.len() == 4 => Some([v[0], v[1], v[2], v[3]]),
            Some(v) => bail!("--theta needs exactly 4 comma-separated values, got {}", v.len()),
            None => None,
        };
        cfg.gamma = self.gamma;
        cfg.log_scale = !self.raw_scale;
        cfg.grid = self.grid.clone();
        cfg.interval = match &self.interval {
            Some(v) if v.len() == 2 => Some([v[0], v[1]]),
            Some(v) => bail!("--interval needs exactly 2 comma-separated values, got {}", v.len()),
            None => None,
        };
        cfg.mined = match self.efficacy_level {
            Some(level) => MinedConfig { definition: MinedKind::ConditionalEfficacy, level },
            None => MinedConfig { definition: MinedKind::NeutralProbability, level: self.delta },
        };
        Ok(cfg)
    }
}

#[derive(Args)]
struct TargetsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Optimality criterion: d or c.
    #[arg(long, value_parser = parse_criterion)]
    criterion: CriterionConfig,
    /// Ethical restriction: mtd-cap or therapeutic-window.
    #[arg(long, value_parser = parse_restriction)]
    restriction: RestrictionConfig,
    /// Dose space kind: continuous or discrete.
    #[arg(long, value_parser = parse_space)]
    space: SpaceKind,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Output directory for report artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output formats (json, csv); requires --out.
    #[arg(long, value_delimiter = ',', value_parser = parse_format, requires = "out")]
    formats: Option<Vec<OutputFormat>>,
}

#[derive(Args)]
struct BatchArgs {
    /// Configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_parser = parse_criterion)]
    criterion: CriterionConfig,
    #[arg(long, value_parser = parse_restriction)]
    restriction: RestrictionConfig,
    #[arg(long, value_parser = parse_space)]
    space: SpaceKind,
    /// The design to check, as dose:weight pairs, e.g.
    /// "-1.20:0.28,2.32:0.36,4.38:0.36".
    #[arg(long, allow_hyphen_values = true)]
    design: String,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Output directory for report artifacts (radar.csv and friends).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_criterion(s: &str) -> Result<CriterionConfig, String> {
    match s.to_ascii_lowercase().as_str() {
        "d" => Ok(CriterionConfig::D),
        "c" => Ok(CriterionConfig::C),
        _ => Err(format!("unknown criterion '{s}' (expected d or c)")),
    }
}

fn parse_restriction(s: &str) -> Result<RestrictionConfig, String> {
    match s.to_ascii_lowercase().as_str() {
        "mtd-cap" => Ok(RestrictionConfig::MtdCap),
        "therapeutic-window" => Ok(RestrictionConfig::TherapeuticWindow),
        _ => Err(format!("unknown restriction '{s}' (expected mtd-cap or therapeutic-window)")),
    }
}

fn parse_space(s: &str) -> Result<SpaceKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "continuous" => Ok(SpaceKind::Continuous),
        "discrete" => Ok(SpaceKind::Discrete),
        _ => Err(format!("unknown space '{s}' (expected continuous or discrete)")),
    }
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    match s.to_ascii_lowercase().as_str() {
        "json" => Ok(OutputFormat::Json),
        "csv" => Ok(OutputFormat::Csv),
        _ => Err(format!("unknown format '{s}' (expected json or csv)")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are not errors.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Runs a command; `Ok(false)` means a verification exceeded tolerance.
fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Targets(args) => targets(args),
        Command::Solve(args) => solve(args),
        Command::Batch(args) => batch(args),
        Command::Verify(args) => verify(args),
        Command::Compare(args) => compare(args),
    }
}

fn targets(args: TargetsArgs) -> Result<bool> {
    let cfg = args.model.to_config()?;
    let plan = cfg.resolve(None)?;
    let def = plan.mined.to_definition();
    let t = plan.theta.targets(plan.gamma, def).map_err(|e| anyhow::anyhow!("{e}"))?;
    let dt = plan
        .theta
        .discrete_targets(&plan.grid, plan.gamma, def)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    if args.json {
        let value = serde_json::json!({
            "theta": plan.theta.as_array(),
            "gamma": plan.gamma,
            "mined": plan.mined,
            "continuous": {
                "mined": t.mined,
                "obd": t.obd,
                "mtd": t.mtd,
                "window_empty": t.therapeutic_window().is_none(),
            },
            "discrete": {
                "mined_index": dt.mined + 1,
                "obd_index": dt.obd + 1,
                "mtd_index": dt.mtd + 1,
                "mined_dose": plan.grid[dt.mined],
                "obd_dose": plan.grid[dt.obd],
                "mtd_dose": plan.grid[dt.mtd],
            },
        });
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        println!("theta: {:?}", plan.theta.as_array());
        println!(
            "gamma: {}  minimum-dose rule: {:?} at {}",
            plan.gamma, plan.mined.definition, plan.mined.level
        );
        println!("ln(MinED) = {:+.4}", t.mined);
        println!("ln(OBD)   = {:+.4}", t.obd);
        println!("ln(MTD)   = {:+.4}", t.mtd);
        match t.therapeutic_window() {
            Some((lo, hi)) => println!("therapeutic window: [{lo:+.4}, {hi:+.4}]"),
            None => println!("therapeutic window: empty"),
        }
        println!(
            "grid analogues: MinED' = x{} ({:+.2}), OBD' = x{} ({:+.2}), MTD' = x{} ({:+.2})",
            dt.mined + 1,
            plan.grid[dt.mined],
            dt.obd + 1,
            plan.grid[dt.obd],
            dt.mtd + 1,
            plan.grid[dt.mtd],
        );
    }
    Ok(true)
}

fn run_and_print(cfg: &RunConfig, seed: Option<u64>) -> Result<bool> {
    let plan = cfg.resolve(seed)?;
    let canonical = cfg.write()?;
    let report = report::run(&plan, &canonical)?;
    for p in &report.problems {
        report::print_problem(p);
    }
    if let Some(rwr) = &report.rwr {
        match (&rwr.design, &rwr.error) {
            (Some(design), _) => {
                println!("RWR stationary design {{{}}}", report::format_design(design));
            }
            (None, Some(err)) => println!("RWR unavailable: {err}"),
            _ => {}
        }
    }
    if !plan.output.formats.is_empty() {
        let written = report::export(&report, &plan.output.dir, &plan.output.formats)?;
        for path in written {
            println!("wrote {}", path.display());
        }
    }
    if !report.all_verified {
        eprintln!("warning: at least one design violated the equivalence-theorem tolerance");
    }
    Ok(report.all_verified)
}

fn solve(args: SolveArgs) -> Result<bool> {
    let mut cfg = args.model.to_config()?;
    cfg.problems = vec![ProblemConfig {
        criterion: args.criterion,
        restriction: args.restriction,
        space: args.space,
    }];
    if let Some(r) = args.restarts {
        cfg.pso.restarts = Some(r);
    }
    cfg.output = match args.out {
        Some(dir) => OutputConfig {
            dir,
            formats: args.formats.unwrap_or_else(|| vec![OutputFormat::Json]),
        },
        // Terminal output only.
        None => OutputConfig { dir: PathBuf::from("reports"), formats: vec![] },
    };
    run_and_print(&cfg, args.seed)
}

fn batch(args: BatchArgs) -> Result<bool> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(dir) = args.out {
        cfg.output.dir = dir;
    }
    run_and_print(&cfg, args.seed).context("running batch")
}

fn verify(args: VerifyArgs) -> Result<bool> {
    let cfg = args.model.to_config()?;
    let plan = cfg.resolve(None)?;
    let design = parse_design(&args.design)?;
    let pc = ProblemConfig {
        criterion: args.criterion,
        restriction: args.restriction,
        space: args.space,
    };
    let (verification, value, s) = report::verify_design(&plan, &pc, &design)?;
    println!(
        "criterion value {value:.6}; success proportion {s:.3}; max sensitivity violation \
         {:.3e}; worst support residual {:.3e} (tolerance {:.0e})",
        verification.max_violation, verification.worst_support_residual, verification.tolerance
    );
    if verification.pass {
        println!("design verifies as optimal for problem {}", pc.label());
    } else {
        println!("design VIOLATES the optimality condition for problem {}", pc.label());
    }
    Ok(verification.pass)
}

fn compare(args: CompareArgs) -> Result<bool> {
    let mut cfg = args.model.to_config()?;
    cfg.problems = ProblemConfig::all()
        .into_iter()
        .filter(|p| p.space == SpaceKind::Discrete)
        .collect();
    cfg.references = ReferencesConfig { d: SpaceKind::Discrete, c: SpaceKind::Discrete };
    if let Some(r) = args.restarts {
        cfg.pso.restarts = Some(r);
    }
    cfg.output = match &args.out {
        Some(dir) => OutputConfig {
            dir: dir.clone(),
            formats: vec![OutputFormat::Json, OutputFormat::Csv],
        },
        None => OutputConfig { dir: PathBuf::from("reports"), formats: vec![] },
    };
    let plan = cfg.resolve(args.seed)?;
    let canonical = cfg.write()?;
    let report = report::run(&plan, &canonical)?;

    println!("design     d_eff  c_eff      s  score");
    let mut rows: Vec<(String, f64, f64, f64)> = Vec::new();
    for p in &report.problems {
        if let Some(e) = &p.efficiency {
            rows.push((p.label.clone(), e.d_eff, e.c_eff, e.s));
        }
    }
    if let Some(rwr) = &report.rwr {
        if let Some(e) = &rwr.efficiency {
            rows.push(("RWR".into(), e.d_eff, e.c_eff, e.s));
        }
    }
    for (label, d, c, s) in &rows {
        println!("{label:<9} {d:6.2} {c:6.2} {s:6.2} {:6.2}", score(*d, *c, *s));
    }
    if !plan.output.formats.is_empty() {
        let written = report::export(&report, &plan.output.dir, &plan.output.formats)?;
        for path in written {
            println!("wrote {}", path.display());
        }
    }
    Ok(report.all_verified)
}

/// Parses "dose:weight,dose:weight,..." into a design measure.
fn parse_design(text: &str) -> Result<DesignMeasure> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for pair in text.split(',') {
        let (d, w) = pair
            .split_once(':')
            .with_context(|| format!("expected dose:weight, got '{pair}'"))?;
        points.push(d.trim().parse::<f64>().with_context(|| format!("bad dose '{d}'"))?);
        weights.push(w.trim().parse::<f64>().with_context(|| format!("bad weight '{w}'"))?);
    }
    if points.is_empty() {
        bail!("design must contain at least one dose:weight pair");
    }
    DesignMeasure::new(points, weights).map_err(|e| anyhow::anyhow!("{e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use lord_core::scenarios::standard_grid;

    #[test]
    fn design_parsing() {
        let xi = parse_design("-1.20:0.28, 2.32:0.36, 4.38:0.36").unwrap();
        assert_eq!(xi.len(), 3);
        assert!(parse_design("1.0").is_err());
        assert!(parse_design("1.0:0.4,2.0:0.4").is_err()); // weights sum to 0.8
    }

    #[test]
    fn standard_grid_is_default() {
        let cfg = RunConfig::parse("scenario = \"B\"\n").unwrap();
        let plan = cfg.resolve(None).unwrap();
        assert_eq!(plan.grid, standard_grid());
    }
}
