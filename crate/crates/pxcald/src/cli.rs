//! Experiment runner: loads profiles, synthesizes or ingests DN curves,
//! runs one task per invocation, and writes three artifacts into the output
//! directory:
//!
//! - `dn_curve.csv` — the curve the task consumed (`m,lambda` rows);
//! - `report.json` — the task's numerical results;
//! - `manifest.json` — the fully resolved configuration, input paths, and
//!   output list, sufficient to reproduce the run.
//!
//! Outputs are deterministic: same config and seed, byte-identical files.
//! Exit codes: 0 success, 2 configuration error (with field-path
//! diagnostics), 3 pipeline error (tagged with the failing stage).

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diff::FdScheme;
use crate::error::{Error, Result};
use crate::forward::{
    dn_map, interior_power_data, recover_from_interior, solve_flux, DnCurve, DEFAULT_TOL,
};
use crate::profiles::{CommonGrid, ProfileSet};
use crate::recon::{
    self, dn_derivatives, dn_oracle_derivatives, extract_moments, faa_di_bruno, fixed_point,
    inverse_derivatives, DerivativeMode, ExtremalEstimate, ExtremalSide, MomentVector,
};

/// Exit code for configuration problems (bad JSON, failed validation,
/// missing files, inconsistent field combinations).
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for runtime pipeline failures (nonconvergence, range errors,
/// inconsistent data, output I/O).
pub const EXIT_PIPELINE: i32 = 3;

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

/// Boundary-measurement experiments for the weighted p(x)-conductivity
/// problem on an interval.
#[derive(Debug, Parser)]
#[command(name = "pxcald", version, disable_help_subcommand = true)]
pub struct Cli {
    /// Task to run.
    #[arg(value_enum)]
    pub task: TaskKind,
    /// Path to the experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config's `out_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// RNG seed for noise synthesis (overrides the config's `seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Multiplicative noise level (overrides the config's `noise`).
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Evaluate the DN curve over an m-grid and emit it as CSV.
    ForwardSweep,
    /// Locate the fixed point Λ(k) = k.
    FixedPoint,
    /// Evaluate the rescaled large-/small-m limits of the DN map.
    Extremal,
    /// Recover the moment sequence from derivatives at the fixed point.
    Moments,
    /// Full reconstruction of the conductivity's level-set projection.
    Reconstruct,
    /// Interior power-density data: recover γ cell by cell.
    Interior,
}

impl TaskKind {
    fn name(self) -> &'static str {
        match self {
            TaskKind::ForwardSweep => "forward-sweep",
            TaskKind::FixedPoint => "fixed-point",
            TaskKind::Extremal => "extremal",
            TaskKind::Moments => "moments",
            TaskKind::Reconstruct => "reconstruct",
            TaskKind::Interior => "interior",
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// On-disk experiment configuration. Every field is optional so one config
/// can serve several tasks; validation happens against the task actually
/// requested. Unknown fields are rejected to catch typos early.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Optional task; the command-line task always wins.
    pub task: Option<TaskKind>,
    /// Inline profile set (`{"interval":..., "p":..., "gamma":...}`).
    pub profiles: Option<serde_json::Value>,
    /// Path to a profile-set JSON file; exactly one of `profiles`/
    /// `profiles_path` must be present.
    pub profiles_path: Option<PathBuf>,
    /// Optional measured DN curve (CSV `m,lambda`); replaces the curve
    /// synthesized from the profiles for curve-consuming tasks.
    pub curve_path: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Multiplicative noise level applied to tabulated curve samples.
    pub noise: Option<f64>,
    pub m_grid: Option<MGrid>,
    /// Highest derivative/moment order for moments and reconstruct.
    pub n_max: Option<usize>,
    /// Derivative source for moments and reconstruct.
    pub mode: Option<DerivativeMode>,
    /// Extremal side; omitted = run both sides.
    pub side: Option<ExtremalSide>,
    /// Custom extremal m-schedule (requires `side`).
    pub schedule: Option<Vec<f64>>,
    /// Known essential bounds (inf f, sup f) for the extremal diagnostic.
    pub f_bounds: Option<(f64, f64)>,
    pub fd: Option<FdScheme>,
    /// Gap below which adjacent p-values are treated as one level.
    pub merge_tol: Option<f64>,
    /// Absolute residual target |Λ(k) − k| for the fixed-point search.
    pub fixed_point_tol: Option<f64>,
    /// Initial upper bracket for the fixed-point search.
    pub bracket_hi: Option<f64>,
    /// Relative tolerance of the forward flux solves.
    pub flux_tol: Option<f64>,
    /// Boundary gap m driving the interior task.
    pub interior_m: Option<f64>,
    /// Interior measurement exponent r: a constant or a piecewise profile.
    pub r: Option<RExponent>,
    /// |p − r − 1| threshold below which interior recovery refuses a cell.
    pub degenerate_eps: Option<f64>,
}

/// m-grid description: log-spaced or explicit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MGrid {
    Log { lo: f64, hi: f64, count: usize },
    Explicit { values: Vec<f64> },
}

impl MGrid {
    pub fn materialize(&self) -> Result<Vec<f64>> {
        match self {
            MGrid::Log { lo, hi, count } => {
                if !(*lo > 0.0 && hi > lo) || !hi.is_finite() {
                    return Err(Error::invalid_argument("m_grid", format!("log grid needs 0 < lo < hi, got [{lo}, {hi}]")));
                }
                if *count < 2 {
                    return Err(Error::invalid_argument("m_grid.count", format!("need at least 2 points, got {count}")));
                }
                let (la, lb) = (lo.ln(), hi.ln());
                Ok((0..*count)
                    .map(|i| (la + (lb - la) * i as f64 / (*count as f64 - 1.0)).exp())
                    .collect())
            }
            MGrid::Explicit { values } => {
                if values.len() < 2 {
                    return Err(Error::invalid_argument("m_grid.values", "need at least 2 points"));
                }
                for (i, w) in values.windows(2).enumerate() {
                    if !(w[1] > w[0]) {
                        return Err(Error::invalid_argument(
                            "m_grid.values",
                            format!("must be strictly increasing, violated at index {}", i + 1),
                        ));
                    }
                }
                if !(values[0] > 0.0) || !values.iter().all(|v| v.is_finite()) {
                    return Err(Error::invalid_argument("m_grid.values", "entries must be positive and finite"));
                }
                Ok(values.clone())
            }
        }
    }
}

impl Default for MGrid {
    fn default() -> Self {
        MGrid::Log { lo: 1e-2, hi: 1e2, count: 101 }
    }
}

/// Interior exponent r(x): one constant or a piecewise-constant profile
/// over the same interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RExponent {
    Constant(f64),
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

/// Configuration after defaults and command-line overrides: what actually
/// ran. Echoed verbatim into the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub task: TaskKind,
    pub profiles_path: Option<PathBuf>,
    pub profiles_inline: bool,
    pub curve_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub noise: f64,
    pub m_grid: MGrid,
    pub n_max: usize,
    pub mode: DerivativeMode,
    pub side: Option<ExtremalSide>,
    pub schedule: Option<Vec<f64>>,
    pub f_bounds: Option<(f64, f64)>,
    pub fd: FdScheme,
    pub merge_tol: f64,
    pub fixed_point_tol: f64,
    pub bracket_hi: f64,
    pub flux_tol: f64,
    pub interior_m: f64,
    pub r: Option<RExponent>,
    pub degenerate_eps: f64,
}

/// Validated, loaded inputs ready to execute.
#[derive(Debug)]
struct LoadedExperiment {
    resolved: ResolvedConfig,
    profiles: ProfileSet,
    grid: CommonGrid,
    ingested_curve: Option<DnCurve>,
}

fn load_and_validate(cli: &Cli) -> Result<LoadedExperiment> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| Error::invalid_argument("config", format!("cannot read {}: {e}", cli.config.display())))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Error::invalid_argument("config", format!("invalid JSON: {e}")))?;

    let task = cli.task;
    let noise = cli.noise.or(config.noise).unwrap_or(0.0);
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::invalid_argument("noise", format!("must be a finite value >= 0, got {noise}")));
    }

    let profiles = match (&config.profiles, &config.profiles_path) {
        (Some(_), Some(_)) => {
            return Err(Error::invalid_argument("profiles", "give either inline `profiles` or `profiles_path`, not both"))
        }
        (Some(inline), None) => ProfileSet::from_json_value(inline.clone())?,
        (None, Some(path)) => ProfileSet::from_json_file(path)
            .map_err(|e| Error::invalid_argument("profiles_path", format!("{}: {e}", path.display())))?,
        (None, None) => return Err(Error::invalid_argument("profiles", "one of `profiles` or `profiles_path` is required")),
    };
    let grid = profiles.grid()?;

    let ingested_curve = match &config.curve_path {
        None => None,
        Some(path) => {
            if matches!(task, TaskKind::ForwardSweep | TaskKind::Interior) {
                return Err(Error::invalid_argument(
                    "curve_path",
                    format!("the {} task synthesizes its own data and cannot take a measured curve", task.name()),
                ));
            }
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::invalid_argument("curve_path", format!("cannot read {}: {e}", path.display())))?;
            Some(crate::forward::dn_curve_from_csv(&text)?)
        }
    };

    let mode = config.mode.unwrap_or(DerivativeMode::Oracle);
    if matches!(task, TaskKind::Moments | TaskKind::Reconstruct) && mode == DerivativeMode::Oracle {
        if ingested_curve.is_some() {
            return Err(Error::invalid_argument(
                "mode",
                "oracle derivatives need the synthesized curve; use mode = \"measured\" with a measured curve",
            ));
        }
        if noise > 0.0 {
            return Err(Error::invalid_argument(
                "mode",
                "oracle derivatives are exact by definition; use mode = \"measured\" to study noise",
            ));
        }
    }
    if task == TaskKind::Interior && noise > 0.0 {
        return Err(Error::invalid_argument("noise", "noise applies to DN curves, not interior power data"));
    }
    if config.schedule.is_some() && config.side.is_none() {
        return Err(Error::invalid_argument("schedule", "a custom schedule needs an explicit `side`"));
    }

    let fd = config.fd.unwrap_or_default();
    fd.validate()?;

    let resolved = ResolvedConfig {
        task,
        profiles_path: config.profiles_path.clone(),
        profiles_inline: config.profiles.is_some(),
        curve_path: config.curve_path.clone(),
        out_dir: cli.out.clone().or(config.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out")),
        seed: cli.seed.or(config.seed).unwrap_or(0),
        noise,
        m_grid: config.m_grid.clone().unwrap_or_default(),
        n_max: config.n_max.unwrap_or(3),
        mode,
        side: config.side,
        schedule: config.schedule.clone(),
        f_bounds: config.f_bounds,
        fd,
        merge_tol: config.merge_tol.unwrap_or(0.0),
        fixed_point_tol: config.fixed_point_tol.unwrap_or(recon::FIXED_POINT_TOL),
        bracket_hi: config.bracket_hi.unwrap_or(recon::FIXED_POINT_BRACKET_HI),
        flux_tol: config.flux_tol.unwrap_or(DEFAULT_TOL),
        interior_m: config.interior_m.unwrap_or(1.0),
        r: config.r.clone(),
        degenerate_eps: config.degenerate_eps.unwrap_or(1e-8),
    };
    // Materialize once now so grid mistakes surface as config errors.
    resolved.m_grid.materialize()?;

    Ok(LoadedExperiment { resolved, profiles, grid, ingested_curve })
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

/// Multiplicative perturbation Λ ↦ Λ·(1 + level·ξ) with ξ i.i.d. standard
/// normal, one draw per tabulated sample in order; deterministic per seed.
/// Level 0 returns the curve unchanged (also for exact curves). Positive
/// levels need a tabulated curve — an exact curve has no samples to
/// perturb, so sample it first. Fails only if the noise is large enough to
/// destroy the table's required monotonicity.
pub fn add_noise(curve: &DnCurve, level: f64, seed: u64) -> Result<DnCurve> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::invalid_argument("level", format!("must be a finite value >= 0, got {level}")));
    }
    if level == 0.0 {
        return Ok(curve.clone());
    }
    let samples = curve.samples().ok_or_else(|| {
        Error::invalid_argument("curve", "noise applies to tabulated curves; sample the exact curve onto a grid first")
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(m, l)| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            (m, l * (1.0 + level * xi))
        })
        .collect();
    DnCurve::tabulated(noisy)
}

// ---------------------------------------------------------------------------
// Task outcomes and artifacts
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum TaskOutcome {
    ForwardSweep {
        n_points: usize,
        m_min: f64,
        m_max: f64,
    },
    FixedPoint {
        fixed_point: f64,
        residual: f64,
    },
    Extremal {
        estimates: Vec<ExtremalEstimate>,
    },
    Moments {
        fixed_point: f64,
        mode: DerivativeMode,
        moments: MomentVector,
        derivative_values: Vec<f64>,
        derivative_error_indicators: Vec<f64>,
    },
    Reconstruct {
        result: recon::ReconstructionReport,
    },
    Interior {
        m: f64,
        flux_constant: f64,
        r_values: Vec<f64>,
        power_data: Vec<f64>,
        recovered_gamma: Vec<f64>,
        true_gamma: Vec<f64>,
        max_relative_error: f64,
    },
}

/// `report.json` body: the outcome plus the noise context it ran under.
#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub noise: f64,
    #[serde(flatten)]
    pub outcome: TaskOutcome,
}

/// `manifest.json` body.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: &'a ResolvedConfig,
    pub inputs: Vec<String>,
    pub outputs: Vec<&'static str>,
}

fn csv_from_samples(samples: &[(f64, f64)]) -> String {
    let mut out = String::from("m,lambda\n");
    for &(m, l) in samples {
        out.push_str(&format!("{m:.15e},{l:.15e}\n"));
    }
    out
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

fn execute(exp: &LoadedExperiment) -> Result<(TaskOutcome, Vec<(f64, f64)>)> {
    let cfg = &exp.resolved;
    let ms = cfg.m_grid.materialize()?;

    // The curve the task consumes: an ingested table, or the exact curve of
    // the profile pair — tabulated (and perturbed) when noise is requested.
    let exact = DnCurve::exact(exp.grid.clone());
    let mut curve = match &exp.ingested_curve {
        Some(c) => c.clone(),
        None => exact.clone(),
    };
    if cfg.noise > 0.0 {
        if curve.samples().is_none() {
            curve = DnCurve::tabulated(exact.sample(&ms)?)?;
        }
        curve = add_noise(&curve, cfg.noise, cfg.seed)?;
    }
    let curve_samples = match curve.samples() {
        Some(s) => s.to_vec(),
        None => curve.sample(&ms)?,
    };

    let outcome = match cfg.task {
        TaskKind::ForwardSweep => TaskOutcome::ForwardSweep {
            n_points: curve_samples.len(),
            m_min: curve_samples.first().map(|s| s.0).unwrap_or(f64::NAN),
            m_max: curve_samples.last().map(|s| s.0).unwrap_or(f64::NAN),
        },
        TaskKind::FixedPoint => {
            let k = fixed_point(&curve, cfg.fixed_point_tol, cfg.bracket_hi)?;
            let residual = (dn_map(k, &curve)? - k).abs();
            TaskOutcome::FixedPoint { fixed_point: k, residual }
        }
        TaskKind::Extremal => {
            let sides: Vec<ExtremalSide> = match cfg.side {
                Some(s) => vec![s],
                None => vec![ExtremalSide::MaxQ, ExtremalSide::MinQ],
            };
            let mut estimates = Vec::with_capacity(sides.len());
            for side in sides {
                let schedule = match &cfg.schedule {
                    Some(s) => s.clone(),
                    None => recon::default_extremal_schedule(side),
                };
                estimates.push(recon::extremal_recovery(&curve, &exp.profiles.p, side, &schedule, cfg.f_bounds)?);
            }
            TaskOutcome::Extremal { estimates }
        }
        TaskKind::Moments => {
            let k = fixed_point(&curve, cfg.fixed_point_tol, cfg.bracket_hi)?;
            let (values, indicators) = match cfg.mode {
                DerivativeMode::Measured => {
                    let ests = dn_derivatives(&curve, k, cfg.n_max, &cfg.fd)?;
                    (
                        ests.iter().map(|e| e.value).collect::<Vec<_>>(),
                        ests.iter().map(|e| e.error_indicator).collect::<Vec<_>>(),
                    )
                }
                DerivativeMode::Oracle => {
                    let oracle = dn_oracle_derivatives(&exp.grid, cfg.n_max)?;
                    let kd = inverse_derivatives(&oracle.m_derivs, cfg.n_max.max(1))?;
                    let mut lm = vec![oracle.lambda_derivs[0]];
                    for n in 1..=cfg.n_max {
                        lm.push(faa_di_bruno(&oracle.lambda_derivs, &kd, n)?);
                    }
                    let zeros = vec![0.0; lm.len()];
                    (lm, zeros)
                }
            };
            let moments = extract_moments(&values, k, cfg.n_max)?;
            TaskOutcome::Moments {
                fixed_point: k,
                mode: cfg.mode,
                moments,
                derivative_values: values,
                derivative_error_indicators: indicators,
            }
        }
        TaskKind::Reconstruct => {
            let result = recon::reconstruct(&curve, &exp.profiles.p, cfg.n_max, cfg.mode, &cfg.fd, cfg.merge_tol)?;
            TaskOutcome::Reconstruct { result }
        }
        TaskKind::Interior => {
            let flux = solve_flux(cfg.interior_m, &exp.grid, cfg.flux_tol)?;
            let r_values: Vec<f64> = match &cfg.r {
                None => vec![0.0; exp.grid.n_cells()],
                Some(RExponent::Constant(r)) => vec![*r; exp.grid.n_cells()],
                Some(RExponent::Piecewise { breaks, values }) => {
                    crate::profiles::validate_breaks("r", breaks, values.len())?;
                    if breaks[0] != exp.grid.interval().a() || *breaks.last().unwrap() != exp.grid.interval().b() {
                        return Err(Error::invalid_argument("r.breaks", "must span the profile interval"));
                    }
                    // Piecewise r resolved on the common grid by cell midpoint.
                    let locate = |x: f64| -> usize {
                        breaks[1..breaks.len() - 1].iter().filter(|&&b| b <= x).count()
                    };
                    (0..exp.grid.n_cells())
                        .map(|c| {
                            let mid = 0.5 * (exp.grid.breaks()[c] + exp.grid.breaks()[c + 1]);
                            values[locate(mid)]
                        })
                        .collect()
                }
            };
            let data = interior_power_data(&r_values, &flux, &exp.grid)?;
            let recovered = recover_from_interior(&data, &r_values, &flux, &exp.grid, cfg.degenerate_eps)?;
            let true_gamma = exp.grid.gamma_values().to_vec();
            let max_relative_error = recovered
                .values()
                .iter()
                .zip(&true_gamma)
                .map(|(got, want)| ((got - want) / want).abs())
                .fold(0.0f64, f64::max);
            TaskOutcome::Interior {
                m: cfg.interior_m,
                flux_constant: flux.k,
                r_values,
                power_data: data,
                recovered_gamma: recovered.values().to_vec(),
                true_gamma,
                max_relative_error,
            }
        }
    };

    Ok((outcome, curve_samples))
}

fn write_artifacts(exp: &LoadedExperiment, outcome: TaskOutcome, curve_samples: &[(f64, f64)], config_path: &Path) -> Result<()> {
    let cfg = &exp.resolved;
    std::fs::create_dir_all(&cfg.out_dir)?;

    let csv = csv_from_samples(curve_samples);
    std::fs::write(cfg.out_dir.join("dn_curve.csv"), csv)?;

    let report = Report { seed: cfg.seed, noise: cfg.noise, outcome };
    let mut report_json = serde_json::to_string_pretty(&report)?;
    report_json.push('\n');
    std::fs::write(cfg.out_dir.join("report.json"), report_json)?;

    let mut inputs = vec![config_path.display().to_string()];
    if let Some(p) = &cfg.profiles_path {
        inputs.push(p.display().to_string());
    }
    if let Some(p) = &cfg.curve_path {
        inputs.push(p.display().to_string());
    }
    let manifest = Manifest {
        tool: "pxcald",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        inputs,
        outputs: vec!["dn_curve.csv", "report.json", "manifest.json"],
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest)?;
    manifest_json.push('\n');
    std::fs::write(cfg.out_dir.join("manifest.json"), manifest_json)?;
    Ok(())
}

/// Full entry point used by the binary: parse, load, run, write, report.
/// Returns the process exit code instead of exiting, for testability.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through this path too; those are
            // successes, not config errors.
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };

    let exp = match load_and_validate(&cli) {
        Ok(exp) => exp,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };

    let stage = exp.resolved.task.name();
    let (outcome, samples) = match execute(&exp) {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("pipeline error in stage {stage}: {e}");
            return EXIT_PIPELINE;
        }
    };
    if let Err(e) = write_artifacts(&exp, outcome, &samples, &cli.config) {
        eprintln!("pipeline error in stage write: {e}");
        return EXIT_PIPELINE;
    }
    0
}
