//! Flag parsing and the JSON config file.
//!
//! Precedence: built-in defaults < `--config FILE` < flags. Flags that
//! override a value present in the file are listed in `overrides` so the
//! resolution is visible in `meta.json`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use vdmfg::closed_form::ExampleKind;
use vdmfg::selection::check_ladder;
use vdmfg::{Coupling, Model, Potential, Regularization};

use crate::CliError;

pub const DEFAULT_N: usize = 512;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_LADDER: &str = "0.2,0.1,0.05,0.025";

#[derive(Debug, Parser)]
#[command(name = "vdmfg", version, about = "Discounted stationary mean-field games: solver, correctors, selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the discounted system at one discount.
    Solve {
        #[arg(long, allow_negative_numbers = true)]
        epsilon: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        physics: PhysicsArgs,
        /// CSV path; the JSON sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Discounted solves along a ladder plus the ergodic base.
    Sweep {
        #[arg(long, allow_negative_numbers = true, value_delimiter = ',', default_value = DEFAULT_LADDER)]
        epsilon_list: Vec<f64>,
        /// Use σ = δ = ε on every rung instead of the fixed flags.
        #[arg(long)]
        tied: bool,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        physics: PhysicsArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Limit corrector of an ergodic base, with expansion slopes.
    Corrector {
        /// CSV `x,u,m` of the ergodic base; `hbar` is read from its JSON sidecar.
        #[arg(long)]
        base: PathBuf,
        /// Discounts for the expansion-error slopes.
        #[arg(long, allow_negative_numbers = true, value_delimiter = ',', default_value = DEFAULT_LADDER)]
        epsilon_list: Vec<f64>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        physics: PhysicsArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the closed-form density and candidate solutions.
    Example {
        #[arg(value_enum)]
        kind: ExampleArg,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Vanishing-discount ladder and selection verdict.
    Select {
        #[arg(long, value_enum, default_value = "exdp")]
        model: SelectModel,
        #[arg(long, allow_negative_numbers = true, value_delimiter = ',', default_value = DEFAULT_LADDER)]
        eps_ladder: Vec<f64>,
        /// σ = sigma_per_eps·ε along the ladder.
        #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
        sigma_per_eps: f64,
        /// δ = delta_per_eps·ε along the ladder.
        #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
        delta_per_eps: f64,
        /// Slack in F(ū) ≤ F(u) + tol.
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.05)]
        selection_tol: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Invariant suite on one solve; exit 0 iff every check passes.
    Verify {
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.1)]
        epsilon: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        physics: PhysicsArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct GridArgs {
    /// JSON config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Newton tolerance.
    #[arg(long, allow_negative_numbers = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PhysicsArgs {
    #[arg(long, value_enum)]
    pub potential: Option<PotentialKind>,
    /// Amplitude of the sine potential.
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Zero,
    /// c·sin 2πx
    Sine,
    /// π cos 2πx
    #[value(alias = "exdp")]
    Cos2pi,
    /// π cos 4πx
    #[value(alias = "bbb")]
    Cos4pi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExampleArg {
    Bbb,
    Exlp,
}

impl ExampleArg {
    pub fn kind(self) -> ExampleKind {
        match self {
            ExampleArg::Bbb => ExampleKind::Bbb,
            ExampleArg::Exlp => ExampleKind::Exlp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectModel {
    Exdp,
    Bbb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingConfig {
    pub kappa: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialConfig {
    pub kind: PotentialKind,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularizationConfig {
    pub sigma: f64,
    pub delta: f64,
}

/// Fully resolved model and grid settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub n: usize,
    pub tol: f64,
    pub coupling: CouplingConfig,
    pub potential: PotentialConfig,
    pub regularization: RegularizationConfig,
    /// Keys set both in the file and by a flag (the flag won).
    pub overrides: Vec<String>,
}

impl Default for Resolved {
    fn default() -> Self {
        Self {
            n: DEFAULT_N,
            tol: DEFAULT_TOL,
            coupling: CouplingConfig { kappa: 1.0, alpha: 1.0 },
            potential: PotentialConfig {
                kind: PotentialKind::Sine,
                c: 0.3,
            },
            regularization: RegularizationConfig { sigma: 0.0, delta: 0.0 },
            overrides: Vec::new(),
        }
    }
}

impl Resolved {
    pub fn model(&self) -> Result<Model, CliError> {
        let coupling = Coupling::new(self.coupling.kappa, self.coupling.alpha).map_err(|e| CliError::Usage(e.to_string()))?;
        let potential = match self.potential.kind {
            PotentialKind::Zero => Potential::Zero,
            PotentialKind::Sine => Potential::Sine(self.potential.c),
            PotentialKind::Cos2pi => Potential::Cos2Pi,
            PotentialKind::Cos4pi => Potential::Cos4Pi,
        };
        Ok(Model::new(coupling, potential))
    }

    pub fn regularization(&self) -> Result<Regularization, CliError> {
        Regularization::new(self.regularization.sigma, self.regularization.delta).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n: Option<usize>,
    tol: Option<f64>,
    coupling: Option<FileCoupling>,
    potential: Option<FilePotential>,
    regularization: Option<FileRegularization>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileCoupling {
    kappa: Option<f64>,
    alpha: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilePotential {
    kind: Option<PotentialKind>,
    c: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRegularization {
    sigma: Option<f64>,
    delta: Option<f64>,
}

fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
}

/// Layers a value: file over default, flag over file.
fn layer<T: Copy>(slot: &mut T, file: Option<T>, flag: Option<T>, key: &str, overrides: &mut Vec<String>) {
    if let Some(v) = file {
        *slot = v;
    }
    if let Some(v) = flag {
        if file.is_some() {
            overrides.push(key.to_string());
        }
        *slot = v;
    }
}

/// Resolves defaults, the optional file and the flags, then validates.
pub fn resolve(grid: &GridArgs, physics: Option<&PhysicsArgs>) -> Result<Resolved, CliError> {
    let file = match &grid.config {
        Some(p) => read_file(p)?,
        None => FileConfig::default(),
    };
    let mut r = Resolved::default();
    let mut ov = Vec::new();
    layer(&mut r.n, file.n, grid.n, "n", &mut ov);
    layer(&mut r.tol, file.tol, grid.tol, "tol", &mut ov);
    let fc = file.coupling.unwrap_or_default();
    let fp = file.potential.unwrap_or_default();
    let fr = file.regularization.unwrap_or_default();
    let flags = physics.cloned().unwrap_or_default();
    layer(&mut r.coupling.kappa, fc.kappa, flags.kappa, "coupling.kappa", &mut ov);
    layer(&mut r.coupling.alpha, fc.alpha, flags.alpha, "coupling.alpha", &mut ov);
    layer(&mut r.potential.kind, fp.kind, flags.potential, "potential.kind", &mut ov);
    layer(&mut r.potential.c, fp.c, flags.c, "potential.c", &mut ov);
    layer(&mut r.regularization.sigma, fr.sigma, flags.sigma, "regularization.sigma", &mut ov);
    layer(&mut r.regularization.delta, fr.delta, flags.delta, "regularization.delta", &mut ov);
    r.overrides = ov;
    validate(&r)?;
    Ok(r)
}

fn validate(r: &Resolved) -> Result<(), CliError> {
    if r.n < 8 {
        return Err(CliError::Usage(format!("n must be at least 8, got {}", r.n)));
    }
    positive("tol", r.tol)?;
    positive("kappa", r.coupling.kappa)?;
    positive("alpha", r.coupling.alpha)?;
    if !r.potential.c.is_finite() {
        return Err(CliError::Usage("c must be finite".into()));
    }
    for (k, v) in [("sigma", r.regularization.sigma), ("delta", r.regularization.delta)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(CliError::Usage(format!("{k} must be >= 0, got {v}")));
        }
    }
    Ok(())
}

pub fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{name} must be positive, got {v}")))
    }
}

pub fn ladder(values: &[f64]) -> Result<Vec<f64>, CliError> {
    check_ladder(values).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(values.to_vec())
}
