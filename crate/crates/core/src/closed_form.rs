//! Closed-form ergodic solutions with vanishing densities on the 1-torus.
//!
//! Two examples with `g(m) = m` and `H̄ = 0`:
//!
//! * `bbb`: `V = π cos 4πx`, `m = (π cos 4πx)⁺`;
//! * `exlp`: `V = π cos 2πx`, `m = (π cos 2πx)⁺`.
//!
//! On `{m = 0}` the Hamilton–Jacobi equation only fixes `|u_x| = √(-2V)`, so
//! each example carries several candidate gradients that differ by sign
//! choices. Candidates are stored by gradient; `u` is the cumulative
//! trapezoid with `u(0) = 0`. At a node where a candidate jumps, the sample is
//! the mean of the one-sided limits, which keeps `Σ u_x = 0` exact for the
//! symmetric sign patterns.

use crate::error::{Error, Result};
use crate::grid::{check_same, integrate, GridField, TorusGrid};
use crate::model::{Model, Potential};
use crate::scalar::{pos, Scalar};

/// Candidate ergodic solution given by its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSolution<T> {
    pub label: String,
    pub u_x: GridField<T>,
    pub u: GridField<T>,
    pub m: GridField<T>,
    pub hbar: T,
}

impl<T: Scalar> CandidateSolution<T> {
    pub fn new(label: impl Into<String>, u_x: GridField<T>, m: GridField<T>, hbar: T) -> Result<Self> {
        check_same(u_x.grid(), m.grid())?;
        let u = antiderivative(&u_x, T::lit(1e-9))?;
        Ok(Self {
            label: label.into(),
            u_x,
            u,
            m,
            hbar,
        })
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        self.u_x.grid()
    }

    /// `min_i [H̄ - u_x²/2 - V + g(m)]`: non-negative for a subsolution.
    pub fn hj_slack(&self, model: &Model<T>) -> T {
        let v = model.potential.sample(self.grid());
        (0..self.u_x.len())
            .map(|i| {
                let p = self.u_x.values()[i];
                self.hbar - p * p * T::half() - v.values()[i] + model.coupling.g(self.m.values()[i])
            })
            .fold(T::infinity(), |a, b| a.min(b))
    }

    /// Sup of `|u_x²/2 + V - g(m) - H̄|` over nodes with `m > tol`.
    pub fn hj_defect_on_support(&self, model: &Model<T>, tol: T) -> T {
        let v = model.potential.sample(self.grid());
        (0..self.u_x.len())
            .filter(|&i| self.m.values()[i] > tol)
            .map(|i| {
                let p = self.u_x.values()[i];
                (p * p * T::half() + v.values()[i] - model.coupling.g(self.m.values()[i]) - self.hbar).abs()
            })
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Sup of `|m u_x|`.
    pub fn transport_defect(&self) -> T {
        self.m
            .values()
            .iter()
            .zip(self.u_x.values())
            .map(|(&m, &p)| (m * p).abs())
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// One of the two closed-form examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleKind {
    Bbb,
    Exlp,
}

impl ExampleKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExampleKind::Bbb => "bbb",
            ExampleKind::Exlp => "exlp",
        }
    }

    pub fn model<T: Scalar>(&self) -> Model<T> {
        match self {
            ExampleKind::Bbb => Model::bbb(),
            ExampleKind::Exlp => Model::exdp(),
        }
    }
}

impl std::str::FromStr for ExampleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bbb" => Ok(ExampleKind::Bbb),
            "exlp" | "exdp" => Ok(ExampleKind::Exlp),
            _ => Err(Error::InvalidInput(format!("unknown example '{s}' (expected bbb or exlp)"))),
        }
    }
}

/// Density, ergodic constant and candidates of one example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub kind: ExampleKind,
    pub m: GridField<T>,
    pub hbar: T,
    pub candidates: Vec<CandidateSolution<T>>,
}

impl<T: Scalar> Example<T> {
    pub fn candidate(&self, label: &str) -> Option<&CandidateSolution<T>> {
        self.candidates.iter().find(|c| c.label == label)
    }
}

/// `√(-2V)⁺` for `V = π cos(2πkx)`.
fn speed<T: Scalar>(k: T, x: T) -> T {
    let c = (T::two() * T::PI() * k * x).cos();
    // zeros of cos land at ±1e-16; snap them so the sign patterns stay symmetric
    if c.abs() < T::lit(64.0) * T::epsilon() {
        return T::zero();
    }
    pos(-T::two() * T::PI() * c).sqrt()
}

/// Sign pattern `s(x)` from open intervals `(a, b, sign)`; 0 elsewhere.
fn sign_at<T: Scalar>(pieces: &[(f64, f64, f64)], x: T) -> T {
    for &(a, b, s) in pieces {
        if x > T::lit(a) && x < T::lit(b) {
            return T::lit(s);
        }
    }
    T::zero()
}

/// Samples `s(x) f(x)`, averaging the one-sided limits at pattern breakpoints.
fn piecewise<T: Scalar>(grid: TorusGrid<T>, pieces: &[(f64, f64, f64)], f: impl Fn(T) -> T) -> GridField<T> {
    let eta = T::lit(1e-9);
    GridField::from_fn(grid, |x| {
        let s = (sign_at(pieces, x - eta) + sign_at(pieces, x + eta)) * T::half();
        s * f(x)
    })
}

fn one_dimensional<T: Scalar>(grid: &TorusGrid<T>) -> Result<()> {
    if grid.dim() != 1 {
        return Err(Error::InvalidInput("closed-form examples are one-dimensional".into()));
    }
    Ok(())
}

/// `V = π cos 4πx`: `m = (π cos 4πx)⁺`, `H̄ = 0`, candidates `hat` and `tilde`.
pub fn example_bbb<T: Scalar>(grid: &TorusGrid<T>) -> Result<Example<T>> {
    one_dimensional(grid)?;
    let two = T::two();
    let m = GridField::from_fn(*grid, |x| pos(T::PI() * (two * two * T::PI() * x).cos()));
    let f = |x: T| speed(two, x);
    let hat = piecewise(
        *grid,
        &[(0.125, 0.25, 1.0), (0.25, 0.375, -1.0), (0.625, 0.75, 1.0), (0.75, 0.875, -1.0)],
        f,
    );
    let tilde = piecewise(*grid, &[(0.125, 0.375, 1.0), (0.625, 0.875, -1.0)], f);
    Ok(Example {
        kind: ExampleKind::Bbb,
        hbar: T::zero(),
        candidates: vec![
            CandidateSolution::new("hat", hat, m.clone(), T::zero())?,
            CandidateSolution::new("tilde", tilde, m.clone(), T::zero())?,
        ],
        m,
    })
}

/// `V = π cos 2πx`: `m = (π cos 2πx)⁺`, `H̄ = 0`, candidates `tilde` and `hat`.
pub fn example_exlp<T: Scalar>(grid: &TorusGrid<T>) -> Result<Example<T>> {
    one_dimensional(grid)?;
    let m = GridField::from_fn(*grid, |x| pos(T::PI() * (T::two() * T::PI() * x).cos()));
    let f = |x: T| speed(T::one(), x);
    let tilde = piecewise(*grid, &[(0.25, 0.5, 1.0), (0.5, 0.75, -1.0)], f);
    let hat = piecewise(
        *grid,
        &[(0.25, 0.375, -1.0), (0.375, 0.5, 1.0), (0.5, 0.625, -1.0), (0.625, 0.75, 1.0)],
        f,
    );
    Ok(Example {
        kind: ExampleKind::Exlp,
        hbar: T::zero(),
        candidates: vec![
            CandidateSolution::new("tilde", tilde, m.clone(), T::zero())?,
            CandidateSolution::new("hat", hat, m.clone(), T::zero())?,
        ],
        m,
    })
}

/// Scale factors of the generated `exlp` candidates `s·ũ_x`.
pub const CATALOG_SCALES: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

/// `exlp` candidates: `tilde`, `hat`, `zero` and `tilde_s<k>` for each scale.
pub fn exlp_catalog<T: Scalar>(grid: &TorusGrid<T>) -> Result<Vec<CandidateSolution<T>>> {
    let ex = example_exlp(grid)?;
    let mut out = ex.candidates.clone();
    out.push(CandidateSolution::new(
        "zero",
        GridField::constant(*grid, T::zero()),
        ex.m.clone(),
        T::zero(),
    )?);
    let tilde = ex.candidate("tilde").expect("tilde candidate");
    for s in CATALOG_SCALES {
        let st = T::lit(s);
        out.push(CandidateSolution::new(
            format!("tilde_s{s}"),
            tilde.u_x.map(|v| st * v),
            ex.m.clone(),
            T::zero(),
        )?);
    }
    Ok(out)
}

/// Result of [`is_admissible`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    /// Nodes violating either condition.
    pub violations: Vec<usize>,
}

/// Regular-weak-solution test for a gradient: `u_x = 0` where `V > 0`
/// (the support of `m`) and `u_x² ≤ -2V` elsewhere, both up to `tol`.
pub fn is_admissible<T: Scalar>(u_x: &GridField<T>, kind: ExampleKind, tol: T) -> AdmissibilityReport {
    let potential: Potential<T> = kind.model::<T>().potential;
    let grid = u_x.grid();
    let violations: Vec<usize> = (0..u_x.len())
        .filter(|&i| {
            let v = potential.eval(grid.coord(i));
            let p = u_x.values()[i];
            if v > T::zero() {
                p.abs() > tol
            } else {
                p * p > -T::two() * v + tol
            }
        })
        .collect();
    AdmissibilityReport {
        admissible: violations.is_empty(),
        violations,
    }
}

/// Cumulative trapezoid with `u(0) = 0`; `NotPeriodic` when `|∫u_x| > tol`.
pub fn antiderivative<T: Scalar>(u_x: &GridField<T>, tol: T) -> Result<GridField<T>> {
    one_dimensional(u_x.grid())?;
    let mean = integrate(u_x);
    if !(mean.abs() <= tol) {
        return Err(Error::NotPeriodic {
            mean: mean.as_f64(),
            tol: tol.as_f64(),
        });
    }
    let h = u_x.grid().h();
    let p = u_x.values();
    let mut u = Vec::with_capacity(p.len());
    let mut acc = T::zero();
    u.push(acc);
    for i in 1..p.len() {
        acc += (p[i - 1] + p[i]) * T::half() * h;
        u.push(acc);
    }
    GridField::new(*u_x.grid(), u)
}
