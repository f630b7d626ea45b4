//! Problem data: the monotone coupling `g`, the potential `V`, and the
//! regularization parameters used when classical solutions are unavailable.

use crate::error::{Error, Result};
use crate::grid::{GridField, TorusGrid};
use crate::scalar::Scalar;

/// Power-law coupling `g(m) = κ m^α` with `κ, α > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling<T> {
    kappa: T,
    alpha: T,
}

impl<T: Scalar> Coupling<T> {
    pub fn new(kappa: T, alpha: T) -> Result<Self> {
        if !(kappa > T::zero() && kappa.is_finite()) || !(alpha > T::zero() && alpha.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "coupling needs kappa > 0 and alpha > 0, got kappa={kappa}, alpha={alpha}"
            )));
        }
        Ok(Self { kappa, alpha })
    }

    /// `g(m) = m`.
    pub fn linear() -> Self {
        Self {
            kappa: T::one(),
            alpha: T::one(),
        }
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// Lower-growth exponent `β = α - 1` in `g'(z) ≥ C₁ z^β`.
    pub fn beta(&self) -> T {
        self.alpha - T::one()
    }

    /// Constants `(c₁, c₂)` of `c₁ m^{α-1} ≤ g'(m) ≤ c₂ m^{α-1}`; both equal `κα`.
    pub fn growth_constants(&self) -> (T, T) {
        (self.kappa * self.alpha, self.kappa * self.alpha)
    }

    /// `inf_{m>0} g(m)`.
    pub fn infimum(&self) -> T {
        T::zero()
    }

    pub fn g(&self, m: T) -> T {
        self.kappa * m.powf(self.alpha)
    }

    pub fn g_prime(&self, m: T) -> T {
        self.kappa * self.alpha * m.powf(self.alpha - T::one())
    }

    pub fn g_second(&self, m: T) -> T {
        let am1 = self.alpha - T::one();
        self.kappa * self.alpha * am1 * m.powf(am1 - T::one())
    }

    /// `g⁻¹(s)` on the closed range `[0, ∞)`; negative arguments are outside it.
    pub fn inverse(&self, s: T) -> Result<T> {
        if s < T::zero() || s.is_nan() {
            return Err(Error::Domain(format!(
                "g^-1 undefined at s = {s} (range of g is [0, inf))"
            )));
        }
        Ok((s / self.kappa).powf(T::one() / self.alpha))
    }

    /// `(g⁻¹)'(s)` for `s > 0`.
    pub fn inverse_derivative(&self, s: T) -> Result<T> {
        let m = self.inverse(s)?;
        if m == T::zero() {
            // 1/g'(0): finite only for the linear power
            return Ok(if self.alpha == T::one() {
                T::one() / self.kappa
            } else if self.alpha > T::one() {
                T::infinity()
            } else {
                T::zero()
            });
        }
        Ok(T::one() / self.g_prime(m))
    }
}

/// `ĝ⁻¹_δ(s)`: the inverse of `g`, extended below `g(δ)` by a positive C¹ tail.
///
/// For `s ≥ s* = g(δ)` this is `g⁻¹(s)`. Below, the argument is replaced by
/// `r(s) = s* exp((s - s*)/s*)`, which matches value and slope at `s*`, stays
/// positive and increasing, and collapses onto `s⁺` as `δ → 0`. Since
/// `g⁻¹(s*) = δ`, the pointwise error against `(g⁻¹(s))⁺` never exceeds `δ`.
pub fn smoothed_inverse<T: Scalar>(s: T, coupling: &Coupling<T>, delta: T) -> Result<T> {
    smoothed_inverse_with_derivative(s, coupling, delta).map(|(v, _)| v)
}

/// [`smoothed_inverse`] together with its derivative in `s`.
pub fn smoothed_inverse_with_derivative<T: Scalar>(
    s: T,
    coupling: &Coupling<T>,
    delta: T,
) -> Result<(T, T)> {
    if !s.is_finite() {
        return Err(Error::Domain(format!("non-finite argument {s}")));
    }
    if delta < T::zero() {
        return Err(Error::InvalidInput(format!("delta must be >= 0, got {delta}")));
    }
    if delta == T::zero() {
        let v = coupling.inverse(s)?;
        return Ok((v, coupling.inverse_derivative(s)?));
    }
    let knee = coupling.g(delta);
    if s >= knee {
        return Ok((coupling.inverse(s)?, coupling.inverse_derivative(s)?));
    }
    let ramp = (knee * ((s - knee) / knee).exp()).max(T::min_positive_value());
    let ramp_slope = ramp / knee;
    let v = coupling.inverse(ramp)?.max(T::min_positive_value());
    Ok((v, coupling.inverse_derivative(ramp)? * ramp_slope))
}

/// Closed-form and tabulated potentials on the 1-torus.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential<T> {
    Zero,
    /// `c sin(2πx)`.
    Sine(T),
    /// `π cos(4πx)`.
    Cos4Pi,
    /// `π cos(2πx)`.
    Cos2Pi,
    /// Uniform samples on `[0,1)`, linearly interpolated with periodic wrap.
    Table(Vec<T>),
}

impl<T: Scalar> Potential<T> {
    pub fn eval(&self, x: T) -> T {
        let two_pi = T::two() * T::PI();
        match self {
            Potential::Zero => T::zero(),
            Potential::Sine(c) => *c * (two_pi * x).sin(),
            Potential::Cos4Pi => T::PI() * (T::two() * two_pi * x).cos(),
            Potential::Cos2Pi => T::PI() * (two_pi * x).cos(),
            Potential::Table(v) => {
                let n = v.len();
                let t = (x - x.floor()) * T::from_count(n);
                let i = t.floor().to_usize().unwrap_or(0).min(n - 1);
                let w = t - T::from_count(i);
                v[i] * (T::one() - w) + v[(i + 1) % n] * w
            }
        }
    }

    /// `V'(x)`; tables use the centered difference of the interpolant.
    pub fn derivative(&self, x: T) -> T {
        let two_pi = T::two() * T::PI();
        match self {
            Potential::Zero => T::zero(),
            Potential::Sine(c) => *c * two_pi * (two_pi * x).cos(),
            Potential::Cos4Pi => -T::PI() * T::two() * two_pi * (T::two() * two_pi * x).sin(),
            Potential::Cos2Pi => -T::PI() * two_pi * (two_pi * x).sin(),
            Potential::Table(v) => {
                let n = T::from_count(v.len());
                let dx = T::half() / n;
                (self.eval(x + dx) - self.eval(x - dx)) / (T::two() * dx)
            }
        }
    }

    pub fn sample(&self, grid: &TorusGrid<T>) -> GridField<T> {
        GridField::from_fn(*grid, |x| self.eval(x))
    }

    /// Values at the cell midpoints `x_{i+1/2}`.
    pub fn sample_faces(&self, grid: &TorusGrid<T>) -> Vec<T> {
        grid.faces().into_iter().map(|x| self.eval(x)).collect()
    }

    /// `max V - min V` over grid samples.
    pub fn oscillation(&self, grid: &TorusGrid<T>) -> T {
        let s = self.sample(grid);
        s.max() - s.min()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero)
    }
}

/// Artificial viscosity `σ` and inverse-smoothing width `δ`, both `≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization<T> {
    pub sigma: T,
    pub delta: T,
}

impl<T: Scalar> Regularization<T> {
    pub fn new(sigma: T, delta: T) -> Result<Self> {
        if !(sigma >= T::zero()) || !(delta >= T::zero()) {
            return Err(Error::InvalidInput(format!(
                "regularization needs sigma, delta >= 0, got sigma={sigma}, delta={delta}"
            )));
        }
        Ok(Self { sigma, delta })
    }

    pub fn none() -> Self {
        Self {
            sigma: T::zero(),
            delta: T::zero(),
        }
    }

    /// `σ = δ = ε`, the default schedule in degenerate regimes.
    pub fn tied(eps: T) -> Self {
        Self {
            sigma: eps,
            delta: eps,
        }
    }

    pub fn is_none(&self) -> bool {
        self.sigma == T::zero() && self.delta == T::zero()
    }
}

/// Coupling plus potential.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub coupling: Coupling<T>,
    pub potential: Potential<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(coupling: Coupling<T>, potential: Potential<T>) -> Self {
        Self {
            coupling,
            potential,
        }
    }

    /// `g = m`, `V = c sin(2πx)`.
    pub fn sine(c: T) -> Self {
        Self::new(Coupling::linear(), Potential::Sine(c))
    }

    /// `g = m`, `V = π cos(2πx)`.
    pub fn exdp() -> Self {
        Self::new(Coupling::linear(), Potential::Cos2Pi)
    }

    /// `g = m`, `V = π cos(4πx)`.
    pub fn bbb() -> Self {
        Self::new(Coupling::linear(), Potential::Cos4Pi)
    }

    pub fn satisfies_osc(&self, grid: &TorusGrid<T>) -> bool {
        check_assumption_osc(&self.coupling, &self.potential, grid)
    }
}

/// `g(1) - osc V > inf g`: the density stays bounded away from zero.
pub fn check_assumption_osc<T: Scalar>(
    coupling: &Coupling<T>,
    potential: &Potential<T>,
    grid: &TorusGrid<T>,
) -> bool {
    coupling.g(T::one()) - potential.oscillation(grid) > coupling.infimum()
}
