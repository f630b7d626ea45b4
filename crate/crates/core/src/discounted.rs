//! The discounted system on the 1-torus, solved through its reduction to a
//! single quasilinear equation for `u`:
//!
//! ```text
//! (ĝ⁻¹(εu + u_x²/2 + λV) u_x)_x - ε (ĝ⁻¹(εu + u_x²/2 + λV) - 1) + σ u_xx = 0
//! ```
//!
//! The flux `m u_x` is evaluated on cell faces (compact differences, density
//! from the face average of `u`), the zeroth-order density on nodes (central
//! gradient). The Jacobian is therefore cyclic tridiagonal, and summing the
//! residual telescopes the flux exactly, so a converged solution carries the
//! discrete mass identity `ε(∫m - 1) = -∫residual`.

use crate::error::{Error, Result};
use crate::grid::{check_same, gradient_central, integrate, GridField, TorusGrid};
use crate::linalg::{Bordered, CyclicBanded};
use crate::model::{smoothed_inverse_with_derivative, Model, Regularization};
use crate::scalar::Scalar;

/// Newton and continuation controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    pub tol: T,
    pub max_iters: usize,
    pub max_backtracks: usize,
    pub min_step: T,
    pub initial_step: T,
    pub growth: T,
    /// Newton iteration count at or below which a continuation step counts as fast.
    pub fast_iters: usize,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-10),
            max_iters: 50,
            max_backtracks: 20,
            min_step: T::lit(1e-4),
            initial_step: T::one(),
            growth: T::lit(1.5),
            fast_iters: 4,
        }
    }
}

/// A converged (or, for a stalled continuation, last accepted) iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedSolution<T> {
    pub epsilon: T,
    pub u: GridField<T>,
    pub m: GridField<T>,
    pub regularization: Regularization<T>,
    pub residual_sup: T,
    pub newton_iters: usize,
    pub continuation_steps: usize,
    /// Continuation parameter the iterate solves; `1` for a full solve.
    pub lambda_cont: T,
}

impl<T: Scalar> DiscountedSolution<T> {
    pub fn grid(&self) -> &TorusGrid<T> {
        self.u.grid()
    }

    pub fn mass(&self) -> T {
        integrate(&self.m)
    }

    pub fn min_m(&self) -> T {
        self.m.min()
    }

    /// `(ε min u, ε max u)`.
    pub fn eps_u_range(&self) -> (T, T) {
        (self.epsilon * self.u.min(), self.epsilon * self.u.max())
    }

    /// `-ε ∫u`, the integral estimate of the ergodic constant.
    pub fn hbar_estimate(&self) -> T {
        -self.epsilon * integrate(&self.u)
    }

    /// `u - ∫u`.
    pub fn fluctuation(&self) -> GridField<T> {
        let mean = integrate(&self.u);
        self.u.map(|v| v - mean)
    }
}

/// Discrete linearization of the reduced operator at one iterate.
#[derive(Debug, Clone)]
pub struct LinearizedOperator<T> {
    matrix: CyclicBanded<T>,
    /// `a¹¹ = m + (g⁻¹)'(g(m)) u_x²` per node.
    diffusion: Vec<T>,
    /// Coefficient of `φ_x` from the ε-dependence of the density.
    drift: Vec<T>,
    /// Coefficient of `φ`.
    reaction: Vec<T>,
}

impl<T: Scalar> LinearizedOperator<T> {
    pub fn matrix(&self) -> &CyclicBanded<T> {
        &self.matrix
    }

    pub fn diffusion(&self) -> &[T] {
        &self.diffusion
    }

    pub fn drift(&self) -> &[T] {
        &self.drift
    }

    pub fn reaction(&self) -> &[T] {
        &self.reaction
    }

    pub fn apply(&self, phi: &[T]) -> Vec<T> {
        self.matrix.apply(phi)
    }

    /// Smallest diffusion coefficient: the discrete ellipticity constant.
    pub fn ellipticity(&self) -> T {
        self.diffusion
            .iter()
            .fold(T::infinity(), |a, &b| a.min(b))
    }

    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        Bordered::new(self.matrix.clone()).solve(rhs, &[])
    }
}

/// Samples of the problem data on one grid.
struct Stencil<'a, T> {
    n: usize,
    h: T,
    eps: T,
    lambda: T,
    model: &'a Model<T>,
    reg: Regularization<T>,
    v_node: Vec<T>,
    v_face: Vec<T>,
}

impl<'a, T: Scalar> Stencil<'a, T> {
    fn new(grid: &TorusGrid<T>, eps: T, lambda: T, model: &'a Model<T>, reg: Regularization<T>) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::InvalidInput("the discounted solver is one-dimensional".into()));
        }
        if !(eps > T::zero() && eps.is_finite()) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {eps}")));
        }
        if grid.n() < 3 {
            return Err(Error::InvalidInput("need at least 3 grid nodes".into()));
        }
        Ok(Self {
            n: grid.n(),
            h: grid.h(),
            eps,
            lambda,
            model,
            reg,
            v_node: model.potential.sample(grid).into_values(),
            v_face: model.potential.sample_faces(grid),
        })
    }

    #[inline]
    fn inv(&self, s: T) -> Result<(T, T)> {
        smoothed_inverse_with_derivative(s, &self.model.coupling, self.reg.delta)
    }

    #[inline]
    fn next(&self, i: usize) -> usize {
        if i + 1 == self.n {
            0
        } else {
            i + 1
        }
    }

    #[inline]
    fn prev(&self, i: usize) -> usize {
        if i == 0 {
            self.n - 1
        } else {
            i - 1
        }
    }

    /// `u = shift + w`; only `εu` needs the shift, differences use `w`.
    fn residual(&self, shift: T, w: &[T]) -> Result<Vec<T>> {
        let (h, eps) = (self.h, self.eps);
        let es = eps * shift;
        let flux: Vec<T> = (0..self.n)
            .map(|i| {
                let j = self.next(i);
                let q = (w[j] - w[i]) / h;
                let s = es + eps * (w[i] + w[j]) * T::half() + q * q * T::half() + self.lambda * self.v_face[i];
                Ok(self.inv(s)?.0 * q)
            })
            .collect::<Result<_>>()?;
        let h2 = h * h;
        (0..self.n)
            .map(|i| {
                let (l, r) = (self.prev(i), self.next(i));
                let p = (w[r] - w[l]) / (T::two() * h);
                let s = es + eps * w[i] + p * p * T::half() + self.lambda * self.v_node[i];
                let m = self.inv(s)?.0;
                Ok((flux[i] - flux[l]) / h - eps * (m - T::one())
                    + self.reg.sigma * (w[r] - T::two() * w[i] + w[l]) / h2)
            })
            .collect()
    }

    fn density(&self, shift: T, w: &[T]) -> Result<Vec<T>> {
        (0..self.n)
            .map(|i| {
                let (l, r) = (self.prev(i), self.next(i));
                let p = (w[r] - w[l]) / (T::two() * self.h);
                let s = self.eps * (shift + w[i]) + p * p * T::half() + self.lambda * self.v_node[i];
                Ok(self.inv(s)?.0)
            })
            .collect()
    }

    fn jacobian(&self, shift: T, w: &[T]) -> Result<LinearizedOperator<T>> {
        let (n, h, eps) = (self.n, self.h, self.eps);
        let es = eps * shift;
        let half = T::half();
        // face derivatives: (∂F/∂w_left, ∂F/∂w_right)
        let mut dfl = vec![T::zero(); n];
        let mut dfr = vec![T::zero(); n];
        for i in 0..n {
            let j = self.next(i);
            let q = (w[j] - w[i]) / h;
            let s = es + eps * (w[i] + w[j]) * half + q * q * half + self.lambda * self.v_face[i];
            let (g, dg) = self.inv(s)?;
            dfr[i] = dg * (eps * half + q / h) * q + g / h;
            dfl[i] = dg * (eps * half - q / h) * q - g / h;
        }
        let mut a = CyclicBanded::zeros(n, 1);
        let mut diffusion = vec![T::zero(); n];
        let mut drift = vec![T::zero(); n];
        let mut reaction = vec![T::zero(); n];
        let sh = self.reg.sigma / (h * h);
        for i in 0..n {
            let (l, r) = (self.prev(i), self.next(i));
            let p = (w[r] - w[l]) / (T::two() * h);
            let s = es + eps * w[i] + p * p * half + self.lambda * self.v_node[i];
            let (m, dm) = self.inv(s)?;
            let c = eps * dm * p / (T::two() * h);
            a.add(i, 1, dfr[i] / h - c + sh);
            a.add(i, 0, (dfl[i] - dfr[l]) / h - eps * eps * dm - T::two() * sh);
            a.add(i, -1, -dfl[l] / h + c + sh);
            diffusion[i] = m + dm * p * p + self.reg.sigma;
            drift[i] = -eps * dm * p;
            reaction[i] = -eps * eps * dm;
        }
        Ok(LinearizedOperator {
            matrix: a,
            diffusion,
            drift,
            reaction,
        })
    }
}

fn sup<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, x| a.max(x.abs()))
}

fn split_shift<T: Scalar>(u: &GridField<T>) -> (T, Vec<T>) {
    let shift = u.mean();
    (shift, u.values().iter().map(|&v| v - shift).collect())
}

/// Node residual of the reduced equation at continuation parameter `lambda_cont`.
pub fn residual<T: Scalar>(
    u: &GridField<T>,
    eps: T,
    lambda_cont: T,
    model: &Model<T>,
    reg: &Regularization<T>,
) -> Result<GridField<T>> {
    let st = Stencil::new(u.grid(), eps, lambda_cont, model, *reg)?;
    let (shift, w) = split_shift(u);
    GridField::new(*u.grid(), st.residual(shift, &w)?)
}

/// Exact derivative of [`residual`] with respect to the node values of `u`.
pub fn assemble_jacobian<T: Scalar>(
    u: &GridField<T>,
    eps: T,
    lambda_cont: T,
    model: &Model<T>,
    reg: &Regularization<T>,
) -> Result<LinearizedOperator<T>> {
    let st = Stencil::new(u.grid(), eps, lambda_cont, model, *reg)?;
    let (shift, w) = split_shift(u);
    st.jacobian(shift, &w)
}

/// `m = ĝ⁻¹_δ(εu + |Du|²/2 + V)` with the central gradient.
pub fn recover_density<T: Scalar>(
    u: &GridField<T>,
    eps: T,
    model: &Model<T>,
    reg: &Regularization<T>,
) -> Result<GridField<T>> {
    let st = Stencil::new(u.grid(), eps, T::one(), model, *reg)?;
    let (shift, w) = split_shift(u);
    GridField::new(*u.grid(), st.density(shift, &w)?)
}

/// `m = ĝ⁻¹_δ(εu + u_x²/2 + V - H̄)` from a given gradient; `ε = 0` allowed.
///
/// With `δ = 0`, arguments that are negative only at rounding level are
/// read as zero (positive-part convention on the contact set).
pub fn density_from_gradient<T: Scalar>(
    eps_u: &GridField<T>,
    u_x: &GridField<T>,
    hbar: T,
    model: &Model<T>,
    reg: &Regularization<T>,
) -> Result<GridField<T>> {
    check_same(eps_u.grid(), u_x.grid())?;
    let v = model.potential.sample(u_x.grid());
    let vals = eps_u
        .values()
        .iter()
        .zip(u_x.values())
        .zip(v.values())
        .map(|((&eu, &p), &vi)| {
            let mut s = eu + p * p * T::half() + vi - hbar;
            let slack = T::lit(64.0) * T::epsilon() * (T::one() + vi.abs() + p * p);
            if reg.delta == T::zero() && s < T::zero() && s > -slack {
                s = T::zero();
            }
            smoothed_inverse_with_derivative(s, &model.coupling, reg.delta).map(|r| r.0)
        })
        .collect::<Result<_>>()?;
    GridField::new(*u_x.grid(), vals)
}

/// Residual level that rounding alone produces for an iterate of size `scale`
/// under an operator of row norm `norm`.
fn rounding_floor<T: Scalar>(a: &CyclicBanded<T>, w: &[T]) -> T {
    let mut norm = T::zero();
    for i in 0..a.n() {
        let row = (-1..=1).map(|o| a.get(i, o).abs()).sum::<T>();
        norm = norm.max(row);
    }
    T::lit(16.0) * T::epsilon() * norm * (T::one() + sup(w))
}

/// Damped Newton on the reduced equation at fixed `lambda_cont`.
///
/// Steps are halved (at most `max_backtracks` times) until the residual sup
/// norm decreases. The iteration stops at `tol`, or at the rounding floor of
/// the discrete operator when that is larger (fine grids with `h⁻²` scaling).
pub fn newton_solve<T: Scalar>(
    eps: T,
    lambda_cont: T,
    model: &Model<T>,
    reg: &Regularization<T>,
    u_init: &GridField<T>,
    opts: &SolverOptions<T>,
) -> Result<DiscountedSolution<T>> {
    let grid = *u_init.grid();
    let st = Stencil::new(&grid, eps, lambda_cont, model, *reg)?;
    let (shift, mut w) = split_shift(u_init);
    let mut res = st.residual(shift, &w)?;
    let mut r = sup(&res);
    let mut best = r;
    let mut iters = 0;
    loop {
        let jac = st.jacobian(shift, &w)?;
        let floor = rounding_floor(&jac.matrix, &w);
        if r <= opts.tol.max(floor) {
            break;
        }
        if iters == opts.max_iters {
            return Err(Error::NonConvergence {
                iters,
                best_residual: best.as_f64(),
            });
        }
        iters += 1;
        let rhs: Vec<T> = res.iter().map(|&v| -v).collect();
        let d = jac.solve(&rhs)?;
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..=opts.max_backtracks {
            let trial: Vec<T> = w.iter().zip(&d).map(|(&a, &b)| a + t * b).collect();
            if let Ok(tr) = st.residual(shift, &trial) {
                let rt = sup(&tr);
                if rt.is_finite() && rt < r {
                    w = trial;
                    res = tr;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            t *= T::half();
        }
        best = best.min(r);
        if !accepted {
            if r <= opts.tol.max(T::lit(16.0) * floor) {
                break;
            }
            return Err(Error::NonConvergence {
                iters,
                best_residual: best.as_f64(),
            });
        }
    }
    let m = st.density(shift, &w)?;
    let u = w.iter().map(|&v| shift + v).collect();
    Ok(DiscountedSolution {
        epsilon: eps,
        u: GridField::new(grid, u)?,
        m: GridField::new(grid, m)?,
        regularization: *reg,
        residual_sup: r,
        newton_iters: iters,
        continuation_steps: 0,
        lambda_cont,
    })
}

/// Outcome of a continuation run, kept even when it stalls.
#[derive(Debug, Clone)]
pub struct ContinuationReport<T> {
    /// Last accepted iterate (`lambda_cont < 1` when stalled).
    pub last: DiscountedSolution<T>,
    pub failure: Option<Error>,
}

/// `u₀ ≡ g(1)/ε`, the exact solution for `V ≡ 0`.
pub fn base_point<T: Scalar>(grid: &TorusGrid<T>, eps: T, model: &Model<T>) -> GridField<T> {
    GridField::constant(*grid, model.coupling.g(T::one()) / eps)
}

/// Continuation in the potential from `u₀ ≡ g(1)/ε`, returning the full trace
/// on failure.
pub fn continuation_report<T: Scalar>(
    grid: &TorusGrid<T>,
    eps: T,
    model: &Model<T>,
    reg: &Regularization<T>,
    opts: &SolverOptions<T>,
) -> Result<ContinuationReport<T>> {
    Stencil::new(grid, eps, T::zero(), model, *reg)?;
    let u0 = base_point(grid, eps, model);
    let mut last = newton_solve(eps, T::zero(), model, reg, &u0, opts)?;
    let mut lambda = T::zero();
    let mut step = opts.initial_step;
    let mut steps = 0;
    let mut iters = last.newton_iters;
    let mut last_residual = last.residual_sup;
    while lambda < T::one() {
        let target = (lambda + step).min(T::one());
        match newton_solve(eps, target, model, reg, &last.u, opts) {
            Ok(sol) => {
                steps += 1;
                iters += sol.newton_iters;
                if sol.newton_iters <= opts.fast_iters {
                    step *= opts.growth;
                }
                lambda = target;
                last_residual = sol.residual_sup;
                last = sol;
            }
            Err(e) => {
                if let Error::NonConvergence { best_residual, .. } = e {
                    last_residual = T::lit(best_residual);
                }
                // other failures keep the residual of the last accepted step
                step *= T::half();
                if step < opts.min_step {
                    last.continuation_steps = steps;
                    last.newton_iters = iters;
                    return Ok(ContinuationReport {
                        last,
                        failure: Some(Error::ContinuationStalled {
                            lambda: lambda.as_f64(),
                            step: step.as_f64(),
                            residual: last_residual.as_f64(),
                        }),
                    });
                }
            }
        }
    }
    last.continuation_steps = steps;
    last.newton_iters = iters;
    Ok(ContinuationReport { last, failure: None })
}

/// Continuation in the potential; `ContinuationStalled` when the step
/// underflows `min_step` before reaching the full potential.
pub fn continuation_solve<T: Scalar>(
    grid: &TorusGrid<T>,
    eps: T,
    model: &Model<T>,
    reg: &Regularization<T>,
    opts: &SolverOptions<T>,
) -> Result<DiscountedSolution<T>> {
    let rep = continuation_report(grid, eps, model, reg, opts)?;
    match rep.failure {
        None => Ok(rep.last),
        Some(e) => Err(e),
    }
}

/// Finite-difference check of the Jacobian: largest entry mismatch between
/// the assembled matrix and central differences of the residual with step `t`.
pub fn jacobian_fd_mismatch<T: Scalar>(
    u: &GridField<T>,
    eps: T,
    lambda_cont: T,
    model: &Model<T>,
    reg: &Regularization<T>,
    t: T,
) -> Result<T> {
    let st = Stencil::new(u.grid(), eps, lambda_cont, model, *reg)?;
    let (shift, w) = split_shift(u);
    let dense = st.jacobian(shift, &w)?.matrix.to_dense();
    let mut worst = T::zero();
    for j in 0..w.len() {
        let (mut wp, mut wm) = (w.clone(), w.clone());
        wp[j] += t;
        wm[j] -= t;
        let (rp, rm) = (st.residual(shift, &wp)?, st.residual(shift, &wm)?);
        for i in 0..w.len() {
            worst = worst.max(((rp[i] - rm[i]) / (T::two() * t) - dense[i][j]).abs());
        }
    }
    Ok(worst)
}

/// Discrete derivative helpers on node values.
fn central<T: Scalar>(f: &GridField<T>) -> Vec<T> {
    gradient_central(f).component(0).to_vec()
}

/// `|∫[(1+m)/2 |Du|² + m g(m)] - ∫[(m-1)V + g(m)]|`.
pub fn energy_identity_residual<T: Scalar>(sol: &DiscountedSolution<T>, model: &Model<T>) -> T {
    let ux = central(&sol.u);
    let v = model.potential.sample(sol.grid());
    let g = &model.coupling;
    let h = sol.grid().h();
    let mut acc = T::zero();
    for i in 0..ux.len() {
        let m = sol.m.values()[i];
        let lhs = (T::one() + m) * T::half() * ux[i] * ux[i] + m * g.g(m);
        let rhs = (m - T::one()) * v.values()[i] + g.g(m);
        acc += lhs - rhs;
    }
    (acc * h).abs()
}

/// Fourth-order central derivative.
fn central4<T: Scalar>(f: &GridField<T>) -> Vec<T> {
    let v = f.values();
    let n = v.len();
    let c = T::one() / (T::lit(12.0) * f.grid().h());
    (0..n)
        .map(|i| {
            let at = |k: isize| v[(i as isize + k).rem_euclid(n as isize) as usize];
            (at(-2) - T::lit(8.0) * at(-1) + T::lit(8.0) * at(1) - at(2)) * c
        })
        .collect()
}

/// Sup norm of `m_x (u_x² + g'(m) m) - (2ε m u_x - ε u_x + m V_x)`.
pub fn density_formula_residual<T: Scalar>(sol: &DiscountedSolution<T>, model: &Model<T>) -> T {
    let ux = central4(&sol.u);
    let mx = central4(&sol.m);
    let eps = sol.epsilon;
    let grid = sol.grid();
    (0..ux.len())
        .map(|i| {
            let m = sol.m.values()[i];
            let vx = model.potential.derivative(grid.coord(i));
            let lhs = mx[i] * (ux[i] * ux[i] + model.coupling.g_prime(m) * m);
            let rhs = T::two() * eps * m * ux[i] - eps * ux[i] + m * vx;
            (lhs - rhs).abs()
        })
        .fold(T::zero(), |a, b| a.max(b))
}

/// Bounds `g(1) - max V ≤ ε u ≤ g(1) - min V` from the extremal points of `u`.
pub fn discount_bounds<T: Scalar>(model: &Model<T>, grid: &TorusGrid<T>) -> (T, T) {
    let v = model.potential.sample(grid);
    let g1 = model.coupling.g(T::one());
    (g1 - v.max(), g1 - v.min())
}

/// `∫(m₁ - m₂)(g(m₁) - g(m₂)) + (m₁ + m₂)/2 |Du₁ - Du₂|²`, zero iff the two
/// solutions coincide.
pub fn lasry_lions<T: Scalar>(
    a: &DiscountedSolution<T>,
    b: &DiscountedSolution<T>,
    model: &Model<T>,
) -> Result<T> {
    check_same(a.grid(), b.grid())?;
    let (pa, pb) = (central(&a.u), central(&b.u));
    let g = &model.coupling;
    let vals: Vec<T> = (0..pa.len())
        .map(|i| {
            let (m1, m2) = (a.m.values()[i], b.m.values()[i]);
            let d = pa[i] - pb[i];
            (m1 - m2) * (g.g(m1) - g.g(m2)) + (m1 + m2) * T::half() * d * d
        })
        .collect();
    Ok(integrate(&GridField::new(*a.grid(), vals)?))
}
