//! The ergodic limit and the first-order correctors of the expansion
//!
//! ```text
//! u^ε ≈ -H̄/ε + u + λ + ε v,    m^ε ≈ m + ε θ.
//! ```
//!
//! `(u, m, H̄)` is computed by a direct Newton solve of the ε = 0 system with
//! the same face-flux stencil as the discounted solver. The correctors come
//! from the symmetric form
//!
//! ```text
//! K[φ₁, φ₂] = ∫ m Dφ₁·Dφ₂ + (εφ₁ + Du·Dφ₁)(εφ₂ + Du·Dφ₂)/g'(m)
//! ```
//!
//! (face-averaged `m` in the first term, central gradients in the second).
//! At ε = 0 the constant λ is an extra unknown, closed by the mass condition
//! `∫θ = 0` that the next order of the expansion imposes, and `∫v = 0` fixes
//! the gauge. The same augmented solve, fed with second-order sources, gives
//! the mean `μ₁` of the ε-term.

use crate::discounted::{DiscountedSolution, SolverOptions};
use crate::error::{Error, Result};
use crate::grid::{check_same, integrate, GridField, TorusGrid};
use crate::linalg::{Bordered, CyclicBanded};
use crate::model::{smoothed_inverse_with_derivative, Model, Regularization};
use crate::scalar::Scalar;

/// Limit triple `(u, m, H̄)` with `∫u = 0`, `∫m = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicTriple<T> {
    pub u: GridField<T>,
    pub m: GridField<T>,
    pub hbar: T,
}

impl<T: Scalar> ErgodicTriple<T> {
    pub fn new(u: GridField<T>, m: GridField<T>, hbar: T) -> Result<Self> {
        check_same(u.grid(), m.grid())?;
        if u.grid().dim() != 1 {
            return Err(Error::InvalidInput("ergodic triples are one-dimensional".into()));
        }
        Ok(Self { u, m, hbar })
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        self.u.grid()
    }

    /// Sup of `|Du|²/2 + V - g(m) - H̄` over nodes with `m > floor`.
    pub fn hj_defect(&self, model: &Model<T>, floor: T) -> T {
        let p = central(self.u.values(), self.grid().h());
        let v = model.potential.sample(self.grid());
        let mut worst = T::zero();
        for i in 0..p.len() {
            let m = self.m.values()[i];
            if m > floor {
                let r = p[i] * p[i] * T::half() + v.values()[i] - model.coupling.g(m) - self.hbar;
                worst = worst.max(r.abs());
            }
        }
        worst
    }
}

/// `(v, θ, λ)` solving the corrector system at discount `eps_used` (0 for the limit).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorSolution<T> {
    pub v: GridField<T>,
    pub theta: GridField<T>,
    pub lambda: T,
    pub eps_used: T,
    /// Mean `μ₁` of the ε-term, fixed by mass conservation at second order.
    pub mean_shift: T,
    pub routes: Option<RouteAgreement<T>>,
}

/// Comparison of the direct augmented solve with ε-extrapolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteAgreement<T> {
    pub lambda_direct: T,
    pub lambda_extrapolated: T,
    pub v_sup: T,
    pub theta_sup: T,
}

impl<T: Scalar> RouteAgreement<T> {
    pub fn lambda_gap(&self) -> T {
        (self.lambda_direct - self.lambda_extrapolated).abs()
    }

    pub fn worst(&self) -> T {
        self.lambda_gap().max(self.v_sup).max(self.theta_sup)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorOptions<T> {
    pub m_floor: T,
    /// Discounts of the extrapolation route, decreasing.
    pub route_eps: Vec<T>,
    pub route_tol: T,
}

impl<T: Scalar> Default for CorrectorOptions<T> {
    fn default() -> Self {
        Self {
            m_floor: T::lit(1e-6),
            route_eps: vec![T::lit(1e-2), T::lit(5e-3), T::lit(2.5e-3)],
            route_tol: T::lit(1e-4),
        }
    }
}

fn central<T: Scalar>(v: &[T], h: T) -> Vec<T> {
    let n = v.len();
    let c = T::one() / (T::two() * h);
    (0..n).map(|i| (v[(i + 1) % n] - v[(i + n - 1) % n]) * c).collect()
}

fn sup<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, x| a.max(x.abs()))
}

fn sup_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc.max((*x - *y).abs()))
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::from_count(v.len())
}

// ---------------------------------------------------------------------------
// ergodic solve

struct ErgodicStencil<'a, T> {
    n: usize,
    h: T,
    lambda: T,
    model: &'a Model<T>,
    delta: T,
    v_node: Vec<T>,
    v_face: Vec<T>,
}

impl<'a, T: Scalar> ErgodicStencil<'a, T> {
    fn inv(&self, s: T) -> Result<(T, T)> {
        smoothed_inverse_with_derivative(s, &self.model.coupling, self.delta)
    }

    /// Node residuals `(F_{i+1/2} - F_{i-1/2})/h` followed by the mass defect.
    fn residual(&self, u: &[T], hbar: T) -> Result<(Vec<T>, T)> {
        let (n, h) = (self.n, self.h);
        let mut flux = vec![T::zero(); n];
        for i in 0..n {
            let q = (u[(i + 1) % n] - u[i]) / h;
            let s = q * q * T::half() + self.lambda * self.v_face[i] - hbar;
            flux[i] = self.inv(s)?.0 * q;
        }
        let r = (0..n).map(|i| (flux[i] - flux[(i + n - 1) % n]) / h).collect();
        let p = central(u, h);
        let mut mass = T::zero();
        for i in 0..n {
            mass += self.inv(p[i] * p[i] * T::half() + self.lambda * self.v_node[i] - hbar)?.0;
        }
        Ok((r, mass * h - T::one()))
    }

    fn density(&self, u: &[T], hbar: T) -> Result<Vec<T>> {
        let p = central(u, self.h);
        (0..self.n)
            .map(|i| Ok(self.inv(p[i] * p[i] * T::half() + self.lambda * self.v_node[i] - hbar)?.0))
            .collect()
    }

    /// Newton step for unknowns `(u, H̄, μ)` where `μ` multiplies a column of
    /// ones (the flux rows sum to zero) and `Σu = 0` closes the system.
    fn step(&self, u: &[T], hbar: T, r: &[T], mass: T) -> Result<(Vec<T>, T)> {
        let (n, h) = (self.n, self.h);
        let mut a = CyclicBanded::zeros(n, 1);
        let mut col_h = vec![T::zero(); n];
        let mut dfl = vec![T::zero(); n];
        let mut dfr = vec![T::zero(); n];
        let mut dfh = vec![T::zero(); n];
        for i in 0..n {
            let q = (u[(i + 1) % n] - u[i]) / h;
            let s = q * q * T::half() + self.lambda * self.v_face[i] - hbar;
            let (g, dg) = self.inv(s)?;
            dfr[i] = dg * q * q / h + g / h;
            dfl[i] = -dfr[i];
            dfh[i] = -dg * q;
        }
        for i in 0..n {
            let l = (i + n - 1) % n;
            a.add(i, 1, dfr[i] / h);
            a.add(i, 0, (dfl[i] - dfr[l]) / h);
            a.add(i, -1, -dfl[l] / h);
            col_h[i] = (dfh[i] - dfh[l]) / h;
        }
        let p = central(u, h);
        let mut row_mass = vec![T::zero(); n];
        let mut dmass_dh = T::zero();
        for i in 0..n {
            let (_, dg) = self.inv(p[i] * p[i] * T::half() + self.lambda * self.v_node[i] - hbar)?;
            // m_i depends on u_{i±1} through p_i
            row_mass[(i + 1) % n] += dg * p[i] * T::half();
            row_mass[(i + n - 1) % n] -= dg * p[i] * T::half();
            dmass_dh -= dg * h;
        }
        let mut sys = Bordered::new(a);
        sys.push(col_h, row_mass, vec![dmass_dh]);
        sys.push(vec![T::one(); n], vec![T::one(); n], vec![T::zero(), T::zero()]);
        let rhs: Vec<T> = r.iter().map(|&x| -x).collect();
        let gauge = -u.iter().copied().sum::<T>();
        let d = sys.solve(&rhs, &[-mass, gauge])?;
        Ok((d[..n].to_vec(), d[n]))
    }
}

/// Direct solve of the ε = 0 system with continuation in the potential from
/// `(u, m, H̄) = (0, 1, -g(1))`.
pub fn solve_ergodic<T: Scalar>(
    grid: &TorusGrid<T>,
    model: &Model<T>,
    reg: &Regularization<T>,
    opts: &SolverOptions<T>,
) -> Result<ErgodicTriple<T>> {
    if grid.dim() != 1 || grid.n() < 3 {
        return Err(Error::InvalidInput("ergodic solve needs a 1D grid with n >= 3".into()));
    }
    let mut st = ErgodicStencil {
        n: grid.n(),
        h: grid.h(),
        lambda: T::zero(),
        model,
        delta: reg.delta,
        v_node: model.potential.sample(grid).into_values(),
        v_face: model.potential.sample_faces(grid),
    };
    let mut u = vec![T::zero(); grid.n()];
    let mut hbar = -model.coupling.g(T::one());
    let mut lambda = T::zero();
    let mut step = opts.initial_step;
    while lambda < T::one() {
        let target = (lambda + step).min(T::one());
        st.lambda = target;
        match ergodic_newton(&st, &u, hbar, opts) {
            Ok((nu, nh, iters)) => {
                u = nu;
                hbar = nh;
                lambda = target;
                if iters <= opts.fast_iters {
                    step *= opts.growth;
                }
            }
            Err(e) => {
                step *= T::half();
                if step < opts.min_step {
                    let residual = match e {
                        Error::NonConvergence { best_residual, .. } => best_residual,
                        _ => f64::NAN,
                    };
                    return Err(Error::ContinuationStalled {
                        lambda: lambda.as_f64(),
                        step: step.as_f64(),
                        residual,
                    });
                }
            }
        }
    }
    st.lambda = T::one();
    let m = st.density(&u, hbar)?;
    ErgodicTriple::new(GridField::new(*grid, u)?, GridField::new(*grid, m)?, hbar)
}

fn ergodic_newton<T: Scalar>(
    st: &ErgodicStencil<'_, T>,
    u0: &[T],
    h0: T,
    opts: &SolverOptions<T>,
) -> Result<(Vec<T>, T, usize)> {
    let measure = |r: &[T], mass: T| sup(r).max(mass.abs());
    let mut u = u0.to_vec();
    let mut hbar = h0;
    let (mut r, mut mass) = st.residual(&u, hbar)?;
    let mut res = measure(&r, mass);
    let mut best = res;
    let floor = T::lit(64.0) * T::epsilon() / (st.h * st.h);
    for iters in 0..=opts.max_iters {
        if res <= opts.tol.max(floor) {
            return Ok((u, hbar, iters));
        }
        if iters == opts.max_iters {
            break;
        }
        let (du, dh) = st.step(&u, hbar, &r, mass)?;
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..=opts.max_backtracks {
            let tu: Vec<T> = u.iter().zip(&du).map(|(&a, &b)| a + t * b).collect();
            let th = hbar + t * dh;
            if let Ok((tr, tm)) = st.residual(&tu, th) {
                let tres = measure(&tr, tm);
                if tres.is_finite() && tres < res {
                    u = tu;
                    hbar = th;
                    r = tr;
                    mass = tm;
                    res = tres;
                    accepted = true;
                    break;
                }
            }
            t *= T::half();
        }
        best = best.min(res);
        if !accepted {
            break;
        }
    }
    if res <= opts.tol.max(T::lit(16.0) * floor) {
        return Ok((u, hbar, opts.max_iters));
    }
    Err(Error::NonConvergence {
        iters: opts.max_iters,
        best_residual: best.as_f64(),
    })
}

/// Ergodic triple from the two finest rungs of a discounted sweep by linear
/// extrapolation in ε of `-ε∫u^ε`, `u^ε - ∫u^ε` and `m^ε`.
pub fn extrapolate_ergodic<T: Scalar>(sweep: &[DiscountedSolution<T>]) -> Result<ErgodicTriple<T>> {
    if sweep.len() < 2 {
        return Err(Error::InvalidInput("extrapolation needs at least two discounts".into()));
    }
    let mut rows: Vec<&DiscountedSolution<T>> = sweep.iter().collect();
    rows.sort_by(|a, b| a.epsilon.partial_cmp(&b.epsilon).unwrap());
    let (a, b) = (rows[0], rows[1]);
    check_same(a.grid(), b.grid())?;
    // value at 0 of the line through (ε_a, f_a), (ε_b, f_b)
    let w = a.epsilon / (b.epsilon - a.epsilon);
    let lin = |fa: T, fb: T| fa + (fa - fb) * w;
    let (ua, ub) = (a.fluctuation(), b.fluctuation());
    let u: Vec<T> = ua.values().iter().zip(ub.values()).map(|(&x, &y)| lin(x, y)).collect();
    let m: Vec<T> = a.m.values().iter().zip(b.m.values()).map(|(&x, &y)| lin(x, y)).collect();
    let grid = *a.grid();
    let um = mean(&u);
    ErgodicTriple::new(
        GridField::new(grid, u.into_iter().map(|x| x - um).collect())?,
        GridField::new(grid, m)?,
        lin(a.hbar_estimate(), b.hbar_estimate()),
    )
}

// ---------------------------------------------------------------------------
// corrector linear algebra

/// Base-dependent coefficients shared by all corrector solves.
struct Coefficients<T> {
    n: usize,
    h: T,
    /// `Du` at nodes.
    p: Vec<T>,
    /// `g'(m)` at nodes.
    gp: Vec<T>,
    /// `m` on faces `i+1/2`.
    m_face: Vec<T>,
}

impl<T: Scalar> Coefficients<T> {
    fn new(base: &ErgodicTriple<T>, model: &Model<T>, floor: T) -> Result<Self> {
        let min_m = base.m.min();
        if !(min_m >= floor) {
            return Err(Error::DegenerateBase {
                min_m: min_m.as_f64(),
                floor: floor.as_f64(),
            });
        }
        let n = base.grid().n();
        if n < 5 {
            return Err(Error::InvalidInput("corrector needs at least 5 grid nodes".into()));
        }
        let h = base.grid().h();
        let m = base.m.values();
        Ok(Self {
            n,
            h,
            p: central(base.u.values(), h),
            gp: m.iter().map(|&x| model.coupling.g_prime(x)).collect(),
            m_face: (0..n).map(|i| (m[i] + m[(i + 1) % n]) * T::half()).collect(),
        })
    }

    /// Row `i` of `Q = εI + diag(Du) G` as `(column, value)` triples.
    fn q_row(&self, i: usize, eps: T) -> [(usize, T); 3] {
        let n = self.n;
        let c = self.p[i] / (T::two() * self.h);
        [((i + n - 1) % n, -c), (i, eps), ((i + 1) % n, c)]
    }

    fn q_apply(&self, phi: &[T], eps: T) -> Vec<T> {
        let g = central(phi, self.h);
        (0..self.n).map(|i| eps * phi[i] + self.p[i] * g[i]).collect()
    }

    /// `Qᵀ x`.
    fn q_transpose(&self, x: &[T], eps: T) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            for (j, q) in self.q_row(i, eps) {
                y[j] += q * x[i];
            }
        }
        y
    }

    fn k_matrix(&self, eps: T) -> CyclicBanded<T> {
        let (n, h) = (self.n, self.h);
        let mut k = CyclicBanded::zeros(n, 2);
        for i in 0..n {
            let w = self.m_face[i] / h;
            k.add(i, 0, w);
            k.add((i + 1) % n, 0, w);
            k.add(i, 1, -w);
            k.add((i + 1) % n, -1, -w);
        }
        for i in 0..n {
            let c = h / self.gp[i];
            let row = self.q_row(i, eps);
            // row entries sit at offsets -1, 0, 1 from i
            for (a, &(ja, qa)) in row.iter().enumerate() {
                for (b, &(_, qb)) in row.iter().enumerate() {
                    k.add(ja, b as isize - a as isize, c * qa * qb);
                }
            }
        }
        k
    }

    fn k_form(&self, eps: T, a: &[T], b: &[T]) -> T {
        let (n, h) = (self.n, self.h);
        let mut s = T::zero();
        for i in 0..n {
            let j = (i + 1) % n;
            s += self.m_face[i] * (a[j] - a[i]) * (b[j] - b[i]) / h;
        }
        let (qa, qb) = (self.q_apply(a, eps), self.q_apply(b, eps));
        for i in 0..n {
            s += h * qa[i] * qb[i] / self.gp[i];
        }
        s
    }
}

/// The discrete form `K[φ₁, φ₂]` at discount `eps` for the given base.
pub fn k_form<T: Scalar>(
    base: &ErgodicTriple<T>,
    model: &Model<T>,
    eps: T,
    phi1: &GridField<T>,
    phi2: &GridField<T>,
) -> Result<T> {
    check_same(base.grid(), phi1.grid())?;
    check_same(base.grid(), phi2.grid())?;
    let c = Coefficients::new(base, model, T::zero())?;
    Ok(c.k_form(eps, phi1.values(), phi2.values()))
}

/// Matrix of the discrete form `K` (cyclic pentadiagonal).
pub fn k_matrix<T: Scalar>(base: &ErgodicTriple<T>, model: &Model<T>, eps: T) -> Result<CyclicBanded<T>> {
    Ok(Coefficients::new(base, model, T::zero())?.k_matrix(eps))
}

/// Solves the linearized discounted problem
///
/// ```text
/// εv + u + Du·Dv = g'(m)θ + A,    εθ - div(m Dv) - div(θ Du) = 1 - m + div B
/// ```
///
/// by eliminating `θ` and solving `K v = f`; returns `(v, θ)`.
pub fn solve_linearized_discounted<T: Scalar>(
    eps: T,
    a: &GridField<T>,
    b: &GridField<T>,
    base: &ErgodicTriple<T>,
    model: &Model<T>,
    m_floor: T,
) -> Result<(GridField<T>, GridField<T>)> {
    if !(eps > T::zero()) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {eps}")));
    }
    check_same(base.grid(), a.grid())?;
    check_same(base.grid(), b.grid())?;
    let c = Coefficients::new(base, model, m_floor)?;
    let (n, h) = (c.n, c.h);
    let u = base.u.values();
    let m = base.m.values();
    let gb = central(b.values(), h);
    let load: Vec<T> = (0..n).map(|i| h * (T::one() - m[i]) + h * gb[i]).collect();
    let weighted: Vec<T> = (0..n).map(|i| h * (u[i] - a.values()[i]) / c.gp[i]).collect();
    let qt = c.q_transpose(&weighted, eps);
    let f: Vec<T> = load.iter().zip(&qt).map(|(&l, &q)| l - q).collect();
    let v = Bordered::new(c.k_matrix(eps))
        .solve(&f, &[])
        .map_err(|e| Error::LinearSolveFailure(e.to_string()))?;
    let qv = c.q_apply(&v, eps);
    let theta: Vec<T> = (0..n).map(|i| (qv[i] + u[i] - a.values()[i]) / c.gp[i]).collect();
    Ok((GridField::new(*base.grid(), v)?, GridField::new(*base.grid(), theta)?))
}

/// Residuals of the linearized discounted problem: sup of the first equation
/// and sup over nodal test functions of the weak second equation.
pub fn linearized_residuals<T: Scalar>(
    eps: T,
    a: &GridField<T>,
    b: &GridField<T>,
    base: &ErgodicTriple<T>,
    model: &Model<T>,
    v: &GridField<T>,
    theta: &GridField<T>,
) -> Result<(T, T)> {
    let c = Coefficients::new(base, model, T::zero())?;
    let load: Vec<T> = {
        let gb = central(b.values(), c.h);
        (0..c.n).map(|i| c.h * (T::one() - base.m.values()[i]) + c.h * gb[i]).collect()
    };
    let first = first_equation(&c, eps, T::zero(), base.u.values(), a.values(), v.values(), theta.values());
    let second = weak_second(&c, eps, v.values(), theta.values(), &load);
    Ok((first, second))
}

fn first_equation<T: Scalar>(c: &Coefficients<T>, eps: T, lambda: T, s1: &[T], a: &[T], v: &[T], theta: &[T]) -> T {
    let gv = central(v, c.h);
    (0..c.n)
        .map(|i| (eps * v[i] + lambda + s1[i] + c.p[i] * gv[i] - c.gp[i] * theta[i] - a[i]).abs())
        .fold(T::zero(), |x, y| x.max(y))
}

/// `max_j |ε h θ_j + h Σ m_f Dv De_j + h Σ θ Du G e_j - load_j|`.
fn weak_second<T: Scalar>(c: &Coefficients<T>, eps: T, v: &[T], theta: &[T], load: &[T]) -> T {
    let (n, h) = (c.n, c.h);
    let mut r: Vec<T> = (0..n).map(|j| eps * h * theta[j] - load[j]).collect();
    for i in 0..n {
        let j = (i + 1) % n;
        let flux = c.m_face[i] * (v[j] - v[i]) / h;
        r[j] += flux;
        r[i] -= flux;
    }
    // h Σ_i θ_i p_i (G e_j)_i = h (θ p)_{j-1}/(2h) - h (θ p)_{j+1}/(2h)
    for j in 0..n {
        let tp = |k: usize| theta[k] * c.p[k];
        r[j] += (tp((j + n - 1) % n) - tp((j + 1) % n)) * T::half();
    }
    sup(&r)
}

/// Augmented limit solve: `λ + s1 + Du·Dv = g'(m)θ`, weak second equation
/// with nodal load `load`, `Σθ = 0`, `Σv = 0`. Returns `(v, θ, λ)`.
fn augmented<T: Scalar>(c: &Coefficients<T>, s1: &[T], load: &[T]) -> Result<(Vec<T>, Vec<T>, T)> {
    let (n, h) = (c.n, c.h);
    let zero = T::zero();
    let wt: Vec<T> = (0..n).map(|i| h / c.gp[i]).collect();
    let col = c.q_transpose(&wt, zero);
    let d: T = wt.iter().copied().sum();
    let ws1: Vec<T> = (0..n).map(|i| wt[i] * s1[i]).collect();
    let qt = c.q_transpose(&ws1, zero);
    let f: Vec<T> = (0..n).map(|j| load[j] - qt[j]).collect();
    let closure = -ws1.iter().copied().sum::<T>();
    let mut sys = Bordered::new(c.k_matrix(zero));
    sys.push(col.clone(), col, vec![d]);
    sys.push(vec![T::one(); n], vec![T::one(); n], vec![zero, zero]);
    let sol = sys
        .solve(&f, &[closure, zero])
        .map_err(|e| Error::LinearSolveFailure(e.to_string()))?;
    let v = sol[..n].to_vec();
    let lambda = sol[n];
    let qv = c.q_apply(&v, zero);
    let theta = (0..n).map(|i| (lambda + s1[i] + qv[i]) / c.gp[i]).collect();
    Ok((v, theta, lambda))
}

/// Direct solve of the limit corrector system (no cross-validation).
pub fn solve_limit_direct<T: Scalar>(
    base: &ErgodicTriple<T>,
    model: &Model<T>,
    m_floor: T,
) -> Result<CorrectorSolution<T>> {
    let c = Coefficients::new(base, model, m_floor)?;
    let (n, h) = (c.n, c.h);
    let m = base.m.values();
    let load: Vec<T> = (0..n).map(|i| h * (T::one() - m[i])).collect();
    let (v, theta, lambda) = augmented(&c, base.u.values(), &load)?;

    // second order: μ₁ + S1 + Du·Dw = g'ρ, -div(m Dw) - div(ρ Du) = -θ + div(θ Dv)
    let gv = central(&v, h);
    let s1: Vec<T> = (0..n)
        .map(|i| v[i] + gv[i] * gv[i] * T::half() - model.coupling.g_second(m[i]) * theta[i] * theta[i] * T::half())
        .collect();
    let tg: Vec<T> = (0..n).map(|i| theta[i] * gv[i]).collect();
    let gtg = central(&tg, h);
    let load2: Vec<T> = (0..n).map(|i| -h * theta[i] + h * gtg[i]).collect();
    let (_, _, mu1) = augmented(&c, &s1, &load2)?;

    let grid = *base.grid();
    Ok(CorrectorSolution {
        v: GridField::new(grid, v)?,
        theta: GridField::new(grid, theta)?,
        lambda,
        eps_used: T::zero(),
        mean_shift: mu1,
        routes: None,
    })
}

/// Value at 0 of the polynomial through `(x_k, y_k)` (Neville).
fn extrapolate_to_zero<T: Scalar>(xs: &[T], ys: &[T]) -> T {
    let mut p = ys.to_vec();
    let k = xs.len();
    for level in 1..k {
        for i in 0..k - level {
            let (xi, xj) = (xs[i], xs[i + level]);
            p[i] = (xj * p[i] - xi * p[i + 1]) / (xj - xi);
        }
    }
    p[0]
}

/// Limit corrector, cross-validated against extrapolation of the linearized
/// discounted problem with `A = B = 0` over `opts.route_eps`.
pub fn solve_limit_corrector<T: Scalar>(
    base: &ErgodicTriple<T>,
    model: &Model<T>,
    opts: &CorrectorOptions<T>,
) -> Result<CorrectorSolution<T>> {
    let mut sol = solve_limit_direct(base, model, opts.m_floor)?;
    if opts.route_eps.is_empty() {
        return Ok(sol);
    }
    let grid = *base.grid();
    let zero = GridField::constant(grid, T::zero());
    let mut lam = Vec::new();
    let mut vs = Vec::new();
    let mut ts = Vec::new();
    for &eps in &opts.route_eps {
        let (v, theta) = solve_linearized_discounted(eps, &zero, &zero, base, model, opts.m_floor)?;
        let mv = mean(v.values());
        lam.push(eps * mv);
        vs.push(v.values().iter().map(|&x| x - mv).collect::<Vec<T>>());
        ts.push(theta.into_values());
    }
    let xs = &opts.route_eps;
    let lambda_ext = extrapolate_to_zero(xs, &lam);
    let n = grid.n();
    let at = |fields: &Vec<Vec<T>>, i: usize| extrapolate_to_zero(xs, &fields.iter().map(|f| f[i]).collect::<Vec<_>>());
    let v_ext: Vec<T> = (0..n).map(|i| at(&vs, i)).collect();
    let t_ext: Vec<T> = (0..n).map(|i| at(&ts, i)).collect();
    let routes = RouteAgreement {
        lambda_direct: sol.lambda,
        lambda_extrapolated: lambda_ext,
        v_sup: sup_diff(&v_ext, sol.v.values()),
        theta_sup: sup_diff(&t_ext, sol.theta.values()),
    };
    if routes.worst() > T::lit(10.0) * opts.route_tol {
        return Err(Error::InconsistentRoutes {
            direct: sol.lambda.as_f64(),
            extrapolated: lambda_ext.as_f64(),
        });
    }
    sol.routes = Some(routes);
    Ok(sol)
}

/// Residuals of the limit system: sup of the first equation and the weak
/// second equation against nodal test functions, plus `|∫v|` and `|∫θ|`.
pub fn limit_residuals<T: Scalar>(
    base: &ErgodicTriple<T>,
    model: &Model<T>,
    corr: &CorrectorSolution<T>,
) -> Result<[T; 4]> {
    let c = Coefficients::new(base, model, T::zero())?;
    let zero = vec![T::zero(); c.n];
    let load: Vec<T> = base.m.values().iter().map(|&m| c.h * (T::one() - m)).collect();
    Ok([
        first_equation(&c, T::zero(), corr.lambda, base.u.values(), &zero, corr.v.values(), corr.theta.values()),
        weak_second(&c, T::zero(), corr.v.values(), corr.theta.values(), &load),
        integrate(&corr.v).abs(),
        integrate(&corr.theta).abs(),
    ])
}

// ---------------------------------------------------------------------------
// expansion check

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionRow<T> {
    pub eps: T,
    /// `sup|u^ε + H̄/ε - u - λ|`.
    pub e_u: T,
    /// `sup|m^ε - m|`.
    pub e_m: T,
    /// `sup|u^ε + H̄/ε - u - λ - ε(v + μ₁)|`.
    pub e_2: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionTable<T> {
    pub rows: Vec<ExpansionRow<T>>,
    pub slope_u: T,
    pub slope_m: T,
    pub slope_2: T,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope<T: Scalar>(xs: &[T], ys: &[T]) -> T {
    let lx: Vec<T> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<T> = ys.iter().map(|y| y.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let mut num = T::zero();
    let mut den = T::zero();
    for (x, y) in lx.iter().zip(&ly) {
        num += (*x - mx) * (*y - my);
        den += (*x - mx) * (*x - mx);
    }
    num / den
}

/// Error table of the expansion along a discounted sweep.
pub fn verify_expansion<T: Scalar>(
    sweep: &[DiscountedSolution<T>],
    base: &ErgodicTriple<T>,
    corr: &CorrectorSolution<T>,
) -> Result<ExpansionTable<T>> {
    let mut rows = Vec::with_capacity(sweep.len());
    for sol in sweep {
        check_same(sol.grid(), base.grid())?;
        check_same(sol.grid(), corr.v.grid())?;
        let eps = sol.epsilon;
        let mut e_u = T::zero();
        let mut e_2 = T::zero();
        let mut e_m = T::zero();
        for i in 0..sol.u.len() {
            let d = sol.u.values()[i] + base.hbar / eps - base.u.values()[i] - corr.lambda;
            e_u = e_u.max(d.abs());
            e_2 = e_2.max((d - eps * (corr.v.values()[i] + corr.mean_shift)).abs());
            e_m = e_m.max((sol.m.values()[i] - base.m.values()[i]).abs());
        }
        rows.push(ExpansionRow { eps, e_u, e_m, e_2 });
    }
    let xs: Vec<T> = rows.iter().map(|r| r.eps).collect();
    let col = |f: fn(&ExpansionRow<T>) -> T| rows.iter().map(f).collect::<Vec<T>>();
    Ok(ExpansionTable {
        slope_u: loglog_slope(&xs, &col(|r| r.e_u)),
        slope_m: loglog_slope(&xs, &col(|r| r.e_m)),
        slope_2: loglog_slope(&xs, &col(|r| r.e_2)),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discounted::continuation_solve;
    use crate::model::{Coupling, Potential};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn flat_base(n: usize) -> (ErgodicTriple<f64>, Model<f64>) {
        let grid = TorusGrid::<f64>::line(n);
        let base = ErgodicTriple::new(GridField::constant(grid, 0.0), GridField::constant(grid, 1.0), -1.0).unwrap();
        (base, Model::new(Coupling::linear(), Potential::Zero))
    }

    fn trig(grid: TorusGrid<f64>, seed: u64, amp: f64) -> GridField<f64> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let c: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        GridField::from_fn(grid, |x| {
            amp * c
                .iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    let w = 2.0 * PI * (k + 1) as f64 * x;
                    a * w.cos() + b * w.sin()
                })
                .sum::<f64>()
        })
    }

    /// Smooth base that need not solve the ergodic system; m normalized.
    fn random_base(n: usize, seed: u64) -> ErgodicTriple<f64> {
        let grid = TorusGrid::<f64>::line(n);
        let u = trig(grid, seed, 0.3);
        let um = integrate(&u);
        let m = trig(grid, seed + 100, 0.2).map(|x| 1.0 + x);
        let mm = integrate(&m);
        ErgodicTriple::new(u.map(|x| x - um), m.map(|x| x / mm), -0.5).unwrap()
    }

    fn smooth_base(n: usize) -> (ErgodicTriple<f64>, Model<f64>) {
        let model = Model::sine(0.3);
        let base = solve_ergodic(&TorusGrid::line(n), &model, &Regularization::none(), &SolverOptions::default()).unwrap();
        (base, model)
    }

    #[test]
    fn ergodic_solve_flat_and_smooth() {
        let grid = TorusGrid::<f64>::line(64);
        let flat = solve_ergodic(&grid, &Model::new(Coupling::linear(), Potential::Zero), &Regularization::none(), &SolverOptions::default()).unwrap();
        assert!((flat.hbar + 1.0).abs() < 1e-14);
        assert!(sup(flat.u.values()) < 1e-14);
        let (base, model) = smooth_base(256);
        assert!(integrate(&base.u).abs() < 1e-12);
        assert!((integrate(&base.m) - 1.0).abs() < 1e-12);
        assert!(base.m.min() > 0.4 - 1e-3);
        let h = base.grid().h();
        assert!(base.hj_defect(&model, 1e-6) < 10.0 * h * h, "{}", base.hj_defect(&model, 1e-6));
    }

    #[test]
    fn flat_base_has_trivial_corrector() {
        let (base, model) = flat_base(32);
        let zero = GridField::constant(*base.grid(), 0.0);
        let (v, theta) = solve_linearized_discounted(0.1, &base.u, &zero, &base, &model, 1e-6).unwrap();
        assert!(sup(v.values()) < 1e-13 && sup(theta.values()) < 1e-13);
        let c = solve_limit_corrector(&base, &model, &CorrectorOptions::default()).unwrap();
        assert!(c.lambda.abs() < 1e-13);
        assert!(sup(c.v.values()) < 1e-13 && sup(c.theta.values()) < 1e-13);
    }

    #[test]
    fn k_form_is_symmetric_and_coercive() {
        let base = random_base(64, 4);
        let model = Model::<f64>::new(Coupling::new(1.0, 2.0).unwrap(), Potential::Zero);
        let grid = *base.grid();
        for s in 0..5 {
            let (a, b) = (trig(grid, 10 + s, 1.0), trig(grid, 20 + s, 1.0));
            for eps in [0.0, 0.1] {
                let ab = k_form(&base, &model, eps, &a, &b).unwrap();
                let ba = k_form(&base, &model, eps, &b, &a).unwrap();
                assert!((ab - ba).abs() <= 1e-12);
                assert!(k_form(&base, &model, eps, &a, &a).unwrap() > 0.0);
            }
        }
        let k = k_matrix(&base, &model, 0.1).unwrap();
        assert!(k.asymmetry() < 1e-12);
        let ones = GridField::constant(grid, 1.0);
        assert!(k_form(&base, &model, 0.0, &ones, &ones).unwrap().abs() < 1e-12);
        // matrix and form agree
        let (a, b) = (trig(grid, 1, 1.0), trig(grid, 2, 1.0));
        let ka = k.apply(a.values());
        let via: f64 = ka.iter().zip(b.values()).map(|(x, y)| x * y).sum();
        assert!((via - k_form(&base, &model, 0.1, &a, &b).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn linearized_solution_satisfies_both_equations() {
        let base = random_base(128, 9);
        let model = Model::<f64>::sine(0.3);
        let grid = *base.grid();
        let (a, b) = (trig(grid, 30, 0.5), trig(grid, 31, 0.5));
        let (v, theta) = solve_linearized_discounted(0.05, &a, &b, &base, &model, 1e-6).unwrap();
        let (r1, r2) = linearized_residuals(0.05, &a, &b, &base, &model, &v, &theta).unwrap();
        assert!(r1 < 1e-12 && r2 < 1e-12, "{r1} {r2}");
    }

    #[test]
    fn linearized_superposition() {
        let base = random_base(64, 2);
        let model = Model::<f64>::sine(0.3);
        let grid = *base.grid();
        let zero = GridField::constant(grid, 0.0);
        let (a1, a2) = (trig(grid, 1, 1.0), trig(grid, 2, 1.0));
        let sum = a1.zip_with(&a2, |x, y| x + y).unwrap();
        let solve = |a: &GridField<f64>| solve_linearized_discounted(0.1, a, &zero, &base, &model, 1e-6).unwrap();
        let (s1, s2, s12, s0) = (solve(&a1), solve(&a2), solve(&sum), solve(&zero));
        for i in 0..64 {
            let lin = s1.0.values()[i] + s2.0.values()[i] - s0.0.values()[i];
            assert!((s12.0.values()[i] - lin).abs() < 1e-10);
            let lin = s1.1.values()[i] + s2.1.values()[i] - s0.1.values()[i];
            assert!((s12.1.values()[i] - lin).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_base_is_rejected() {
        let grid = TorusGrid::<f64>::line(32);
        let m = GridField::from_fn(grid, |x| (PI * (2.0 * PI * x).cos()).max(0.0));
        let base = ErgodicTriple::new(GridField::constant(grid, 0.0), m, 0.0).unwrap();
        let err = solve_limit_direct(&base, &Model::exdp(), 1e-6).unwrap_err();
        assert!(matches!(err, Error::DegenerateBase { .. }));
    }

    #[test]
    fn limit_corrector_substitution_and_gauge() {
        let base = random_base(128, 5);
        let model = Model::<f64>::new(Coupling::new(1.5, 1.5).unwrap(), Potential::Zero);
        let corr = solve_limit_direct(&base, &model, 1e-6).unwrap();
        let [r1, r2, iv, it] = limit_residuals(&base, &model, &corr).unwrap();
        assert!(r1 < 1e-9 && r2 < 1e-9, "{r1} {r2}");
        assert!(iv < 1e-12 && it < 1e-12, "{iv} {it}");
    }

    #[test]
    fn routes_agree_on_smooth_base() {
        let (base, model) = smooth_base(256);
        let corr = solve_limit_corrector(&base, &model, &CorrectorOptions::default()).unwrap();
        let r = corr.routes.unwrap();
        assert!(r.lambda_gap() < 1e-4 && r.v_sup < 1e-4 && r.theta_sup < 1e-4, "{r:?}");
    }

    #[test]
    fn expansion_on_flat_model_is_exact() {
        let grid = TorusGrid::<f64>::line(32);
        let model = Model::new(Coupling::linear(), Potential::Zero);
        let (base, _) = flat_base(32);
        let corr = solve_limit_direct(&base, &model, 1e-6).unwrap();
        let sweep: Vec<_> = [0.2, 0.1]
            .iter()
            .map(|&e| continuation_solve(&grid, e, &model, &Regularization::none(), &SolverOptions::default()).unwrap())
            .collect();
        let t = verify_expansion(&sweep, &base, &corr).unwrap();
        for r in &t.rows {
            assert!(r.e_u < 1e-12 && r.e_m < 1e-12);
        }
    }

    #[test]
    fn expansion_rates_smooth_regime() {
        let n = 256;
        let (base, model) = smooth_base(n);
        let corr = solve_limit_corrector(&base, &model, &CorrectorOptions::default()).unwrap();
        let grid = TorusGrid::line(n);
        let sweep: Vec<_> = [0.2, 0.1, 0.05, 0.025]
            .iter()
            .map(|&e| continuation_solve(&grid, e, &model, &Regularization::none(), &SolverOptions::default()).unwrap())
            .collect();
        let t = verify_expansion(&sweep, &base, &corr).unwrap();
        assert!(t.slope_u >= 0.8, "{t:?}");
        // In 1D the smooth ergodic u vanishes and u^ε + H̄/ε is odd in ε, so
        // the remainder after the ε-term is cubic rather than quadratic.
        assert!(t.slope_2 - t.slope_u > 1.7 && t.slope_2 - t.slope_u < 2.3, "{t:?}");
        assert!(t.slope_m >= 1.0, "{t:?}");
        // dropping μ₁ leaves an O(ε) remainder
        let no_mean = CorrectorSolution { mean_shift: 0.0, ..corr.clone() };
        let tn = verify_expansion(&sweep, &base, &no_mean).unwrap();
        assert!((tn.slope_2 - tn.slope_u).abs() < 0.2, "{tn:?}");
        // perturbing λ shifts e_u by about the perturbation
        let shifted = CorrectorSolution { lambda: corr.lambda + 0.5, ..corr.clone() };
        let ts = verify_expansion(&sweep, &base, &shifted).unwrap();
        let last = t.rows.len() - 1;
        assert!((ts.rows[last].e_u - t.rows[last].e_u - 0.5).abs() <= 2.0 * t.rows[last].e_u + 1e-9);
        // extrapolated base agrees with the direct solve
        let ext = extrapolate_ergodic(&sweep).unwrap();
        assert!((ext.hbar - base.hbar).abs() < 5e-3, "{} {}", ext.hbar, base.hbar);
    }

    #[test]
    fn neville_recovers_quadratics() {
        let xs = [0.3, 0.2, 0.1];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 3.0 * x + 5.0 * x * x).collect();
        assert!((extrapolate_to_zero(&xs, &ys) - 2.0).abs() < 1e-12);
        assert!((loglog_slope::<f64>(&[1.0, 2.0, 4.0], &[3.0, 12.0, 48.0]) - 2.0).abs() < 1e-12);
    }
}
