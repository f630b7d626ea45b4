//! Mather-measure pairings and the vanishing-discount selection experiment.
//!
//! The discounted Mather measure is realized through its pairing
//! `φ ↦ ∫ φ(x, -Du^ε) m^ε dx`. Holonomy and action identities of this measure
//! are checked against trigonometric test functions; the selection
//! functional `F(u) = ∫(u - ∫u) m` ranks candidate ergodic solutions, and
//! a ladder of discounted solves with `σ = δ = ε` shows which one is reached.

use std::thread;

use crate::closed_form::CandidateSolution;
use crate::discounted::{continuation_report, DiscountedSolution, SolverOptions};
use crate::error::{Error, Result};
use crate::grid::{check_same, gradient_central, integrate, GridField, TorusGrid};
use crate::model::{Model, Regularization};
use crate::scalar::Scalar;

fn derivative<T: Scalar>(f: &GridField<T>) -> Vec<T> {
    gradient_central(f).component(0).to_vec()
}

fn weighted_sum<T: Scalar>(grid: &TorusGrid<T>, vals: impl Iterator<Item = T>) -> T {
    grid.cell_volume() * vals.sum::<T>()
}

/// `∫ φ(x, -Du) m dx` with the central gradient of `u`.
pub fn mather_pair<T: Scalar>(phi: impl Fn(T, T) -> T, u: &GridField<T>, m: &GridField<T>) -> Result<T> {
    check_same(u.grid(), m.grid())?;
    let p = derivative(u);
    mather_pair_gradient(phi, &GridField::new(*u.grid(), p)?, m)
}

/// [`mather_pair`] for a given gradient field `u_x`.
pub fn mather_pair_gradient<T: Scalar>(phi: impl Fn(T, T) -> T, u_x: &GridField<T>, m: &GridField<T>) -> Result<T> {
    check_same(u_x.grid(), m.grid())?;
    let g = u_x.grid();
    Ok(weighted_sum(
        g,
        (0..u_x.len()).map(|i| phi(g.coord(i), -u_x.values()[i]) * m.values()[i]),
    ))
}

/// `|∫(-εφ - Du^ε·Dφ) m^ε dx + ε∫φ dx|`.
pub fn holonomy_defect_discounted<T: Scalar>(
    eps: T,
    sol: &DiscountedSolution<T>,
    phi: &GridField<T>,
) -> Result<T> {
    check_same(sol.grid(), phi.grid())?;
    let (p, dphi) = (derivative(&sol.u), derivative(phi));
    let g = sol.grid();
    let pairing = weighted_sum(
        g,
        (0..p.len()).map(|i| (-eps * phi.values()[i] - p[i] * dphi[i]) * sol.m.values()[i]),
    );
    Ok((pairing + eps * integrate(phi)).abs())
}

/// `|∫ -u_x Dφ m dx|` for a gradient field `u_x`.
pub fn holonomy_defect_ergodic<T: Scalar>(u_x: &GridField<T>, m: &GridField<T>, phi: &GridField<T>) -> Result<T> {
    check_same(u_x.grid(), m.grid())?;
    check_same(u_x.grid(), phi.grid())?;
    let dphi = derivative(phi);
    Ok(weighted_sum(
        u_x.grid(),
        (0..dphi.len()).map(|i| -u_x.values()[i] * dphi[i] * m.values()[i]),
    )
    .abs())
}

/// Both sides of the discounted action identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionGap<T> {
    /// `∫(|Du^ε|²/2 - V + g(m^ε)) m^ε`.
    pub lhs: T,
    /// `ε∫u^ε`.
    pub rhs: T,
    pub gap: T,
}

pub fn discounted_action<T: Scalar>(eps: T, sol: &DiscountedSolution<T>, model: &Model<T>) -> ActionGap<T> {
    let p = derivative(&sol.u);
    let v = model.potential.sample(sol.grid());
    let lhs = weighted_sum(
        sol.grid(),
        (0..p.len()).map(|i| {
            let m = sol.m.values()[i];
            (p[i] * p[i] * T::half() - v.values()[i] + model.coupling.g(m)) * m
        }),
    );
    let rhs = eps * integrate(&sol.u);
    ActionGap {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    }
}

/// `F(u) = ∫u m - ∫u`.
pub fn selection_functional<T: Scalar>(u: &GridField<T>, m: &GridField<T>) -> Result<T> {
    check_same(u.grid(), m.grid())?;
    let um = weighted_sum(u.grid(), u.values().iter().zip(m.values()).map(|(&a, &b)| a * b));
    Ok(um - integrate(u))
}

/// `∫(g(m^ε) - g(m))(m^ε - m)`, non-negative for increasing `g`.
pub fn cross_coupling_gap<T: Scalar>(m_eps: &GridField<T>, m: &GridField<T>, model: &Model<T>) -> Result<T> {
    check_same(m_eps.grid(), m.grid())?;
    let g = &model.coupling;
    Ok(weighted_sum(
        m.grid(),
        m_eps
            .values()
            .iter()
            .zip(m.values())
            .map(|(&a, &b)| (g.g(a) - g.g(b)) * (a - b)),
    ))
}

/// Candidates sorted by the selection functional.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking<T> {
    /// `(label, F)` ascending in `F`.
    pub entries: Vec<(String, T)>,
    /// The two smallest values tie within the tolerance.
    pub ambiguous: bool,
}

impl<T: Scalar> Ranking<T> {
    /// The unique minimizer, or `None` on an ambiguous selection.
    pub fn winner(&self) -> Option<&str> {
        if self.ambiguous {
            None
        } else {
            self.entries.first().map(|e| e.0.as_str())
        }
    }
}

/// Ranks candidates by `F(u)` against the density `m`.
pub fn select_minimizer<T: Scalar>(candidates: &[CandidateSolution<T>], m: &GridField<T>, tol: T) -> Result<Ranking<T>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    let mut entries = candidates
        .iter()
        .map(|c| Ok((c.label.clone(), selection_functional(&c.u, m)?)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let ambiguous = entries.len() > 1 && (entries[1].1 - entries[0].1).abs() <= tol;
    Ok(Ranking { entries, ambiguous })
}

/// `sin 2πkx`, `cos 2πkx` for `k = 1..=modes`, with their `C²` norms
/// `1 + 2πk + (2πk)²`.
pub fn trig_basis<T: Scalar>(grid: &TorusGrid<T>, modes: usize) -> Vec<(GridField<T>, T)> {
    let mut out = Vec::with_capacity(2 * modes);
    for k in 1..=modes {
        let w = T::two() * T::PI() * T::from_count(k);
        let c2 = T::one() + w + w * w;
        out.push((GridField::from_fn(*grid, |x| (w * x).sin()), c2));
        out.push((GridField::from_fn(*grid, |x| (w * x).cos()), c2));
    }
    out
}

/// Number of trigonometric modes in the holonomy test basis.
pub const HOLONOMY_MODES: usize = 8;

/// One rung of a vanishing-discount ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T> {
    pub eps: T,
    pub sigma: T,
    pub delta: T,
    /// `-ε∫u^ε`.
    pub hbar_est: T,
    pub mean_u: T,
    pub fluctuation: GridField<T>,
    pub m: GridField<T>,
    /// `F(u^ε - ∫u^ε)` against the reference density.
    pub f_value: T,
    pub mass: T,
    pub min_m: T,
    pub holonomy_max: T,
    pub action_gap: T,
    pub coupling_gap: T,
    pub residual_sup: T,
    /// Solver failure message; the row then holds the last accepted iterate.
    pub failed: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult<T> {
    pub model: Model<T>,
    pub grid: TorusGrid<T>,
    pub rows: Vec<SweepRow<T>>,
}

impl<T: Scalar> SweepResult<T> {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.failed.is_some())
    }

    /// L² norms of differences of successive fluctuations (Cauchy check).
    pub fn successive_differences(&self) -> Vec<T> {
        self.rows
            .windows(2)
            .map(|w| {
                let d = w[0].fluctuation.zip_with(&w[1].fluctuation, |a, b| a - b).expect("shared grid");
                integrate(&d.map(|x| x * x)).sqrt()
            })
            .collect()
    }
}

/// Outcome of comparing the terminal rung against a candidate catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict<T> {
    pub terminal_eps: T,
    pub hbar_terminal: T,
    pub f_terminal: T,
    /// `(label, F(u))` per candidate.
    pub f_candidates: Vec<(String, T)>,
    /// `(label, ‖ū - (u - ∫u)‖_L²)` per candidate.
    pub distances: Vec<(String, T)>,
    pub nearest: Option<String>,
    /// `F(ū) ≤ F(u) + tol` for every candidate.
    pub criterion_holds: bool,
    pub tol: T,
    /// No catalog: the model has a unique solution and nothing is selected.
    pub degenerate: bool,
    pub successive_differences: Vec<T>,
}

/// Regularization along a ladder as multiples of the discount:
/// `σ = sigma_per_eps·ε`, `δ = delta_per_eps·ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderSchedule<T> {
    pub sigma_per_eps: T,
    pub delta_per_eps: T,
}

impl<T: Scalar> LadderSchedule<T> {
    /// `σ = δ = ε`.
    pub fn tied() -> Self {
        Self {
            sigma_per_eps: T::one(),
            delta_per_eps: T::one(),
        }
    }

    /// `σ = 0`, `δ = ε`: the discount alone drives the limit.
    pub fn inviscid() -> Self {
        Self {
            sigma_per_eps: T::zero(),
            delta_per_eps: T::one(),
        }
    }

    pub fn at(&self, eps: T) -> Regularization<T> {
        Regularization {
            sigma: self.sigma_per_eps * eps,
            delta: self.delta_per_eps * eps,
        }
    }
}

impl<T: Scalar> Default for LadderSchedule<T> {
    fn default() -> Self {
        Self::tied()
    }
}

/// Validates a ladder of discounts: positive and strictly decreasing.
pub fn check_ladder<T: Scalar>(ladder: &[T]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::InvalidInput("empty discount ladder".into()));
    }
    if ladder.iter().any(|&e| !(e > T::zero() && e.is_finite())) {
        return Err(Error::InvalidInput("discounts must be positive".into()));
    }
    if ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("discount ladder must be strictly decreasing".into()));
    }
    Ok(())
}

/// Solves one rung and evaluates its diagnostics against `m_ref`.
pub fn sweep_row<T: Scalar>(
    grid: &TorusGrid<T>,
    model: &Model<T>,
    eps: T,
    reg: Regularization<T>,
    m_ref: &GridField<T>,
    opts: &SolverOptions<T>,
) -> Result<(SweepRow<T>, DiscountedSolution<T>)> {
    let rep = continuation_report(grid, eps, model, &reg, opts)?;
    let sol = rep.last;
    let basis = trig_basis(grid, HOLONOMY_MODES);
    let mut holonomy_max = T::zero();
    for (phi, _) in &basis {
        holonomy_max = holonomy_max.max(holonomy_defect_discounted(eps, &sol, phi)?);
    }
    let fluct = sol.fluctuation();
    let row = SweepRow {
        eps,
        sigma: reg.sigma,
        delta: reg.delta,
        hbar_est: sol.hbar_estimate(),
        mean_u: integrate(&sol.u),
        f_value: selection_functional(&fluct, m_ref)?,
        fluctuation: fluct,
        m: sol.m.clone(),
        mass: sol.mass(),
        min_m: sol.min_m(),
        holonomy_max,
        action_gap: discounted_action(eps, &sol, model).gap,
        coupling_gap: cross_coupling_gap(&sol.m, m_ref, model)?,
        residual_sup: sol.residual_sup,
        failed: rep.failure.map(|e| e.to_string()),
    };
    Ok((row, sol))
}

#[allow(clippy::too_many_arguments)]
/// Runs the ladder under `schedule` (rows solved concurrently) and compares the
/// terminal fluctuation with the catalog. `m_ref` is the reference density
/// used in `F` and the coupling gap; an empty catalog gives a degenerate
/// verdict.
pub fn run_selection_experiment<T: Scalar>(
    model: &Model<T>,
    grid: &TorusGrid<T>,
    ladder: &[T],
    catalog: &[CandidateSolution<T>],
    m_ref: &GridField<T>,
    schedule: LadderSchedule<T>,
    tol: T,
    opts: &SolverOptions<T>,
) -> Result<(SweepResult<T>, Verdict<T>)> {
    check_ladder(ladder)?;
    check_same(grid, m_ref.grid())?;
    let results: Vec<Result<SweepRow<T>>> = thread::scope(|s| {
        let handles: Vec<_> = ladder
            .iter()
            .map(|&eps| s.spawn(move || sweep_row(grid, model, eps, schedule.at(eps), m_ref, opts).map(|r| r.0)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::LinearSolveFailure("sweep worker panicked".into()))))
            .collect()
    });
    let mut rows = Vec::with_capacity(ladder.len());
    for (r, &eps) in results.into_iter().zip(ladder) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => rows.push(failed_row(grid, eps, schedule.at(eps), e)),
        }
    }
    let sweep = SweepResult {
        model: model.clone(),
        grid: *grid,
        rows,
    };
    let verdict = judge(&sweep, catalog, tol)?;
    Ok((sweep, verdict))
}

fn failed_row<T: Scalar>(grid: &TorusGrid<T>, eps: T, reg: Regularization<T>, e: Error) -> SweepRow<T> {
    let nan = T::nan();
    let zeros = GridField::constant(*grid, T::zero());
    SweepRow {
        eps,
        sigma: reg.sigma,
        delta: reg.delta,
        hbar_est: nan,
        mean_u: nan,
        fluctuation: zeros.clone(),
        m: zeros,
        f_value: nan,
        mass: nan,
        min_m: nan,
        holonomy_max: nan,
        action_gap: nan,
        coupling_gap: nan,
        residual_sup: nan,
        failed: Some(e.to_string()),
    }
}

fn judge<T: Scalar>(sweep: &SweepResult<T>, catalog: &[CandidateSolution<T>], tol: T) -> Result<Verdict<T>> {
    let term = sweep.rows.last().ok_or_else(|| Error::InvalidInput("empty sweep".into()))?;
    let mut f_candidates = Vec::new();
    let mut distances = Vec::new();
    for c in catalog {
        check_same(&sweep.grid, c.grid())?;
        let cu = integrate(&c.u);
        let d = term.fluctuation.zip_with(&c.u, |a, b| a - (b - cu))?;
        distances.push((c.label.clone(), integrate(&d.map(|x| x * x)).sqrt()));
        f_candidates.push((c.label.clone(), selection_functional(&c.u, &c.m)?));
    }
    let nearest = distances
        .iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|d| d.0.clone());
    let criterion_holds = term.failed.is_none() && f_candidates.iter().all(|(_, f)| term.f_value <= *f + tol);
    Ok(Verdict {
        terminal_eps: term.eps,
        hbar_terminal: term.hbar_est,
        f_terminal: term.f_value,
        f_candidates,
        distances,
        nearest,
        criterion_holds,
        tol,
        degenerate: catalog.is_empty(),
        successive_differences: sweep.successive_differences(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{example_bbb, example_exlp, exlp_catalog};
    use crate::discounted::continuation_solve;
    use crate::model::{Coupling, Potential};
    use std::f64::consts::PI;

    fn smooth(n: usize, eps: f64) -> (DiscountedSolution<f64>, Model<f64>) {
        let model = Model::sine(0.3);
        let sol = continuation_solve(&TorusGrid::line(n), eps, &model, &Regularization::none(), &SolverOptions::default()).unwrap();
        (sol, model)
    }

    #[test]
    fn pairing_examples() {
        let (sol, model) = smooth(256, 0.1);
        let one = mather_pair(|_, _| 1.0, &sol.u, &sol.m).unwrap();
        assert!((one - 1.0).abs() < 1e-9);
        let vm = mather_pair(|x, _| model.potential.eval(x), &sol.u, &sol.m).unwrap();
        let direct = integrate(&model.potential.sample(sol.grid()).zip_with(&sol.m, |a, b| a * b).unwrap());
        assert!((vm - direct).abs() < 1e-12);
        let ex = example_bbb(&TorusGrid::<f64>::line(1024)).unwrap();
        for c in &ex.candidates {
            let k = mather_pair_gradient(|_, v| v * v / 2.0, &c.u_x, &ex.m).unwrap();
            assert!(k.abs() < 1e-12);
        }
    }

    #[test]
    fn discounted_holonomy() {
        let (sol, _) = smooth(256, 0.1);
        let h = sol.grid().h();
        let ones = GridField::constant(*sol.grid(), 1.0);
        assert!(holonomy_defect_discounted(0.1, &sol, &ones).unwrap() <= 1e-9);
        for (phi, c2) in trig_basis(sol.grid(), HOLONOMY_MODES) {
            let d = holonomy_defect_discounted(0.1, &sol, &phi).unwrap();
            assert!(d <= 10.0 * h * h * c2, "defect {d}");
        }
        // corrupting m by 10% shows up as 0.1 ε |∫φ| for φ with nonzero mean
        let phi = GridField::from_fn(*sol.grid(), |x| 1.0 + 0.5 * (2.0 * PI * x).sin());
        let bad = DiscountedSolution { m: sol.m.map(|v| 1.1 * v), ..sol.clone() };
        let d = holonomy_defect_discounted(0.1, &bad, &phi).unwrap();
        assert!((d - 0.01).abs() < 2e-3, "{d}");
    }

    #[test]
    fn ergodic_holonomy_on_closed_form() {
        let grid = TorusGrid::<f64>::line(1024);
        let ex = example_exlp(&grid).unwrap();
        let basis = trig_basis(&grid, HOLONOMY_MODES);
        for c in &ex.candidates {
            for (phi, _) in &basis {
                assert!(holonomy_defect_ergodic(&c.u_x, &ex.m, phi).unwrap() <= 10.0 * grid.h());
            }
        }
        let ones = GridField::constant(grid, 1.0);
        assert_eq!(holonomy_defect_ergodic(&ex.candidates[0].u_x, &ex.m, &ones).unwrap(), 0.0);
        // a gradient living on the support of m breaks the transport equation
        let shifted = GridField::from_fn(grid, |x| ex.candidates[0].u_x.values()[((x + 0.25) * 1024.0).round() as usize % 1024]);
        let worst = basis
            .iter()
            .map(|(phi, _)| holonomy_defect_ergodic(&shifted, &ex.m, phi).unwrap())
            .fold(0.0, f64::max);
        assert!(worst > 0.1, "{worst}");
    }

    #[test]
    fn action_identity() {
        let model = Model::<f64>::new(Coupling::linear(), Potential::Zero);
        let grid = TorusGrid::line(32);
        let sol = continuation_solve(&grid, 0.3, &model, &Regularization::none(), &SolverOptions::default()).unwrap();
        let a = discounted_action(0.3, &sol, &model);
        assert!((a.lhs - 1.0).abs() < 1e-12 && (a.rhs - 1.0).abs() < 1e-12);
        let (sol, model) = smooth(256, 0.1);
        let h = sol.grid().h();
        assert!(discounted_action(0.1, &sol, &model).gap <= 10.0 * h * h);
    }

    #[test]
    fn functional_examples() {
        let grid = TorusGrid::<f64>::line(2048);
        let ex = example_exlp(&grid).unwrap();
        let c = GridField::constant(grid, 3.0);
        // constants pair to 3(∫m - 1), which is quadrature error only
        let mass_err = integrate(&ex.m) - 1.0;
        assert!((selection_functional(&c, &ex.m).unwrap() - 3.0 * mass_err).abs() < 1e-12);
        assert!(mass_err.abs() < grid.h());
        let t = ex.candidate("tilde").unwrap();
        let f = selection_functional(&t.u, &ex.m).unwrap();
        assert!((f + integrate(&t.u)).abs() < 1e-12);
        assert!((f + 0.099_635_283_698_087_5).abs() < 2.0 * grid.h());
        let shifted = t.u.map(|v| v + 7.5);
        assert!((selection_functional(&shifted, &ex.m).unwrap() - f - 7.5 * mass_err).abs() < 1e-12);
    }

    #[test]
    fn minimizer_ranking() {
        let grid = TorusGrid::<f64>::line(1024);
        let cat = exlp_catalog(&grid).unwrap();
        let m = &cat[0].m;
        let r = select_minimizer(&cat, m, 1e-9).unwrap();
        assert_eq!(r.winner(), Some("tilde"));
        assert!(r.entries.windows(2).all(|w| w[0].1 <= w[1].1));
        let zero: Vec<_> = cat.iter().filter(|c| c.label == "zero").cloned().collect();
        let r0 = select_minimizer(&zero, m, 1e-9).unwrap();
        assert_eq!(r0.winner(), Some("zero"));
        assert_eq!(r0.entries[0].1, 0.0);
        let twins = vec![cat[0].clone(), cat[0].clone()];
        assert!(select_minimizer(&twins, m, 1e-9).unwrap().ambiguous);
        assert!(matches!(select_minimizer::<f64>(&[], m, 1e-9), Err(Error::EmptyCatalog)));
        // a common shift leaves the argmin alone
        let shifted: Vec<_> = cat
            .iter()
            .map(|c| CandidateSolution { u: c.u.map(|v| v - 2.0), ..c.clone() })
            .collect();
        assert_eq!(select_minimizer(&shifted, m, 1e-9).unwrap().winner(), Some("tilde"));
    }

    #[test]
    fn coupling_gap_examples() {
        let grid = TorusGrid::<f64>::line(128);
        let model = Model::<f64>::exdp();
        let a = GridField::from_fn(grid, |x| 1.0 + 0.3 * (2.0 * PI * x).sin());
        let b = GridField::from_fn(grid, |x| 1.0 + 0.1 * (4.0 * PI * x).cos());
        assert_eq!(cross_coupling_gap(&a, &a, &model).unwrap(), 0.0);
        let gap = cross_coupling_gap(&a, &b, &model).unwrap();
        let l2 = integrate(&a.zip_with(&b, |x, y| (x - y) * (x - y)).unwrap());
        assert!((gap - l2).abs() < 1e-14);
        let cubic = Model::new(Coupling::new(1.0, 3.0).unwrap(), Potential::Zero);
        assert!(cross_coupling_gap(&a, &b, &cubic).unwrap() >= 0.0);
    }

    proptest::proptest! {
        #[test]
        fn functional_ignores_constants(c in -50.0f64..50.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let grid = TorusGrid::<f64>::line(64);
            let u = GridField::from_fn(grid, |x| a * (2.0 * PI * x).sin() + b * (6.0 * PI * x).cos());
            // m has unit discrete mass, so constants pair to zero
            let m = GridField::from_fn(grid, |x| 1.0 + 0.5 * (2.0 * PI * x).cos());
            let f = selection_functional(&u, &m).unwrap();
            let fc = selection_functional(&u.map(|v| v + c), &m).unwrap();
            proptest::prop_assert!((f - fc).abs() <= 1e-12 * (1.0 + c.abs()));
        }

        #[test]
        fn coupling_gap_is_non_negative(alpha in 0.3f64..3.0, s1 in -0.9f64..0.9, s2 in -0.9f64..0.9, k in 1usize..5) {
            let grid = TorusGrid::<f64>::line(64);
            let model = Model::new(Coupling::new(1.0, alpha).unwrap(), Potential::Zero);
            let a = GridField::from_fn(grid, |x| 1.0 + s1 * (2.0 * PI * x).sin());
            let b = GridField::from_fn(grid, |x| 1.0 + s2 * (2.0 * PI * k as f64 * x).cos());
            proptest::prop_assert!(cross_coupling_gap(&a, &b, &model).unwrap() >= 0.0);
        }
    }

    #[test]
    fn ladder_validation() {
        assert!(check_ladder(&[0.2, 0.1]).is_ok());
        assert!(check_ladder(&[0.1, 0.2]).is_err());
        assert!(check_ladder(&[0.1, 0.1]).is_err());
        assert!(check_ladder::<f64>(&[]).is_err());
        assert!(check_ladder(&[0.1, -0.1]).is_err());
    }

    #[test]
    fn smooth_model_gives_degenerate_verdict() {
        let grid = TorusGrid::<f64>::line(128);
        let model = Model::sine(0.3);
        let m_ref = GridField::from_fn(grid, |x| 1.0 + model.potential.eval(x));
        let (sweep, verdict) =
            run_selection_experiment(&model, &grid, &[0.2, 0.1], &[], &m_ref, LadderSchedule::tied(), 0.05, &SolverOptions::default()).unwrap();
        assert!(verdict.degenerate && verdict.criterion_holds && verdict.nearest.is_none());
        assert!(!sweep.any_failed());
        assert_eq!(verdict.successive_differences.len(), 1);
    }
}
