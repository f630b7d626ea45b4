//! Periodic uniform grids on the flat torus `[0,1)^d` and discrete calculus on them.
//!
//! Nodes sit at `x_i = i h` with `h = 1/n`; every index wraps modulo `n`.
//! The central gradient and central divergence are exact adjoints under the
//! rectangle-rule inner product, so summation by parts holds to rounding.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform periodic mesh with `n` nodes per axis in dimension 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGrid<T> {
    dim: usize,
    n: usize,
    h: T,
}

impl<T: Scalar> TorusGrid<T> {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidInput(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n == 0 {
            return Err(Error::InvalidInput("grid needs at least one node per axis".into()));
        }
        Ok(Self {
            dim,
            n,
            h: T::one() / T::from_count(n),
        })
    }

    /// One-dimensional grid; panics on `n == 0`.
    pub fn line(n: usize) -> Self {
        Self::new(1, n).expect("n must be positive")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> T {
        self.h
    }

    /// Total number of nodes, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^d`.
    pub fn cell_volume(&self) -> T {
        self.h.powi(self.dim as i32)
    }

    /// Coordinate of node `i` along an axis (index wraps).
    pub fn coord(&self, i: usize) -> T {
        T::from_count(i % self.n) * self.h
    }

    /// Node coordinates in 1D.
    pub fn nodes(&self) -> Vec<T> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Midpoints `x_{i+1/2}` in 1D.
    pub fn faces(&self) -> Vec<T> {
        (0..self.n)
            .map(|i| (T::from_count(i) + T::half()) * self.h)
            .collect()
    }

    #[inline]
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.n as isize) as usize
    }

    #[inline]
    fn flat(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    /// Neighbor of flat node `k` shifted by `s` along `axis`.
    fn shifted(&self, k: usize, axis: usize, s: isize) -> usize {
        match self.dim {
            1 => self.wrap(k as isize + s),
            _ => {
                let (i, j) = (k / self.n, k % self.n);
                if axis == 0 {
                    self.flat(self.wrap(i as isize + s), j)
                } else {
                    self.flat(i, self.wrap(j as isize + s))
                }
            }
        }
    }

    fn same_as(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n
    }
}

/// Node-sampled scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T> {
    grid: TorusGrid<T>,
    values: Vec<T>,
}

impl<T: Scalar> GridField<T> {
    /// Wraps node values, rejecting wrong lengths and non-finite entries.
    pub fn new(grid: TorusGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at node {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TorusGrid<T>, c: T) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f(x)` at the nodes of a 1D grid.
    pub fn from_fn(grid: TorusGrid<T>, f: impl Fn(T) -> T) -> Self {
        assert_eq!(grid.dim(), 1, "from_fn samples 1D grids");
        Self {
            grid,
            values: grid.nodes().into_iter().map(f).collect(),
        }
    }

    /// Samples `f(x, y)` at the nodes of a 2D grid in row-major order.
    pub fn from_fn2(grid: TorusGrid<T>, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(grid.dim(), 2, "from_fn2 samples 2D grids");
        let n = grid.n();
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f(grid.coord(i), grid.coord(j)));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Node-wise map producing a new field on the same grid.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Node-wise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        check_same(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Quadrature mean (equal to the integral on the unit torus).
    pub fn mean(&self) -> T {
        integrate(self)
    }

    /// Writes `x[,y],value` rows in node order with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.grid.n();
        if self.grid.dim() == 1 {
            writeln!(w, "x,value")?;
            for (i, v) in self.values.iter().enumerate() {
                writeln!(w, "{},{}", self.grid.coord(i), v)?;
            }
        } else {
            writeln!(w, "x,y,value")?;
            for (k, v) in self.values.iter().enumerate() {
                writeln!(w, "{},{},{}", self.grid.coord(k / n), self.grid.coord(k % n), v)?;
            }
        }
        Ok(())
    }
}

/// Node-sampled vector field with `d` components.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<T> {
    grid: TorusGrid<T>,
    components: Vec<Vec<T>>,
}

impl<T: Scalar> VectorField<T> {
    pub fn new(grid: TorusGrid<T>, components: Vec<Vec<T>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::InvalidInput(format!(
                "vector field needs {} components, got {}",
                grid.dim(),
                components.len()
            )));
        }
        for c in &components {
            GridField::new(grid, c.clone())?;
        }
        Ok(Self { grid, components })
    }

    /// One-component field on a 1D grid.
    pub fn from_scalar(f: GridField<T>) -> Self {
        Self {
            grid: f.grid,
            components: vec![f.values],
        }
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[T] {
        &self.components[axis]
    }

    pub fn components(&self) -> &[Vec<T>] {
        &self.components
    }

    /// Component `axis` as a scalar field.
    pub fn to_field(&self, axis: usize) -> GridField<T> {
        GridField {
            grid: self.grid,
            values: self.components[axis].clone(),
        }
    }

    /// Pointwise squared Euclidean norm.
    pub fn norm_sq(&self) -> GridField<T> {
        let values = (0..self.grid.len())
            .map(|k| self.components.iter().map(|c| c[k] * c[k]).sum())
            .collect();
        GridField {
            grid: self.grid,
            values,
        }
    }

    /// Pointwise dot product.
    pub fn dot(&self, other: &Self) -> Result<GridField<T>> {
        check_same(&self.grid, &other.grid)?;
        let values = (0..self.grid.len())
            .map(|k| {
                self.components
                    .iter()
                    .zip(&other.components)
                    .map(|(a, b)| a[k] * b[k])
                    .sum()
            })
            .collect();
        Ok(GridField {
            grid: self.grid,
            values,
        })
    }
}

pub(crate) fn check_same<T: Scalar>(a: &TorusGrid<T>, b: &TorusGrid<T>) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "(d={}, n={}) vs (d={}, n={})",
            a.dim, a.n, b.dim, b.n
        )))
    }
}

/// Second-order central gradient with periodic wrap.
pub fn gradient_central<T: Scalar>(f: &GridField<T>) -> VectorField<T> {
    let grid = f.grid;
    let inv = T::one() / (T::two() * grid.h());
    let components = (0..grid.dim())
        .map(|axis| {
            (0..grid.len())
                .map(|k| {
                    (f.values[grid.shifted(k, axis, 1)] - f.values[grid.shifted(k, axis, -1)]) * inv
                })
                .collect()
        })
        .collect();
    VectorField { grid, components }
}

/// Central divergence, the negative adjoint of [`gradient_central`].
pub fn divergence_central<T: Scalar>(field: &VectorField<T>) -> GridField<T> {
    let grid = field.grid;
    let inv = T::one() / (T::two() * grid.h());
    let values = (0..grid.len())
        .map(|k| {
            field
                .components
                .iter()
                .enumerate()
                .map(|(axis, c)| (c[grid.shifted(k, axis, 1)] - c[grid.shifted(k, axis, -1)]) * inv)
                .sum()
        })
        .collect();
    GridField { grid, values }
}

/// Standard compact periodic Laplacian (3-point per axis).
pub fn laplacian<T: Scalar>(f: &GridField<T>) -> GridField<T> {
    let grid = f.grid;
    let inv = T::one() / (grid.h() * grid.h());
    let values = (0..grid.len())
        .map(|k| {
            (0..grid.dim())
                .map(|axis| {
                    (f.values[grid.shifted(k, axis, 1)] - T::two() * f.values[k]
                        + f.values[grid.shifted(k, axis, -1)])
                        * inv
                })
                .sum()
        })
        .collect();
    GridField { grid, values }
}

/// Rectangle-rule quadrature `h^d Σ f_i`.
pub fn integrate<T: Scalar>(f: &GridField<T>) -> T {
    f.grid.cell_volume() * f.values.iter().copied().sum::<T>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms<T> {
    pub sup: T,
    pub l2: T,
    pub l1: T,
    /// `max f - min f`.
    pub osc: T,
}

pub fn norms<T: Scalar>(f: &GridField<T>) -> Norms<T> {
    let w = f.grid.cell_volume();
    let sup = f.values.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    let l1 = w * f.values.iter().map(|v| v.abs()).sum::<T>();
    let l2 = (w * f.values.iter().map(|&v| v * v).sum::<T>()).sqrt();
    Norms {
        sup,
        l2,
        l1,
        osc: f.max() - f.min(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sup_err(a: &[f64], b: impl Fn(usize) -> f64) -> f64 {
        a.iter()
            .enumerate()
            .fold(0.0, |m, (i, v)| m.max((v - b(i)).abs()))
    }

    #[test]
    fn spacing_times_count_is_one() {
        for n in [1usize, 3, 7, 64, 100, 4096] {
            let g = TorusGrid::<f64>::line(n);
            assert!((g.h() * n as f64 - 1.0).abs() <= f64::EPSILON);
        }
        assert!(TorusGrid::<f64>::new(3, 4).is_err());
        assert!(TorusGrid::<f64>::new(1, 0).is_err());
    }

    #[test]
    fn field_rejects_bad_values() {
        let g = TorusGrid::<f64>::line(4);
        assert!(GridField::new(g, vec![0.0; 3]).is_err());
        assert!(GridField::new(g, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(GridField::new(g, vec![1.0; 4]).is_ok());
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = TorusGrid::<f64>::line(32);
        let grad = gradient_central(&GridField::constant(g, 5.0));
        assert!(grad.component(0).iter().all(|&v| v == 0.0));
        let g2 = TorusGrid::<f64>::new(2, 8).unwrap();
        let grad2 = gradient_central(&GridField::constant(g2, -2.0));
        assert!(grad2.components().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_sine_is_second_order() {
        let g = TorusGrid::<f64>::line(256);
        let f = GridField::from_fn(g, |x| (2.0 * PI * x).sin());
        let grad = gradient_central(&f);
        let err = sup_err(grad.component(0), |i| 2.0 * PI * (2.0 * PI * g.coord(i)).cos());
        // Taylor remainder (2π)^3 h^2 / 6
        let bound = (2.0 * PI).powi(3) / 6.0 * g.h() * g.h();
        assert!(err <= bound * 1.01, "err {err} bound {bound}");
    }

    #[test]
    fn gradient_of_symmetric_profile_is_antisymmetric() {
        let n = 64;
        let g = TorusGrid::<f64>::line(n);
        let f = GridField::from_fn(g, |x| x * (1.0 - x));
        let d = gradient_central(&f);
        let d = d.component(0);
        // f(1/2 + s) = f(1/2 - s) so the gradient flips sign about node n/2.
        for k in 1..n / 2 {
            assert!((d[n / 2 + k] + d[n / 2 - k]).abs() < 1e-12);
        }
        assert!(d[n / 2].abs() < 1e-12);
    }

    #[test]
    fn gradient_order_under_refinement() {
        let f = |x: f64| (2.0 * PI * x).sin() + 0.3 * (4.0 * PI * x).cos();
        let df = |x: f64| 2.0 * PI * (2.0 * PI * x).cos() - 1.2 * PI * (4.0 * PI * x).sin();
        let errs: Vec<f64> = [64usize, 128, 256, 512]
            .iter()
            .map(|&n| {
                let g = TorusGrid::<f64>::line(n);
                let grad = gradient_central(&GridField::from_fn(g, f));
                sup_err(grad.component(0), |i| df(g.coord(i)))
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() <= 0.2, "observed order {order}");
        }
    }

    #[test]
    fn divergence_examples() {
        let g = TorusGrid::<f64>::line(128);
        let c = VectorField::from_scalar(GridField::constant(g, 3.0));
        assert!(divergence_central(&c).values().iter().all(|&v| v == 0.0));

        let f = VectorField::from_scalar(GridField::from_fn(g, |x| (2.0 * PI * x).cos()));
        let div = divergence_central(&f);
        let err = sup_err(div.values(), |i| -2.0 * PI * (2.0 * PI * g.coord(i)).sin());
        assert!(err <= (2.0 * PI).powi(3) / 6.0 * g.h() * g.h() * 1.01);
    }

    fn sbp_gap(f: &[f64], gv: &[f64], n: usize) -> f64 {
        let g = TorusGrid::<f64>::line(n);
        let big_f = VectorField::from_scalar(GridField::new(g, f.to_vec()).unwrap());
        let small = GridField::new(g, gv.to_vec()).unwrap();
        let lhs = integrate(&divergence_central(&big_f).zip_with(&small, |a, b| a * b).unwrap());
        let rhs = -integrate(&big_f.dot(&gradient_central(&small)).unwrap());
        (lhs - rhs).abs()
    }

    #[test]
    fn summation_by_parts_random_fields() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let n = 64;
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gv: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!(sbp_gap(&f, &gv, n) < 1e-12);
    }

    #[test]
    fn summation_by_parts_in_two_dimensions() {
        let g = TorusGrid::<f64>::new(2, 16).unwrap();
        let a = GridField::from_fn2(g, |x, y| (2.0 * PI * x).sin() * (y + 0.3).cos());
        let b = GridField::from_fn2(g, |x, y| x * y + (6.0 * PI * y).cos());
        let grad_a = gradient_central(&a);
        let lhs = integrate(&divergence_central(&grad_a).zip_with(&b, |p, q| p * q).unwrap());
        let rhs = -integrate(&grad_a.dot(&gradient_central(&b)).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
        assert!((integrate(&GridField::constant(g, 1.0)) - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn summation_by_parts_holds(
            n in 3usize..40,
            seed in proptest::collection::vec(-10.0f64..10.0, 80),
        ) {
            let f = &seed[..n];
            let g = &seed[40..40 + n];
            prop_assert!(sbp_gap(f, g, n) < 1e-11);
        }

        #[test]
        fn derivatives_annihilate_constants(n in 1usize..50, c in -1e3f64..1e3) {
            let g = TorusGrid::<f64>::line(n);
            let f = GridField::constant(g, c);
            prop_assert!(gradient_central(&f).component(0).iter().all(|&v| v == 0.0));
            prop_assert!(laplacian(&f).values().iter().all(|&v| v.abs() < 1e-9 * c.abs().max(1.0)));
            prop_assert!((integrate(&GridField::constant(g, 1.0)) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn integrate_examples() {
        let g = TorusGrid::<f64>::line(128);
        assert!((integrate(&GridField::constant(g, 1.0)) - 1.0).abs() < 1e-15);
        let s = GridField::from_fn(g, |x| (2.0 * PI * x).sin());
        assert!(integrate(&s).abs() < 1e-15);
        let g = TorusGrid::<f64>::line(4096);
        let m = GridField::from_fn(g, |x| (PI * (4.0 * PI * x).cos()).max(0.0));
        assert!((integrate(&m) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn norms_examples() {
        let g = TorusGrid::<f64>::line(256);
        let h2 = g.h() * g.h();
        let c = norms(&GridField::constant(g, -2.5));
        assert_eq!(c.osc, 0.0);
        assert_eq!(c.sup, 2.5);
        assert!((c.l1 - 2.5).abs() < 1e-12 && (c.l2 - 2.5).abs() < 1e-12);

        let s = norms(&GridField::from_fn(g, |x| 0.3 * (2.0 * PI * x).sin()));
        assert!((s.osc - 0.6).abs() <= h2);
        let p = norms(&GridField::from_fn(g, |x| PI * (2.0 * PI * x).cos()));
        assert!((p.osc - 2.0 * PI).abs() <= h2);
    }

    #[test]
    fn csv_layout() {
        let g = TorusGrid::<f64>::line(4);
        let f = GridField::from_fn(g, |x| 2.0 * x);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "x,value\n0,0\n0.25,0.5\n0.5,1\n0.75,1.5\n"
        );
        let g2 = TorusGrid::<f64>::new(2, 2).unwrap();
        let f2 = GridField::from_fn2(g2, |x, y| x + 10.0 * y);
        let mut buf = Vec::new();
        f2.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "x,y,value\n0,0,0\n0,0.5,5\n0.5,0,0.5\n0.5,0.5,5.5\n"
        );
    }

    #[test]
    fn works_in_single_precision() {
        let g = TorusGrid::<f32>::line(64);
        let f = GridField::from_fn(g, |x| (2.0 * std::f32::consts::PI * x).sin());
        assert!(integrate(&f).abs() < 1e-5);
        assert!(gradient_central(&f).component(0)[0] > 6.0);
    }
}
