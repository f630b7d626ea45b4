//! Direct solvers for periodic banded systems.
//!
//! A cyclic band matrix is split into its non-wrapping band part `T` and a
//! low-rank remainder holding the corner entries. `T` is factored with a
//! partial-pivoting band LU; the remainder (plus any bordering rows and
//! columns) is absorbed through the Woodbury identity with a small dense
//! capacitance matrix. Everything is `O(n k^2)` for bandwidth `k`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// General band matrix with `kl` sub- and `ku` super-diagonals, LAPACK layout.
#[derive(Debug, Clone)]
struct BandLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    // (2 kl + ku + 1) x n, column-major by diagonal offset
    ab: Vec<T>,
    ipiv: Vec<usize>,
}

impl<T: Scalar> BandLu<T> {
    fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            ab: vec![T::zero(); (2 * kl + ku + 1) * n],
            ipiv: Vec::new(),
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        (self.kl + self.ku + i - j) * self.n + j
    }

    fn add(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i + self.ku >= j && j + self.kl >= i);
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    fn factor(&mut self) -> Result<()> {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        self.ipiv = vec![0; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = T::zero();
            for p in 0..=km {
                let v = self.ab[(kv + p) * n + j].abs();
                if v > best {
                    best = v;
                    jp = p;
                }
            }
            self.ipiv[j] = j + jp;
            if best == T::zero() || !best.is_finite() {
                return Err(Error::SingularJacobian(format!("zero pivot in column {j}")));
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            let piv = self.ab[kv * n + j];
            for p in 1..=km {
                self.ab[(kv + p) * n + j] /= piv;
            }
            for c in j + 1..=ju {
                let ujc = self.ab[self.idx(j, c)];
                if ujc != T::zero() {
                    for p in 1..=km {
                        let l = self.ab[(kv + p) * n + j];
                        let k = self.idx(j + p, c);
                        self.ab[k] -= l * ujc;
                    }
                }
            }
        }
        Ok(())
    }

    fn solve_in_place(&self, b: &mut [T]) {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            for q in 1..=km {
                b[j + q] -= self.ab[(kv + q) * n + j] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[self.idx(j, j)];
            let bj = b[j];
            for i in j.saturating_sub(kv)..j {
                b[i] -= self.ab[self.idx(i, j)] * bj;
            }
        }
    }
}

/// Dense LU with partial pivoting for the small capacitance matrices.
fn dense_solve<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<Vec<T>>) -> Result<Vec<Vec<T>>> {
    let r = a.len();
    let scale = a
        .iter()
        .flatten()
        .fold(T::zero(), |m, v| m.max(v.abs()))
        .max(T::min_positive_value());
    for c in 0..r {
        let p = (c..r)
            .max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())
            .unwrap();
        if !(a[p][c].abs() > T::epsilon() * scale * T::lit(1e-3)) {
            return Err(Error::SingularJacobian(format!(
                "capacitance matrix pivot {c} vanishes"
            )));
        }
        a.swap(c, p);
        b.swap(c, p);
        for i in c + 1..r {
            let f = a[i][c] / a[c][c];
            if f != T::zero() {
                for k in c..r {
                    let v = a[c][k];
                    a[i][k] -= f * v;
                }
                for k in 0..b[i].len() {
                    let v = b[c][k];
                    b[i][k] -= f * v;
                }
            }
        }
    }
    for c in (0..r).rev() {
        for k in 0..b[c].len() {
            let mut s = b[c][k];
            for j in c + 1..r {
                s -= a[c][j] * b[j][k];
            }
            b[c][k] = s / a[c][c];
        }
    }
    Ok(b)
}

/// Square cyclic band matrix: row `i` couples to columns `i-k ..= i+k` modulo `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicBanded<T> {
    n: usize,
    k: usize,
    // row-major, 2k+1 entries per row, offset -k..=k
    rows: Vec<T>,
}

impl<T: Scalar> CyclicBanded<T> {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            n,
            k,
            rows: vec![T::zero(); n * (2 * k + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.k
    }

    /// Entry at row `i`, periodic offset `off` in `-k..=k`.
    pub fn get(&self, i: usize, off: isize) -> T {
        self.rows[i * (2 * self.k + 1) + (off + self.k as isize) as usize]
    }

    pub fn add(&mut self, i: usize, off: isize, v: T) {
        debug_assert!(off.unsigned_abs() <= self.k);
        self.rows[i * (2 * self.k + 1) + (off + self.k as isize) as usize] += v;
    }

    pub fn set(&mut self, i: usize, off: isize, v: T) {
        self.rows[i * (2 * self.k + 1) + (off + self.k as isize) as usize] = v;
    }

    #[inline]
    fn col(&self, i: usize, off: isize) -> usize {
        (i as isize + off).rem_euclid(self.n as isize) as usize
    }

    /// Dense copy, summing entries whose periodic columns coincide.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n]; self.n];
        for i in 0..self.n {
            for off in -(self.k as isize)..=self.k as isize {
                d[i][self.col(i, off)] += self.get(i, off);
            }
        }
        d
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                (-(self.k as isize)..=self.k as isize)
                    .map(|off| self.get(i, off) * x[self.col(i, off)])
                    .sum()
            })
            .collect()
    }

    /// `x^T A` (row vector times matrix).
    pub fn apply_transpose(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            for off in -(self.k as isize)..=self.k as isize {
                y[self.col(i, off)] += self.get(i, off) * x[i];
            }
        }
        y
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> T {
        let d = self.to_dense();
        let mut m = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max((d[i][j] - d[j][i]).abs());
            }
        }
        m
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        Bordered::new(self.clone()).solve(b, &[])
    }
}

/// Cyclic band matrix bordered by `nb` extra columns and rows:
///
/// ```text
/// [ A   U ] [x]   [f]
/// [ V^T D ] [y] = [g]
/// ```
#[derive(Debug, Clone)]
pub struct Bordered<T> {
    core: CyclicBanded<T>,
    cols: Vec<Vec<T>>,
    rows: Vec<Vec<T>>,
    corner: Vec<Vec<T>>,
}

impl<T: Scalar> Bordered<T> {
    pub fn new(core: CyclicBanded<T>) -> Self {
        Self {
            core,
            cols: Vec::new(),
            rows: Vec::new(),
            corner: Vec::new(),
        }
    }

    /// Appends one bordering unknown with column `col` (length n), row `row`
    /// (length n) and the corner coupling to all border unknowns (the new row
    /// of `D`, length = number of border unknowns after insertion). The new
    /// column of `D` above the diagonal is taken as zero.
    pub fn push(&mut self, col: Vec<T>, row: Vec<T>, corner_row: Vec<T>) {
        assert_eq!(col.len(), self.core.n);
        assert_eq!(row.len(), self.core.n);
        for r in &mut self.corner {
            r.push(T::zero());
        }
        assert_eq!(corner_row.len(), self.corner.len() + 1);
        self.cols.push(col);
        self.rows.push(row);
        self.corner.push(corner_row);
    }

    /// Sets `D[i][j]`.
    pub fn set_corner(&mut self, i: usize, j: usize, v: T) {
        self.corner[i][j] = v;
    }

    pub fn size(&self) -> usize {
        self.core.n + self.cols.len()
    }

    fn dense(&self) -> Vec<Vec<T>> {
        let n = self.core.n;
        let nb = self.cols.len();
        let mut d = self.core.to_dense();
        for (i, row) in d.iter_mut().enumerate() {
            row.extend(self.cols.iter().map(|c| c[i]));
        }
        for b in 0..nb {
            let mut r = self.rows[b].clone();
            r.extend(self.corner[b].iter().copied());
            d.push(r);
        }
        debug_assert_eq!(d.len(), n + nb);
        d
    }

    /// Matrix-vector product with the full bordered matrix.
    pub fn apply(&self, x: &[T], y: &[T]) -> (Vec<T>, Vec<T>) {
        let mut top = self.core.apply(x);
        for (b, c) in self.cols.iter().enumerate() {
            for i in 0..top.len() {
                top[i] += c[i] * y[b];
            }
        }
        let bottom = (0..self.cols.len())
            .map(|b| {
                self.rows[b].iter().zip(x).map(|(&r, &v)| r * v).sum::<T>()
                    + self.corner[b].iter().zip(y).map(|(&c, &v)| c * v).sum::<T>()
            })
            .collect();
        (top, bottom)
    }

    /// Solves the bordered system; returns `(x, y)` concatenated.
    pub fn solve(&self, f: &[T], g: &[T]) -> Result<Vec<T>> {
        let n = self.core.n;
        let k = self.core.k;
        let nb = self.cols.len();
        assert_eq!(f.len(), n);
        assert_eq!(g.len(), nb);

        let mut rhs = f.to_vec();
        rhs.extend_from_slice(g);

        if n <= 4 * k + 2 {
            let sol = dense_solve(self.dense(), rhs.into_iter().map(|v| vec![v]).collect())?;
            return Ok(sol.into_iter().map(|r| r[0]).collect());
        }

        let scale = self
            .core
            .rows
            .iter()
            .fold(T::zero(), |m, v| m.max(v.abs()))
            .max(T::one());
        // The non-wrapping band part can be singular even when the cyclic
        // matrix is not; shifting its first and last k diagonal entries (and
        // compensating in the low-rank part) moves it off the singularity.
        let mut last_err = None;
        for shift in [T::zero(), scale, -T::lit(1.37) * scale] {
            match self.split(shift) {
                Ok((band, updates)) => return self.woodbury(band, updates, rhs),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.expect("at least one splitting attempted"))
    }

    #[allow(clippy::type_complexity)]
    fn split(&self, shift: T) -> Result<(BandLu<T>, Vec<(Vec<T>, Vec<T>)>)> {
        let n = self.core.n;
        let k = self.core.k;
        let nb = self.cols.len();
        let total = n + nb;
        let mut band = BandLu::zeros(total, k, k);
        let mut updates: Vec<(Vec<T>, Vec<T>)> = Vec::new();
        for i in 0..n {
            let mut wrapped: Option<Vec<T>> = None;
            for off in -(k as isize)..=k as isize {
                let v = self.core.get(i, off);
                let j = i as isize + off;
                if (0..n as isize).contains(&j) {
                    band.add(i, j as usize, v);
                } else if v != T::zero() {
                    let q = wrapped.get_or_insert_with(|| vec![T::zero(); total]);
                    q[self.core.col(i, off)] += v;
                }
            }
            if shift != T::zero() && (i < k || i >= n - k) {
                band.add(i, i, shift);
                let q = wrapped.get_or_insert_with(|| vec![T::zero(); total]);
                q[i] -= shift;
            }
            if let Some(q) = wrapped {
                let mut p = vec![T::zero(); total];
                p[i] = T::one();
                updates.push((p, q));
            }
        }
        for b in 0..nb {
            band.add(n + b, n + b, T::one());
            // row b of the border minus the identity placed in the band part
            let mut q = self.rows[b].clone();
            q.extend(self.corner[b].iter().copied());
            q[n + b] -= T::one();
            let mut p = vec![T::zero(); total];
            p[n + b] = T::one();
            updates.push((p, q));
            // column b of the border restricted to the top block
            let mut pc = self.cols[b].clone();
            pc.resize(pc.len() + nb, T::zero());
            let mut qc = vec![T::zero(); total];
            qc[n + b] = T::one();
            updates.push((pc, qc));
        }
        band.factor()?;
        Ok((band, updates))
    }

    fn woodbury(
        &self,
        band: BandLu<T>,
        updates: Vec<(Vec<T>, Vec<T>)>,
        rhs: Vec<T>,
    ) -> Result<Vec<T>> {
        let total = rhs.len();
        let mut y = rhs;
        band.solve_in_place(&mut y);
        if updates.is_empty() {
            return Ok(y);
        }
        let r = updates.len();
        let z: Vec<Vec<T>> = updates
            .iter()
            .map(|(p, _)| {
                let mut v = p.clone();
                band.solve_in_place(&mut v);
                v
            })
            .collect();
        let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x * y).sum::<T>();
        let cap: Vec<Vec<T>> = (0..r)
            .map(|a| {
                (0..r)
                    .map(|b| {
                        let d = dot(&updates[a].1, &z[b]);
                        if a == b {
                            d + T::one()
                        } else {
                            d
                        }
                    })
                    .collect()
            })
            .collect();
        let qy: Vec<Vec<T>> = updates.iter().map(|(_, q)| vec![dot(q, &y)]).collect();
        let w = dense_solve(cap, qy)?;
        for (zb, wb) in z.iter().zip(&w) {
            for i in 0..total {
                y[i] -= zb[i] * wb[0];
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolveFailure("non-finite solution".into()));
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_cyclic(n: usize, k: usize, seed: u64, dominance: f64) -> CyclicBanded<f64> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut a = CyclicBanded::zeros(n, k);
        for i in 0..n {
            for off in -(k as isize)..=k as isize {
                a.set(i, off, rng.gen_range(-1.0..1.0));
            }
            a.add(i, 0, dominance);
        }
        a
    }

    fn residual(a: &CyclicBanded<f64>, x: &[f64], b: &[f64]) -> f64 {
        a.apply(x)
            .iter()
            .zip(b)
            .fold(0.0, |m, (p, q)| m.max((p - q).abs()))
    }

    #[test]
    fn tridiagonal_periodic_laplacian_plus_shift() {
        let n = 50;
        let mut a = CyclicBanded::zeros(n, 1);
        for i in 0..n {
            a.set(i, -1, 1.0);
            a.set(i, 0, -2.0 - 1e-3);
            a.set(i, 1, 1.0);
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = a.solve(&b).unwrap();
        assert!(residual(&a, &x, &b) < 1e-9);
    }

    #[test]
    fn non_dominant_systems_need_pivoting() {
        // zero diagonal defeats the unpivoted Thomas algorithm
        let n = 9;
        let mut a = CyclicBanded::zeros(n, 1);
        for i in 0..n {
            a.set(i, -1, 1.0 + i as f64 * 0.1);
            a.set(i, 0, 0.0);
            a.set(i, 1, -1.0 + i as f64 * 0.05);
        }
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let x = a.solve(&b).unwrap();
        assert!(residual(&a, &x, &b) < 1e-10);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let n = 16;
        let mut a = CyclicBanded::zeros(n, 1);
        for i in 0..n {
            a.set(i, -1, 1.0);
            a.set(i, 0, -2.0);
            a.set(i, 1, 1.0);
        }
        let b = vec![1.0; n];
        assert!(a.solve(&b).is_err());
    }

    #[test]
    fn bordered_gauge_fixed_laplacian() {
        // singular periodic Laplacian made regular by a mean constraint and a
        // multiplier column of ones
        let n = 64;
        let h = 1.0 / n as f64;
        let mut a = CyclicBanded::zeros(n, 1);
        for i in 0..n {
            a.set(i, -1, 1.0 / (h * h));
            a.set(i, 0, -2.0 / (h * h));
            a.set(i, 1, 1.0 / (h * h));
        }
        let mut sys = Bordered::new(a);
        sys.push(vec![1.0; n], vec![h; n], vec![0.0]);
        let f: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 * h).cos())
            .collect();
        let sol = sys.solve(&f, &[0.0]).unwrap();
        let (top, bottom) = sys.apply(&sol[..n], &sol[n..]);
        for i in 0..n {
            assert!((top[i] - f[i]).abs() < 1e-8);
        }
        assert!(bottom[0].abs() < 1e-12);
        assert!(sol[n].abs() < 1e-10, "multiplier must vanish for mean-zero data");
    }

    #[test]
    fn small_systems_fall_back_to_dense() {
        let a = random_cyclic(5, 2, 3, 4.0);
        let b = vec![1.0, -2.0, 0.5, 3.0, 0.0];
        let x = a.solve(&b).unwrap();
        assert!(residual(&a, &x, &b) < 1e-12);
    }

    proptest! {
        #[test]
        fn banded_solve_matches_dense_product(
            n in 11usize..80,
            k in 1usize..3,
            seed in any::<u64>(),
        ) {
            let a = random_cyclic(n, k, seed, 0.0);
            let b: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
            // random band matrices are almost surely regular; skip the rare
            // ill-conditioned draw rather than assert on it
            if let Ok(x) = a.solve(&b) {
                let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                prop_assert!(residual(&a, &x, &b) < 1e-8 * scale);
            }
        }
    }
}
