//! Symmetric skyline (variable-band) storage with an unpivoted LDLᵀ.
//!
//! Transcribed programs couple only neighbouring knots, so with a knot-major
//! ordering the KKT matrix has a narrow envelope. The factorization keeps
//! that envelope, runs in a fixed order and reports the inertia, which the
//! solver uses to decide whether the Hessian needs regularizing.

use crate::scalar::{lit, Real};

/// Lower triangle of a symmetric matrix, row `i` holding columns
/// `first[i]..=i`.
#[derive(Debug, Clone)]
pub struct SkylineMatrix<T> {
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<T>,
}

/// Counts of positive, negative and (numerically) zero pivots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl<T: Real> SkylineMatrix<T> {
    /// Builds the envelope from the structural nonzeros `(i, j)`, in either
    /// triangle. The diagonal is always present.
    pub fn from_pattern(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut first: Vec<usize> = (0..n).collect();
        for (i, j) in entries {
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            if c < first[r] {
                first[r] = c;
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0;
        for (i, &f) in first.iter().enumerate() {
            start.push(total);
            total += i - f + 1;
        }
        start.push(total);
        SkylineMatrix {
            first,
            start,
            values: vec![T::zero(); total],
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// Number of stored entries.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = T::zero());
    }

    /// Adds `value` at `(i, j)`; the mirrored entry is implied.
    ///
    /// Panics if the position lies outside the envelope.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, value: T) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(c >= self.first[r], "entry ({r}, {c}) outside envelope");
        self.values[self.start[r] + c - self.first[r]] += value;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if c < self.first[r] {
            T::zero()
        } else {
            self.values[self.start[r] + c - self.first[r]]
        }
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[T], y: &mut [T]) {
        y.iter_mut().for_each(|v| *v = T::zero());
        for i in 0..self.dim() {
            let f = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let mut acc = T::zero();
            for (k, &a) in row.iter().enumerate() {
                let j = f + k;
                acc += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
            y[i] += acc;
        }
    }

    /// `y = |A| |x|`, elementwise absolute values.
    pub fn mul_abs_vec(&self, x: &[T], y: &mut [T]) {
        y.iter_mut().for_each(|v| *v = T::zero());
        for i in 0..self.dim() {
            let f = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let mut acc = T::zero();
            for (k, &a) in row.iter().enumerate() {
                let j = f + k;
                acc += a.abs() * x[j].abs();
                if j != i {
                    y[j] += a.abs() * x[i].abs();
                }
            }
            y[i] += acc;
        }
    }

    /// Factors in place into `L D Lᵀ` (unit `L` below the diagonal, `D` on
    /// it). Pivots with magnitude below `pivot_tol` times the largest
    /// diagonal entry count as zero and the factorization stops there.
    pub fn factor(mut self, pivot_tol: T) -> Result<LdlFactor<T>, Inertia> {
        let n = self.dim();
        let diag_scale = (0..n)
            .map(|i| self.values[self.start[i + 1] - 1].abs())
            .fold(T::zero(), T::max)
            .max(T::one());
        let threshold = pivot_tol * diag_scale;
        let mut d = vec![T::zero(); n];
        let mut u = vec![T::zero(); n];
        let mut inertia = Inertia {
            positive: 0,
            negative: 0,
            zero: 0,
        };
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            for j in fi..i {
                let fj = self.first[j];
                let sj = self.start[j];
                let lo = fi.max(fj);
                let mut t = self.values[si + j - fi];
                for k in lo..j {
                    t -= u[k] * self.values[sj + k - fj];
                }
                u[j] = t;
            }
            let mut dii = self.values[si + i - fi];
            for j in fi..i {
                let l = u[j] / d[j];
                self.values[si + j - fi] = l;
                dii -= l * u[j];
            }
            if !dii.is_finite() || dii.abs() <= threshold {
                inertia.zero += 1;
                return Err(inertia);
            }
            if dii > T::zero() {
                inertia.positive += 1;
            } else {
                inertia.negative += 1;
            }
            d[i] = dii;
            self.values[si + i - fi] = dii;
        }
        Ok(LdlFactor {
            matrix: self,
            inertia,
        })
    }
}

/// Result of [`SkylineMatrix::factor`].
#[derive(Debug, Clone)]
pub struct LdlFactor<T> {
    matrix: SkylineMatrix<T>,
    pub inertia: Inertia,
}

impl<T: Real> LdlFactor<T> {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let m = &self.matrix;
        let n = m.dim();
        for i in 0..n {
            let f = m.first[i];
            let s = m.start[i];
            let mut acc = b[i];
            for j in f..i {
                acc -= m.values[s + j - f] * b[j];
            }
            b[i] = acc;
        }
        for i in 0..n {
            b[i] /= m.values[m.start[i + 1] - 1];
        }
        for i in (0..n).rev() {
            let f = m.first[i];
            let s = m.start[i];
            let xi = b[i];
            for j in f..i {
                b[j] -= m.values[s + j - f] * xi;
            }
        }
    }
}

/// Solves `A x = b` with a factorization of a nearby matrix, correcting with
/// residuals against `A` itself. Stops once the componentwise backward error
/// reaches roundoff or after `steps` corrections.
pub fn refine<T: Real>(a: &SkylineMatrix<T>, factor: &LdlFactor<T>, b: &[T], steps: usize) -> Vec<T> {
    let n = b.len();
    let mut x = b.to_vec();
    factor.solve_in_place(&mut x);
    let mut r = vec![T::zero(); n];
    let mut magnitude = vec![T::zero(); n];
    let eps = lit::<T>(4.0) * T::epsilon();
    for _ in 0..steps {
        a.mul_vec(&x, &mut r);
        a.mul_abs_vec(&x, &mut magnitude);
        let mut backward = T::zero();
        for i in 0..n {
            r[i] = b[i] - r[i];
            let denom = magnitude[i] + b[i].abs();
            if denom > T::zero() {
                backward = backward.max(r[i].abs() / denom);
            }
        }
        if backward <= eps {
            break;
        }
        factor.solve_in_place(&mut r);
        for i in 0..n {
            x[i] += r[i];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(a: &SkylineMatrix<f64>) -> Vec<Vec<f64>> {
        let n = a.dim();
        (0..n).map(|i| (0..n).map(|j| a.get(i, j)).collect()).collect()
    }

    #[test]
    fn tridiagonal_solve() {
        let n = 6;
        let mut a = SkylineMatrix::from_pattern(n, (1..n).map(|i| (i, i - 1)));
        for i in 0..n {
            a.add(i, i, 4.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&x_true, &mut b);
        let f = a.clone().factor(1e-14).unwrap();
        assert_eq!(f.inertia.positive, n);
        let mut x = b.clone();
        f.solve_in_place(&mut x);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn saddle_point_inertia_and_refinement() {
        // [2 0 1; 0 3 1; 1 1 0]: two positive, one negative eigenvalue.
        let mut a = SkylineMatrix::from_pattern(3, [(2, 0), (2, 1)]);
        a.add(0, 0, 2.0);
        a.add(1, 1, 3.0);
        a.add(2, 0, 1.0);
        a.add(2, 1, 1.0);
        let mut reg = a.clone();
        reg.add(2, 2, -1e-10);
        let f = reg.factor(1e-300).unwrap();
        assert_eq!(f.inertia, Inertia { positive: 2, negative: 1, zero: 0 });
        let b = [1.0, 2.0, 3.0];
        let x = refine(&a, &f, &b, 3);
        let m = dense(&a);
        for i in 0..3 {
            let ax: f64 = (0..3).map(|j| m[i][j] * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_reports_zero_pivot() {
        let mut a = SkylineMatrix::from_pattern(2, [(1, 0)]);
        a.add(0, 0, 1.0);
        a.add(1, 0, 1.0);
        a.add(1, 1, 1.0);
        let inertia = a.factor(1e-12).unwrap_err();
        assert_eq!(inertia.zero, 1);
    }

    #[test]
    fn envelope_only_stores_band() {
        let a: SkylineMatrix<f64> = SkylineMatrix::from_pattern(5, [(4, 2), (1, 0)]);
        assert_eq!(a.envelope_size(), 1 + 2 + 1 + 1 + 3);
    }
}
