//! Steering vectors, Hermitian Toeplitz operators and dual-polynomial
//! evaluation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Unit-modulus phasor `e^{j 2π x}`, with the phase reduced modulo one
/// before scaling so large `x` keeps full precision.
pub(crate) fn phasor<T: Real>(x: T) -> Complex<T> {
    let r = x - x.floor();
    let th = T::two_pi() * r;
    Complex::new(th.cos(), th.sin())
}

/// Steering vector `a(f)` without the range check on `f`.
pub(crate) fn steering_any<T: Real>(f: T, m: usize) -> DVector<Complex<T>> {
    DVector::from_fn(m, |i, _| phasor(f * T::from_count(i)))
}

/// `M` uniform samples of `e^{j2πf m}`.
pub fn steering<T: Real>(f: T, m: usize) -> Result<DVector<Complex<T>>> {
    if m == 0 {
        return invalid("steering vector needs M >= 1");
    }
    if !(f >= T::zero() && f < T::one()) {
        return invalid(format!("frequency {f} outside [0, 1)"));
    }
    Ok(steering_any(f, m))
}

/// Steering matrix `[a(f_1) ... a(f_K)]`.
pub fn steering_matrix<T: Real>(freqs: &[T], m: usize) -> DMatrix<Complex<T>> {
    DMatrix::from_fn(m, freqs.len(), |i, k| phasor(freqs[k] * T::from_count(i)))
}

/// Hermitian Toeplitz matrix with first column `u`.
pub fn toeplitz_expand<T: Real>(u: &DVector<Complex<T>>) -> DMatrix<Complex<T>> {
    let m = u.len();
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            Complex::new(u[0].re, T::zero())
        } else if i > j {
            u[i - j]
        } else {
            u[j - i].conj()
        }
    })
}

/// Sums along the lower diagonals: `s[d] = Σ_i Z[i + d, i]`.
pub fn diagonal_sums<T: Real>(z: &DMatrix<Complex<T>>) -> DVector<Complex<T>> {
    let m = z.nrows().min(z.ncols());
    DVector::from_fn(m, |d, _| {
        (0..m - d).fold(Complex::new(T::zero(), T::zero()), |acc, i| acc + z[(i + d, i)])
    })
}

/// Adjoint of [`toeplitz_expand`] under `Re tr(B* A)`.
///
/// For `d > 0` both the lower diagonal and the conjugated upper diagonal
/// contribute, so a Hermitian input yields twice its lower diagonal sum.
pub fn toeplitz_adjoint<T: Real>(z: &DMatrix<Complex<T>>) -> DVector<Complex<T>> {
    let m = z.nrows().min(z.ncols());
    let zero = Complex::new(T::zero(), T::zero());
    DVector::from_fn(m, |d, _| {
        if d == 0 {
            (0..m).fold(zero, |acc, i| acc + z[(i, i)])
        } else {
            (0..m - d).fold(zero, |acc, i| acc + z[(i + d, i)] + z[(i, i + d)].conj())
        }
    })
}

/// `‖Q* a(f)‖₂` for any real `f` (periodic with period one).
pub(crate) fn dual_poly_norm_any<T: Real>(q: &DMatrix<Complex<T>>, f: T) -> T {
    let m = q.nrows();
    let a: Vec<Complex<T>> = (0..m).map(|i| phasor(f * T::from_count(i))).collect();
    let mut acc = T::zero();
    for col in q.column_iter() {
        let mut s = Complex::new(T::zero(), T::zero());
        for (qi, ai) in col.iter().zip(&a) {
            s += qi.conj() * ai;
        }
        acc += s.norm_sqr();
    }
    acc.sqrt()
}

/// Norm of the dual polynomial `‖Q* a(f)‖₂`.
pub fn dual_poly_norm<T: Real>(q: &DMatrix<Complex<T>>, f: T) -> Result<T> {
    if !(f >= T::zero() && f < T::one()) {
        return invalid(format!("frequency {f} outside [0, 1)"));
    }
    Ok(dual_poly_norm_any(q, f))
}

/// Default evaluation grid: `max(2^14, next power of two ≥ 8πM)`.
pub fn default_grid_size(m: usize) -> usize {
    let need = (8.0 * std::f64::consts::PI * m as f64).ceil() as usize;
    need.next_power_of_two().max(1 << 14)
}

/// Dual polynomial norm on the uniform grid `{l / L}` via zero-padded FFTs.
pub fn dual_poly_grid<T: Real>(q: &DMatrix<Complex<T>>, grid: usize) -> Vec<T> {
    let m = q.nrows();
    assert!(grid >= m, "grid must be at least as long as the polynomial");
    let fft = FftPlanner::<T>::new().plan_fft_inverse(grid);
    let mut acc = vec![T::zero(); grid];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); grid];
    for col in q.column_iter() {
        buf.iter_mut().for_each(|b| *b = Complex::new(T::zero(), T::zero()));
        for (b, c) in buf.iter_mut().zip(col.iter()) {
            *b = c.conj();
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    acc.into_iter().map(|v| v.sqrt()).collect()
}

/// Golden-section maximization of the dual polynomial norm on `[lo, hi]`.
pub(crate) fn golden_max<T: Real>(q: &DMatrix<Complex<T>>, lo: T, hi: T, tol: T) -> (T, T) {
    let g = T::lit(0.618_033_988_749_894_8);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = dual_poly_norm_any(q, c);
    let mut fd = dual_poly_norm_any(q, d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = dual_poly_norm_any(q, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = dual_poly_norm_any(q, d);
        }
        // stop once the interval stalls at machine resolution
        if d <= c {
            break;
        }
    }
    let f = (a + b) / (T::one() + T::one());
    (wrap_unit(f), dual_poly_norm_any(q, f))
}

/// Reduce `f` into `[0, 1)`.
pub fn wrap_unit<T: Real>(f: T) -> T {
    let r = f - f.floor();
    if r >= T::one() {
        T::zero()
    } else {
        r
    }
}

/// Refine a grid maximum at index `l` of a grid of size `grid`.
pub(crate) fn refine_peak<T: Real>(q: &DMatrix<Complex<T>>, l: usize, grid: usize) -> (T, T) {
    let h = T::one() / T::from_count(grid);
    let c = T::from_count(l) * h;
    let refined = golden_max(q, c - h, c + h, T::lit(1e-10));
    let at_grid = dual_poly_norm_any(q, c);
    if at_grid > refined.1 {
        (wrap_unit(c), at_grid)
    } else {
        refined
    }
}

/// Supremum of the dual polynomial norm and its maximizer.
pub fn dual_norm_sup<T: Real>(q: &DMatrix<Complex<T>>, grid: usize) -> Result<(T, T)> {
    let m = q.nrows();
    if (grid as f64) < 4.0 * std::f64::consts::PI * m as f64 || grid < m.max(1) {
        return invalid(format!("grid size {grid} below 4*pi*M for M = {m}"));
    }
    if q.iter().all(|v| v.re == T::zero() && v.im == T::zero()) {
        return Ok((T::zero(), T::zero()));
    }
    let vals = dual_poly_grid(q, grid);
    let best = (0..grid)
        .max_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    let (f, v) = refine_peak(q, best, grid);
    Ok((v, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn steering_examples() {
        let a = steering(0.0, 3).unwrap();
        assert!(a.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));
        let a = steering(0.5, 4).unwrap();
        let want = [1.0, -1.0, 1.0, -1.0];
        for (v, w) in a.iter().zip(want) {
            assert!((v - c(w, 0.0)).norm() < 1e-15);
        }
        let a = steering(0.25, 4).unwrap();
        let want = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for (v, w) in a.iter().zip(want) {
            assert!((v - w).norm() < 1e-15);
        }
        assert!(steering(1.0, 4).is_err());
        assert!(steering(-0.1, 4).is_err());
        assert!(steering(0.1, 0).is_err());
    }

    #[test]
    fn toeplitz_examples() {
        let t = toeplitz_expand(&DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]));
        assert_eq!(t, DMatrix::identity(3, 3));
        let t = toeplitz_expand(&DVector::from_vec(vec![c(2.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]));
        let want = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0]).map(|v| c(v, 0.0));
        assert_eq!(t, want);
        let t = toeplitz_expand(&DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]));
        assert_eq!(t[(0, 1)], c(0.0, -1.0));
        assert_eq!(t[(1, 0)], c(0.0, 1.0));
    }

    #[test]
    fn diagonal_sum_and_adjoint_examples() {
        let id = DMatrix::<Complex<f64>>::identity(3, 3);
        assert_eq!(diagonal_sums(&id).as_slice(), &[c(3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(toeplitz_adjoint(&id).as_slice(), &[c(3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let t = toeplitz_expand(&DVector::from_vec(vec![c(2.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]));
        assert_eq!(diagonal_sums(&t).as_slice(), &[c(6.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)]);
        // the pairing counts both triangles
        assert_eq!(toeplitz_adjoint(&t).as_slice(), &[c(6.0, 0.0), c(4.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn dual_poly_examples() {
        let q = DMatrix::<Complex<f64>>::zeros(8, 3);
        assert_eq!(dual_poly_norm(&q, 0.3).unwrap(), 0.0);
        assert_eq!(dual_norm_sup(&q, 1 << 14).unwrap().0, 0.0);

        let b = DVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let mut q = DMatrix::<Complex<f64>>::zeros(8, 2);
        q.row_mut(0).copy_from(&b.adjoint());
        for f in [0.0, 0.13, 0.5, 0.77] {
            assert_relative_eq!(dual_poly_norm(&q, f).unwrap(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn single_atom_sup() {
        let m = 64;
        let b = DVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let q = steering(0.3, m).unwrap() * b.adjoint() / Complex::new(m as f64, 0.0);
        let (v, f) = dual_norm_sup(&q, 1 << 14).unwrap();
        assert!((v - 1.0).abs() < 1e-6);
        assert!((f - 0.3).abs() < 1e-8);
        let grid = dual_poly_grid(&q, 1 << 14);
        for (l, g) in grid.iter().enumerate() {
            let fl = l as f64 / (1 << 14) as f64;
            if (fl - 0.3).abs() > 1e-3 {
                assert!(*g < 1.0 - 1e-6);
            }
        }
        assert!(dual_norm_sup(&q, 512).is_err());
    }

    #[test]
    fn grid_matches_direct_evaluation() {
        let q = DMatrix::from_fn(5, 2, |i, j| c((i + j) as f64 * 0.3 - 0.7, (i * j) as f64 * 0.1 + 0.2));
        let grid = dual_poly_grid(&q, 64);
        for (l, g) in grid.iter().enumerate() {
            assert_relative_eq!(*g, dual_poly_norm_any(&q, l as f64 / 64.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn default_grid() {
        assert_eq!(default_grid_size(16), 1 << 14);
        assert_eq!(default_grid_size(1000), 1 << 15);
    }
}
