//! Per-scheme data-fidelity steps of the X-update.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex;

use crate::error::{AnmError, Result};
use crate::measure::{adjoint, bdot, real_times, real_tr_times, MeasurementSpec, Observation, SchemeData};
use crate::scalar::Real;

type C<T> = Complex<T>;

pub(crate) enum Fidelity<T: Real> {
    Full {
        y: DMatrix<C<T>>,
    },
    Mask {
        observed: DMatrix<bool>,
        /// zero-filled observation
        y: DMatrix<C<T>>,
    },
    Temporal {
        phi: Vec<DMatrix<T>>,
        y: Vec<DVector<C<T>>>,
        gram: Vec<Cholesky<T, Dyn>>,
        shifted: Option<(T, Vec<Cholesky<T, Dyn>>)>,
    },
    Spatial {
        b: Vec<DVector<C<T>>>,
        y: DVector<C<T>>,
        b2: Vec<T>,
    },
}

fn chol_solve<T: Real>(ch: &Cholesky<T, Dyn>, rhs: &DVector<C<T>>) -> DVector<C<T>> {
    let re = ch.solve(&rhs.map(|v| v.re));
    let im = ch.solve(&rhs.map(|v| v.im));
    DVector::from_fn(rhs.len(), |i, _| Complex::new(re[i], im[i]))
}

fn gram_cholesky<T: Real>(phi: &DMatrix<T>, shift: T) -> Result<Cholesky<T, Dyn>> {
    let mut g = phi * phi.transpose();
    for i in 0..g.nrows() {
        g[(i, i)] += shift;
    }
    Cholesky::new(g).ok_or_else(|| AnmError::Numerical("temporal compression Gram matrix is singular".into()))
}

impl<T: Real> Fidelity<T> {
    pub(crate) fn new(spec: &MeasurementSpec<T>, obs: &Observation<T>) -> Result<Self> {
        let (m, n) = (spec.rows, spec.cols);
        Ok(match (&spec.data, obs) {
            (SchemeData::Full, Observation::Full(y)) => Fidelity::Full { y: y.clone() },
            (SchemeData::SyncSample(rows), Observation::SyncSample(_)) => {
                let mut observed = DMatrix::from_element(m, n, false);
                for &r in rows {
                    observed.row_mut(r).fill(true);
                }
                Fidelity::Mask { observed, y: adjoint(spec, obs)? }
            }
            (SchemeData::AsyncSample(e), Observation::AsyncSample(_)) => {
                let mut observed = DMatrix::from_element(m, n, false);
                for &(r, c) in e {
                    observed[(r, c)] = true;
                }
                Fidelity::Mask { observed, y: adjoint(spec, obs)? }
            }
            (SchemeData::TemporalCompress(p), Observation::TemporalCompress(y)) => Fidelity::Temporal {
                gram: p.iter().map(|phi| gram_cholesky(phi, T::zero())).collect::<Result<_>>()?,
                phi: p.clone(),
                y: y.clone(),
                shifted: None,
            },
            (SchemeData::SpatialCompress(b), Observation::SpatialCompress(y)) => Fidelity::Spatial {
                b2: b.iter().map(|v| v.norm_squared()).collect(),
                b: b.clone(),
                y: y.clone(),
            },
            _ => return Err(AnmError::Validation("observation does not match the measurement scheme".into())),
        })
    }

    /// Euclidean projection onto `{X : apply(X) = y}`.
    pub(crate) fn project(&self, g: &DMatrix<C<T>>) -> DMatrix<C<T>> {
        match self {
            Fidelity::Full { y } => y.clone(),
            Fidelity::Mask { observed, y } => {
                DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| if observed[(i, j)] { y[(i, j)] } else { g[(i, j)] })
            }
            Fidelity::Temporal { phi, y, gram, .. } => {
                let mut x = g.clone();
                for j in 0..g.ncols() {
                    let col = g.column(j).into_owned();
                    let r = real_times(&phi[j], &col) - &y[j];
                    let w = chol_solve(&gram[j], &r);
                    x.set_column(j, &(col - real_tr_times(&phi[j], &w)));
                }
                x
            }
            Fidelity::Spatial { b, y, b2 } => {
                let mut x = g.clone();
                for i in 0..g.nrows() {
                    if b2[i] == T::zero() {
                        continue;
                    }
                    let s = (bdot(&b[i], g, i) - y[i]) / b2[i];
                    for j in 0..g.ncols() {
                        x[(i, j)] -= b[i][j] * s;
                    }
                }
                x
            }
        }
    }

    /// Solves `(A*A + 2ρ I) X = A*y + 2ρ G`.
    pub(crate) fn penalized(&mut self, g: &DMatrix<C<T>>, rho: T) -> Result<DMatrix<C<T>>> {
        let two_rho = rho + rho;
        Ok(match self {
            Fidelity::Full { y } => (y.clone() + g * C::new(two_rho, T::zero())) / C::new(T::one() + two_rho, T::zero()),
            Fidelity::Mask { observed, y } => DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| {
                if observed[(i, j)] {
                    (y[(i, j)] + g[(i, j)] * two_rho) / (T::one() + two_rho)
                } else {
                    g[(i, j)]
                }
            }),
            Fidelity::Temporal { phi, y, shifted, .. } => {
                if shifted.as_ref().is_none_or(|(r, _)| *r != rho) {
                    let ch = phi.iter().map(|p| gram_cholesky(p, two_rho)).collect::<Result<Vec<_>>>()?;
                    *shifted = Some((rho, ch));
                }
                let ch = &shifted.as_ref().expect("factorization cached").1;
                let mut x = g.clone();
                for j in 0..g.ncols() {
                    // Woodbury: (ΦᵀΦ + 2ρI)⁻¹ r = (r − Φᵀ(2ρI + ΦΦᵀ)⁻¹Φ r) / 2ρ
                    let r = real_tr_times(&phi[j], &y[j]) + g.column(j) * C::new(two_rho, T::zero());
                    let w = chol_solve(&ch[j], &real_times(&phi[j], &r));
                    x.set_column(j, &((r - real_tr_times(&phi[j], &w)) / C::new(two_rho, T::zero())));
                }
                x
            }
            Fidelity::Spatial { b, y, b2 } => {
                let mut x = DMatrix::zeros(g.nrows(), g.ncols());
                for i in 0..g.nrows() {
                    let rhs: Vec<C<T>> = (0..g.ncols()).map(|j| b[i][j] * y[i] + g[(i, j)] * two_rho).collect();
                    let brhs = rhs.iter().zip(b[i].iter()).fold(C::new(T::zero(), T::zero()), |s, (r, bj)| s + bj.conj() * r);
                    let s = brhs / (two_rho + b2[i]);
                    for j in 0..g.ncols() {
                        x[(i, j)] = (rhs[j] - b[i][j] * s) / two_rho;
                    }
                }
                x
            }
        })
    }

    /// Orthogonal projection onto the range of the scheme's adjoint.
    pub(crate) fn range_project(&self, q: &DMatrix<C<T>>) -> DMatrix<C<T>> {
        match self {
            Fidelity::Full { .. } => q.clone(),
            Fidelity::Mask { observed, .. } => DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| {
                if observed[(i, j)] {
                    q[(i, j)]
                } else {
                    C::new(T::zero(), T::zero())
                }
            }),
            Fidelity::Temporal { phi, gram, .. } => {
                let mut out = q.clone();
                for j in 0..q.ncols() {
                    let w = chol_solve(&gram[j], &real_times(&phi[j], &q.column(j).into_owned()));
                    out.set_column(j, &real_tr_times(&phi[j], &w));
                }
                out
            }
            Fidelity::Spatial { b, b2, .. } => {
                let mut out = DMatrix::zeros(q.nrows(), q.ncols());
                for i in 0..q.nrows() {
                    if b2[i] == T::zero() {
                        continue;
                    }
                    let s = bdot(&b[i], q, i) / b2[i];
                    for j in 0..q.ncols() {
                        out[(i, j)] = b[i][j] * s;
                    }
                }
                out
            }
        }
    }
}
