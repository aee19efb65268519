use super::fidelity::Fidelity;
use super::{AnmProblem, AnmSolution};
use crate::atomcore::{default_grid_size, dual_norm_sup};
use crate::scalar::Real;

/// Optimality-condition diagnostics for a candidate solution.
#[derive(Clone, Debug, PartialEq)]
pub struct CertificateReport<T: Real> {
    pub dual_norm: T,
    pub dual_argmax: T,
    /// `Re⟨Q, X̂⟩`
    pub alignment: T,
    pub objective: T,
    /// `‖Q − Π(Q)‖_F / ‖Q‖_F` with `Π` the projector onto the adjoint's range.
    pub range_residual: T,
    pub dual_feasible: bool,
    pub aligned: bool,
    pub in_range: bool,
}

impl<T: Real> CertificateReport<T> {
    pub fn passed(&self) -> bool {
        self.dual_feasible && self.aligned && self.in_range
    }

    /// Number of satisfied conditions, ties broken by the dual-norm excess.
    pub(crate) fn score(&self) -> (usize, T) {
        let n = self.dual_feasible as usize + self.aligned as usize + self.in_range as usize;
        (n, -(self.dual_norm - T::one()).abs())
    }
}

pub fn certificate_check<T: Real>(solution: &AnmSolution<T>, problem: &AnmProblem<T>, tol: T) -> CertificateReport<T> {
    let q = &solution.certificate.q;
    let m = q.nrows();
    let (dual_norm, dual_argmax) = dual_norm_sup(q, default_grid_size(m)).unwrap_or((T::lit(f64::INFINITY), T::zero()));
    let alignment = q
        .iter()
        .zip(solution.x.iter())
        .fold(T::zero(), |s, (a, b)| s + (b.conj() * a).re);
    let qn = q.norm();
    let range_residual = match Fidelity::new(&problem.spec, &problem.observation) {
        Ok(f) if qn > T::zero() => (q - f.range_project(q)).norm() / qn,
        Ok(_) => T::zero(),
        Err(_) => T::lit(f64::INFINITY),
    };
    CertificateReport {
        dual_norm,
        dual_argmax,
        alignment,
        objective: solution.objective,
        range_residual,
        dual_feasible: dual_norm <= T::one() + tol,
        aligned: alignment >= (T::one() - tol) * solution.objective,
        in_range: range_residual <= tol,
    }
}
