//! Frequency localization, mode-shape recovery, MAC scoring and the SVD
//! baseline.

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::atomcore::{default_grid_size, dual_poly_grid, refine_peak, steering_matrix, wrap_unit};
use crate::error::{invalid, AnmError, Result};
use crate::scalar::Real;
use crate::sdpsolve::AnmSolution;
use crate::structsim::{min_separation, ModalGroundTruth};

type C<T> = Complex<T>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateSource {
    Anm,
    Svd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModalEstimate<T: Real> {
    /// Ascending; empty for the SVD baseline.
    pub frequencies: Vec<T>,
    pub amplitudes: Vec<T>,
    /// N×K̂ with unit-norm columns.
    pub mode_shapes: DMatrix<C<T>>,
    pub source: EstimateSource,
}

impl<T: Real> ModalEstimate<T> {
    pub fn modes(&self) -> usize {
        self.mode_shapes.ncols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocateOptions<T: Real> {
    /// Peaks must reach `1 − eps_peak`.
    pub eps_peak: T,
    /// Evaluation grid; `None` uses [`default_grid_size`].
    pub grid_size: Option<usize>,
    /// Merge radius; `None` uses `0.5 / M`.
    pub merge_radius: Option<T>,
}

impl<T: Real> Default for LocateOptions<T> {
    fn default() -> Self {
        LocateOptions { eps_peak: T::lit(1e-2), grid_size: None, merge_radius: None }
    }
}

fn circ_dist<T: Real>(a: T, b: T) -> T {
    let d = wrap_unit(a - b);
    d.min(T::one() - d)
}

/// Frequencies where the dual polynomial norm touches one.
pub fn locate_frequencies<T: Real>(q: &DMatrix<C<T>>, opts: &LocateOptions<T>) -> Vec<T> {
    let m = q.nrows();
    if m == 0 || q.iter().all(|v| v.norm_sqr() == T::zero()) {
        return Vec::new();
    }
    let grid = opts.grid_size.unwrap_or_else(|| default_grid_size(m)).max(m);
    let vals = dual_poly_grid(q, grid);
    let floor = T::one() - opts.eps_peak;
    let mut peaks: Vec<(T, T)> = Vec::new();
    for l in 0..grid {
        let prev = vals[(l + grid - 1) % grid];
        let next = vals[(l + 1) % grid];
        if vals[l] > prev && vals[l] >= next && vals[l] >= floor {
            let (f, v) = refine_peak(q, l, grid);
            if v >= floor {
                peaks.push((f, v));
            }
        }
    }
    let radius = opts.merge_radius.unwrap_or_else(|| T::lit(0.5) / T::from_count(m));
    peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let mut kept: Vec<T> = Vec::new();
    for (f, _) in peaks {
        if kept.iter().all(|&g| circ_dist(f, g) >= radius) {
            kept.push(f);
        }
    }
    kept.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    kept
}

/// Least-squares `Ψ̂_A = (A_f̂† X̂)ᵀ` split into amplitude magnitudes and
/// unit-norm shapes.
pub fn recover_shapes<T: Real>(x: &DMatrix<C<T>>, freqs: &[T]) -> Result<(Vec<T>, DMatrix<C<T>>)> {
    if freqs.is_empty() {
        return invalid("no frequencies to recover shapes for");
    }
    let m = x.nrows();
    if freqs.len() > m {
        return Err(AnmError::Conditioning(format!("{} frequencies exceed {} samples", freqs.len(), m)));
    }
    if freqs.len() > 1 && min_separation(freqs)? < T::lit(1e-8) {
        return Err(AnmError::Conditioning("estimated frequencies closer than 1e-8".into()));
    }
    let a = steering_matrix(freqs, m);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > T::lit(1e-10) * smax) {
        return Err(AnmError::Conditioning(format!("steering matrix condition {:e}", (smax / smin).as_f64())));
    }
    let coef = svd
        .solve(x, T::zero())
        .map_err(|e| AnmError::Numerical(format!("least squares failed: {e}")))?;
    let psi_a = coef.transpose();
    let mut amps = Vec::with_capacity(freqs.len());
    let mut shapes = psi_a.clone();
    for (k, mut col) in shapes.column_iter_mut().enumerate() {
        let nrm = psi_a.column(k).norm();
        amps.push(nrm);
        if nrm > T::zero() {
            col /= C::new(nrm, T::zero());
        }
    }
    Ok((amps, shapes))
}

/// `|⟨ψ, ψ̂⟩|` after normalizing both vectors.
pub fn mac<T: Real>(psi: &[C<T>], psi_hat: &[C<T>]) -> Result<T> {
    if psi.len() != psi_hat.len() {
        return invalid("MAC of vectors with different lengths");
    }
    let na = psi.iter().fold(T::zero(), |s, v| s + v.norm_sqr()).sqrt();
    let nb = psi_hat.iter().fold(T::zero(), |s, v| s + v.norm_sqr()).sqrt();
    if na == T::zero() || nb == T::zero() {
        return invalid("MAC of a zero vector");
    }
    let ip = psi.iter().zip(psi_hat).fold(C::new(T::zero(), T::zero()), |s, (a, b)| s + b.conj() * a);
    Ok((ip.norm_sqr().sqrt() / (na * nb)).min(T::one()))
}

/// Leading right singular vectors of the data as mode-shape estimates.
pub fn svd_baseline<T: Real>(x: &DMatrix<C<T>>, k: usize) -> Result<ModalEstimate<T>> {
    let (m, n) = x.shape();
    if k > m.min(n) {
        return invalid(format!("K = {k} exceeds min(M, N) = {}", m.min(n)));
    }
    let svd = x.clone().svd(false, true);
    let vt = svd.v_t.as_ref().ok_or_else(|| AnmError::Numerical("SVD without right vectors".into()))?;
    let s = &svd.singular_values;
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
    // X ∝ a ψᵀ, so ψ pairs with the rows of V*
    let shapes = DMatrix::from_fn(n, k, |j, c| vt[(idx[c], j)]);
    Ok(ModalEstimate {
        frequencies: Vec::new(),
        amplitudes: idx.iter().take(k).map(|&i| s[i]).collect(),
        mode_shapes: shapes,
        source: EstimateSource::Svd,
    })
}

/// Frequencies from the solution's certificate and shapes from its data.
pub fn extract<T: Real>(solution: &AnmSolution<T>, opts: &LocateOptions<T>) -> Result<ModalEstimate<T>> {
    let freqs = locate_frequencies(&solution.certificate.q, opts);
    estimate_from(&solution.x, freqs)
}

fn estimate_from<T: Real>(x: &DMatrix<C<T>>, freqs: Vec<T>) -> Result<ModalEstimate<T>> {
    if freqs.is_empty() {
        return Ok(ModalEstimate {
            frequencies: freqs,
            amplitudes: Vec::new(),
            mode_shapes: DMatrix::zeros(x.ncols(), 0),
            source: EstimateSource::Anm,
        });
    }
    let (amplitudes, mode_shapes) = recover_shapes(x, &freqs)?;
    Ok(ModalEstimate { frequencies: freqs, amplitudes, mode_shapes, source: EstimateSource::Anm })
}

/// Keeps the `k` largest-amplitude modes of an estimate and refits their
/// shapes against `x`.
pub fn prune_to_order<T: Real>(x: &DMatrix<C<T>>, est: &ModalEstimate<T>, k: usize) -> Result<ModalEstimate<T>> {
    if est.modes() <= k {
        return Ok(est.clone());
    }
    let mut idx: Vec<usize> = (0..est.modes()).collect();
    idx.sort_by(|&a, &b| est.amplitudes[b].partial_cmp(&est.amplitudes[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut freqs: Vec<T> = idx.iter().take(k).map(|&i| est.frequencies[i]).collect();
    freqs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    estimate_from(x, freqs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport<T: Real> {
    pub mac: Vec<T>,
    /// Wrap-around errors; empty when the estimate carries no frequencies.
    pub freq_abs_error: Vec<T>,
    pub rel_fro_err: Option<T>,
    pub shape_success: bool,
    pub data_success: bool,
    pub count_match: bool,
}

/// Scores an estimate against the truth, pairing modes by ascending
/// frequency (SVD estimates by index).
pub fn evaluate<T: Real>(
    truth: &ModalGroundTruth<T>,
    est: &ModalEstimate<T>,
    x_hat: Option<&DMatrix<C<T>>>,
    x_star: Option<&DMatrix<C<T>>>,
) -> EvaluationReport<T> {
    let truth = truth.sorted();
    let k = truth.modes();
    let kh = est.modes();
    let pairs = k.min(kh);
    let mut macs = Vec::with_capacity(pairs);
    for i in 0..pairs {
        let a: Vec<C<T>> = truth.mode_shapes.column(i).iter().copied().collect();
        let b: Vec<C<T>> = est.mode_shapes.column(i).iter().copied().collect();
        macs.push(mac(&a, &b).unwrap_or(T::zero()));
    }
    let freq_abs_error = if est.frequencies.is_empty() {
        Vec::new()
    } else {
        (0..pairs).map(|i| circ_dist(truth.frequencies[i], est.frequencies[i])).collect()
    };
    let rel_fro_err = match (x_hat, x_star) {
        (Some(a), Some(b)) if a.shape() == b.shape() && b.norm() > T::zero() => Some((a - b).norm() / b.norm()),
        _ => None,
    };
    let count_match = k == kh;
    EvaluationReport {
        shape_success: count_match && macs.iter().all(|&v| v >= T::lit(0.99)),
        data_success: rel_fro_err.is_some_and(|e| e <= T::lit(1e-5)),
        mac: macs,
        freq_abs_error,
        rel_fro_err,
        count_match,
    }
}
