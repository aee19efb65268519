//! Lumped mass-spring-damper structures, their modal parameters, and
//! sampled free-vibration data.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::atomcore::phasor;
use crate::error::{invalid, AnmError, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct StructuralSystem<T: Real> {
    pub mass: DMatrix<T>,
    pub stiffness: DMatrix<T>,
    pub damping: DMatrix<T>,
    pub proportional_damping: Option<(T, T)>,
}

fn check_symmetric<T: Real>(a: &DMatrix<T>, what: &str) -> Result<()> {
    if !a.is_square() {
        return invalid(format!("{what} matrix is {}x{}, not square", a.nrows(), a.ncols()));
    }
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > T::lit(1e-10) {
                return invalid(format!("{what} matrix not symmetric at ({i}, {j})"));
            }
        }
    }
    Ok(())
}

impl<T: Real> StructuralSystem<T> {
    /// Undamped system from full mass and stiffness matrices.
    pub fn new(mass: DMatrix<T>, stiffness: DMatrix<T>) -> Result<Self> {
        let n = mass.nrows();
        let sys = StructuralSystem { damping: DMatrix::zeros(n, n), mass, stiffness, proportional_damping: None };
        sys.validate()?;
        Ok(sys)
    }

    /// Chain of `n` masses joined by `n + 1` springs, the outer two
    /// anchored to ground.
    pub fn chain(masses: &[T], springs: &[T]) -> Result<Self> {
        let n = masses.len();
        if n == 0 || springs.len() != n + 1 {
            return invalid(format!("chain needs n >= 1 masses and n + 1 springs, got {} and {}", n, springs.len()));
        }
        let mass = DMatrix::from_diagonal(&DVector::from_column_slice(masses));
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = springs[i] + springs[i + 1];
            if i + 1 < n {
                k[(i, i + 1)] = -springs[i + 1];
                k[(i + 1, i)] = -springs[i + 1];
            }
        }
        Self::new(mass, k)
    }

    /// Sets `damping = α·mass + β·stiffness`.
    pub fn with_proportional_damping(mut self, alpha: T, beta: T) -> Self {
        self.damping = &self.mass * alpha + &self.stiffness * beta;
        self.proportional_damping = Some((alpha, beta));
        self
    }

    pub fn dof(&self) -> usize {
        self.mass.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mass.nrows();
        if n == 0 {
            return invalid("empty structural system");
        }
        check_symmetric(&self.mass, "mass")?;
        check_symmetric(&self.stiffness, "stiffness")?;
        if self.stiffness.nrows() != n || self.damping.shape() != (n, n) {
            return invalid("mass, stiffness and damping shapes differ");
        }
        if let Some((a, b)) = self.proportional_damping {
            let c = &self.mass * a + &self.stiffness * b;
            if (c - &self.damping).amax() > T::lit(1e-12) {
                return invalid("damping matrix inconsistent with proportional coefficients");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalModes<T: Real> {
    /// Undamped natural frequencies in Hz, ascending.
    pub natural_frequencies: Vec<T>,
    pub damped_frequencies: Vec<T>,
    pub damping_ratios: Vec<T>,
    /// Unit Euclidean norm columns.
    pub mode_shapes: DMatrix<T>,
}

/// All generalized eigenpairs of (stiffness, mass).
pub fn solve_modes<T: Real>(sys: &StructuralSystem<T>) -> Result<PhysicalModes<T>> {
    sys.validate()?;
    let n = sys.dof();
    let chol = sys
        .mass
        .clone()
        .cholesky()
        .ok_or_else(|| AnmError::Definiteness("mass matrix has no Cholesky factor".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| AnmError::Definiteness("singular mass factor".into()))?;
    let a = &linv * &sys.stiffness * linv.transpose();
    let a = (&a + a.transpose()) * T::lit(0.5);
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap_or(std::cmp::Ordering::Equal));

    let scale = sys.stiffness.amax().max(T::one());
    let mut shapes = DMatrix::zeros(n, n);
    let mut nat = Vec::with_capacity(n);
    let mut damped = Vec::with_capacity(n);
    let mut zeta = Vec::with_capacity(n);
    for (k, &i) in order.iter().enumerate() {
        let mut lam = eig.eigenvalues[i];
        if lam < -T::lit(1e-10) * scale {
            return invalid(format!("negative generalized eigenvalue {lam}"));
        }
        lam = lam.max(T::zero());
        let y = eig.eigenvectors.column(i);
        let mut psi = linv.transpose() * y;
        psi /= psi.norm();
        let big = psi.amax();
        if let Some(p) = psi.iter().find(|v| v.abs() > T::lit(1e-8) * big) {
            if *p < T::zero() {
                psi = -psi;
            }
        }
        shapes.set_column(k, &psi);
        let omega = lam.sqrt();
        let f = omega / T::two_pi();
        let z = match sys.proportional_damping {
            Some((a, b)) if omega > T::zero() => a / (omega + omega) + b * omega / (T::one() + T::one()),
            Some(_) => return invalid("proportional damping undefined for a rigid-body mode"),
            None => T::zero(),
        };
        if z >= T::one() {
            return invalid(format!("mode {k} is not underdamped (zeta = {z})"));
        }
        nat.push(f);
        damped.push(f * (T::one() - z * z).sqrt());
        zeta.push(z);
    }
    Ok(PhysicalModes { natural_frequencies: nat, damped_frequencies: damped, damping_ratios: zeta, mode_shapes: shapes })
}

/// `{f_k, A_k, ψ_k}` on a Nyquist grid of `M` samples spaced `T_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalGroundTruth<T: Real> {
    pub frequencies: Vec<T>,
    pub amplitudes: Vec<Complex<T>>,
    /// N×K, unit-norm columns.
    pub mode_shapes: DMatrix<Complex<T>>,
    pub sample_interval: T,
    pub samples: usize,
}

impl<T: Real> ModalGroundTruth<T> {
    pub fn new(
        frequencies: Vec<T>,
        amplitudes: Vec<Complex<T>>,
        mode_shapes: DMatrix<Complex<T>>,
        sample_interval: T,
        samples: usize,
    ) -> Result<Self> {
        let t = ModalGroundTruth { frequencies, amplitudes, mode_shapes, sample_interval, samples };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.frequencies.len();
        if self.amplitudes.len() != k || self.mode_shapes.ncols() != k {
            return invalid(format!(
                "{} frequencies, {} amplitudes, {} mode shapes",
                k,
                self.amplitudes.len(),
                self.mode_shapes.ncols()
            ));
        }
        if self.samples == 0 {
            return invalid("M must be at least 1");
        }
        if let Some(f) = self.frequencies.iter().find(|f| !(**f >= T::zero() && **f < T::one())) {
            return invalid(format!("frequency {f} outside [0, 1)"));
        }
        Ok(())
    }

    pub fn modes(&self) -> usize {
        self.frequencies.len()
    }

    pub fn sensors(&self) -> usize {
        self.mode_shapes.nrows()
    }

    /// Sum of amplitude magnitudes, an upper bound on the atomic norm.
    pub fn atomic_bound(&self) -> T {
        self.amplitudes.iter().fold(T::zero(), |s, a| s + a.norm_sqr().sqrt())
    }

    /// Same modes sorted by ascending frequency.
    pub fn sorted(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.modes()).collect();
        idx.sort_by(|&a, &b| self.frequencies[a].partial_cmp(&self.frequencies[b]).unwrap_or(std::cmp::Ordering::Equal));
        let shapes = DMatrix::from_fn(self.sensors(), idx.len(), |n, k| self.mode_shapes[(n, idx[k])]);
        ModalGroundTruth {
            frequencies: idx.iter().map(|&i| self.frequencies[i]).collect(),
            amplitudes: idx.iter().map(|&i| self.amplitudes[i]).collect(),
            mode_shapes: shapes,
            sample_interval: self.sample_interval,
            samples: self.samples,
        }
    }
}

/// Rows index time, columns index sensors.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix<T: Real> {
    pub entries: DMatrix<Complex<T>>,
    pub sample_interval: T,
}

/// `X[m, n] = Σ_k A_k ψ_{n,k} e^{j2π f_k m}`.
pub fn synthesize_analytic<T: Real>(truth: &ModalGroundTruth<T>) -> Result<DataMatrix<T>> {
    truth.validate()?;
    let (m, n) = (truth.samples, truth.sensors());
    let mut x = DMatrix::zeros(m, n);
    for k in 0..truth.modes() {
        let a = truth.amplitudes[k];
        for i in 0..m {
            let p = phasor(truth.frequencies[k] * T::from_count(i)) * a;
            for j in 0..n {
                x[(i, j)] += p * truth.mode_shapes[(j, k)];
            }
        }
    }
    Ok(DataMatrix { entries: x, sample_interval: truth.sample_interval })
}

/// Real free response `Σ_k ψ_k u_k e^{-ζ_k ω_k t} cos(ω_{d,k} t + θ_k)` at
/// `t = m·T_s`, `m = 0..M-1`. Returns an M×N matrix.
pub fn synthesize_free_response_real<T: Real>(
    sys: &StructuralSystem<T>,
    modal_amplitudes: &[T],
    phases: &[T],
    sample_interval: T,
    samples: usize,
) -> Result<DMatrix<T>> {
    if !(sample_interval > T::zero()) {
        return invalid(format!("sample interval {sample_interval} must be positive"));
    }
    if samples == 0 {
        return invalid("M must be at least 1");
    }
    let modes = solve_modes(sys)?;
    let n = sys.dof();
    if modal_amplitudes.len() > n || phases.len() != modal_amplitudes.len() {
        return invalid(format!(
            "{} amplitudes and {} phases for a {}-dof system",
            modal_amplitudes.len(),
            phases.len(),
            n
        ));
    }
    let mut x = DMatrix::zeros(samples, n);
    for (k, (&u, &th)) in modal_amplitudes.iter().zip(phases).enumerate() {
        let w = T::two_pi() * modes.natural_frequencies[k];
        let wd = T::two_pi() * modes.damped_frequencies[k];
        let z = modes.damping_ratios[k];
        for i in 0..samples {
            let t = T::from_count(i) * sample_interval;
            let q = u * (-z * w * t).exp() * (wd * t + th).cos();
            for j in 0..n {
                x[(i, j)] += modes.mode_shapes[(j, k)] * q;
            }
        }
    }
    Ok(x)
}

/// Discrete analytic signal of each column.
pub fn hilbert_analytic<T: Real>(x: &DMatrix<T>) -> Result<DMatrix<Complex<T>>> {
    let m = x.nrows();
    if m < 2 {
        return invalid("analytic signal needs at least 2 samples");
    }
    let mut planner = FftPlanner::<T>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let two = T::one() + T::one();
    let scale = T::one() / T::from_count(m);
    let mut out = DMatrix::zeros(m, x.ncols());
    let mut buf = vec![Complex::new(T::zero(), T::zero()); m];
    for (j, col) in x.column_iter().enumerate() {
        for (b, v) in buf.iter_mut().zip(col.iter()) {
            *b = Complex::new(*v, T::zero());
        }
        fwd.process(&mut buf);
        // bins 1..ceil(m/2) doubled, Nyquist (even m) and DC kept
        let half = m.div_ceil(2);
        for (i, b) in buf.iter_mut().enumerate() {
            if i == 0 || (m % 2 == 0 && i == m / 2) {
                continue;
            }
            *b = if i < half { *b * two } else { Complex::new(T::zero(), T::zero()) };
        }
        inv.process(&mut buf);
        for (i, b) in buf.iter().enumerate() {
            out[(i, j)] = *b * scale;
        }
    }
    Ok(out)
}

/// How many real samples feed the analytic conversion before trimming.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimPolicy {
    /// Real samples synthesized; `None` means three times the kept length.
    pub real_samples: Option<usize>,
}

impl Default for TrimPolicy {
    fn default() -> Self {
        TrimPolicy { real_samples: None }
    }
}

/// Real free response converted to analytic form, keeping the first `M`
/// analytic samples of a longer record.
pub fn analytic_free_response<T: Real>(
    sys: &StructuralSystem<T>,
    modal_amplitudes: &[T],
    phases: &[T],
    sample_interval: T,
    samples: usize,
    trim: TrimPolicy,
) -> Result<DataMatrix<T>> {
    let total = trim.real_samples.unwrap_or(3 * samples);
    if total < samples {
        return invalid(format!("trim policy keeps {samples} of {total} samples"));
    }
    let real = synthesize_free_response_real(sys, modal_amplitudes, phases, sample_interval, total)?;
    let z = hilbert_analytic(&real)?;
    Ok(DataMatrix { entries: z.rows(0, samples).into_owned(), sample_interval })
}

/// Minimum wrap-around distance; `1` for a single frequency.
pub fn min_separation<T: Real>(freqs: &[T]) -> Result<T> {
    if freqs.is_empty() {
        return invalid("minimum separation of an empty set");
    }
    let mut best = T::one();
    for i in 0..freqs.len() {
        for j in 0..i {
            let d = freqs[i] - freqs[j];
            let d = (d - d.floor()).abs();
            best = best.min(d.min(T::one() - d));
        }
    }
    Ok(best)
}
