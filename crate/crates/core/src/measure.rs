//! The five observation schemes as linear operators with adjoints.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, AnmError, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Full,
    SyncSample,
    AsyncSample,
    TemporalCompress,
    SpatialCompress,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::Full,
        SchemeKind::SyncSample,
        SchemeKind::AsyncSample,
        SchemeKind::TemporalCompress,
        SchemeKind::SpatialCompress,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Full => "full",
            SchemeKind::SyncSample => "sync",
            SchemeKind::AsyncSample => "async",
            SchemeKind::TemporalCompress => "temporal",
            SchemeKind::SpatialCompress => "spatial",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = AnmError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "full" => SchemeKind::Full,
            "sync" | "sync-sample" | "syncsample" => SchemeKind::SyncSample,
            "async" | "async-sample" | "asyncsample" => SchemeKind::AsyncSample,
            "temporal" | "temporal-compress" | "temporalcompress" => SchemeKind::TemporalCompress,
            "spatial" | "spatial-compress" | "spatialcompress" => SchemeKind::SpatialCompress,
            other => return invalid(format!("unknown scheme '{other}' (full, sync, async, temporal, spatial)")),
        })
    }
}

/// Distribution of the spatial compression vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpatialDistribution {
    /// i.i.d. CN(0, 1) entries scaled by 1/√N.
    #[default]
    Gaussian,
    /// Uniform on the unit complex sphere.
    Sphere,
}

/// Realized random objects of a scheme.
#[derive(Clone, Debug, PartialEq)]
pub enum SchemeData<T: Real> {
    Full,
    /// Sorted sampled time indices, shared by all sensors.
    SyncSample(Vec<usize>),
    /// Sorted (row, col) pairs.
    AsyncSample(Vec<(usize, usize)>),
    /// One M′×M matrix per sensor.
    TemporalCompress(Vec<DMatrix<T>>),
    /// One length-N vector per time index.
    SpatialCompress(Vec<DVector<Complex<T>>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSpec<T: Real> {
    pub rows: usize,
    pub cols: usize,
    pub data: SchemeData<T>,
    pub noise_sigma: T,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Observation<T: Real> {
    Full(DMatrix<Complex<T>>),
    SyncSample(DMatrix<Complex<T>>),
    AsyncSample(Vec<(usize, usize, Complex<T>)>),
    TemporalCompress(Vec<DVector<Complex<T>>>),
    SpatialCompress(DVector<Complex<T>>),
}

fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

impl<T: Real> MeasurementSpec<T> {
    pub fn new(rows: usize, cols: usize, data: SchemeData<T>) -> Result<Self> {
        let s = MeasurementSpec { rows, cols, data, noise_sigma: T::zero() };
        s.validate()?;
        Ok(s)
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        MeasurementSpec { rows, cols, data: SchemeData::Full, noise_sigma: T::zero() }
    }

    pub fn kind(&self) -> SchemeKind {
        match self.data {
            SchemeData::Full => SchemeKind::Full,
            SchemeData::SyncSample(_) => SchemeKind::SyncSample,
            SchemeData::AsyncSample(_) => SchemeKind::AsyncSample,
            SchemeData::TemporalCompress(_) => SchemeKind::TemporalCompress,
            SchemeData::SpatialCompress(_) => SchemeKind::SpatialCompress,
        }
    }

    /// Number of scalar measurements.
    pub fn measurements(&self) -> usize {
        match &self.data {
            SchemeData::Full => self.rows * self.cols,
            SchemeData::SyncSample(r) => r.len() * self.cols,
            SchemeData::AsyncSample(e) => e.len(),
            SchemeData::TemporalCompress(p) => p.iter().map(|m| m.nrows()).sum(),
            SchemeData::SpatialCompress(b) => b.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.rows, self.cols);
        if m == 0 || n == 0 {
            return invalid("measurement dims must be positive");
        }
        if !(self.noise_sigma >= T::zero()) {
            return invalid("noise sigma must be non-negative");
        }
        match &self.data {
            SchemeData::Full => {}
            SchemeData::SyncSample(rows) => {
                if rows.iter().any(|&r| r >= m) || rows.windows(2).any(|w| w[0] >= w[1]) {
                    return invalid("sync indices must be sorted, distinct and below M");
                }
            }
            SchemeData::AsyncSample(e) => {
                if e.iter().any(|&(r, c)| r >= m || c >= n) || e.windows(2).any(|w| w[0] >= w[1]) {
                    return invalid("async indices must be sorted, distinct and inside M x N");
                }
            }
            SchemeData::TemporalCompress(p) => {
                if p.len() != n {
                    return invalid(format!("{} temporal matrices for {} sensors", p.len(), n));
                }
                let r = p[0].nrows();
                if r == 0 || r > m || p.iter().any(|x| x.shape() != (r, m)) {
                    return invalid("temporal matrices must share shape M' x M with 1 <= M' <= M");
                }
            }
            SchemeData::SpatialCompress(b) => {
                if b.len() != m || b.iter().any(|v| v.len() != n) {
                    return invalid("spatial compression needs M vectors of length N");
                }
            }
        }
        Ok(())
    }
}

/// Dimensions and budget for [`draw_scheme`]. `budget` is |Ω_S| for
/// synchronous sampling, |Ω_A| for asynchronous sampling, M′ for temporal
/// compression and is ignored otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub rows: usize,
    pub cols: usize,
    pub budget: usize,
}

fn gauss<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let v: f64 = StandardNormal.sample(rng);
    T::lit(v)
}

pub fn draw_scheme<T: Real, R: Rng + ?Sized>(kind: SchemeKind, dims: Dims, rng: &mut R) -> Result<MeasurementSpec<T>> {
    draw_scheme_with(kind, dims, SpatialDistribution::Gaussian, rng)
}

pub fn draw_scheme_with<T: Real, R: Rng + ?Sized>(
    kind: SchemeKind,
    dims: Dims,
    spatial: SpatialDistribution,
    rng: &mut R,
) -> Result<MeasurementSpec<T>> {
    let Dims { rows: m, cols: n, budget } = dims;
    if m == 0 || n == 0 {
        return invalid("measurement dims must be positive");
    }
    let data = match kind {
        SchemeKind::Full => SchemeData::Full,
        SchemeKind::SyncSample => {
            if budget > m {
                return invalid(format!("sync budget {budget} exceeds M = {m}"));
            }
            let mut idx = rand::seq::index::sample(rng, m, budget).into_vec();
            idx.sort_unstable();
            SchemeData::SyncSample(idx)
        }
        SchemeKind::AsyncSample => {
            if budget > m * n {
                return invalid(format!("async budget {budget} exceeds M*N = {}", m * n));
            }
            let mut idx: Vec<(usize, usize)> =
                rand::seq::index::sample(rng, m * n, budget).into_iter().map(|k| (k / n, k % n)).collect();
            idx.sort_unstable();
            SchemeData::AsyncSample(idx)
        }
        SchemeKind::TemporalCompress => {
            if budget == 0 || budget > m {
                return invalid(format!("temporal budget M' = {budget} outside 1..={m}"));
            }
            SchemeData::TemporalCompress((0..n).map(|_| DMatrix::from_fn(budget, m, |_, _| gauss(rng))).collect())
        }
        SchemeKind::SpatialCompress => {
            let half = T::lit(0.5).sqrt();
            let vecs = (0..m)
                .map(|_| {
                    let v = DVector::from_fn(n, |_, _| Complex::new(gauss::<T, R>(rng) * half, gauss::<T, R>(rng) * half));
                    match spatial {
                        SpatialDistribution::Gaussian => v / Complex::new(T::from_count(n).sqrt(), T::zero()),
                        SpatialDistribution::Sphere => {
                            let nrm = v.norm();
                            v / Complex::new(nrm, T::zero())
                        }
                    }
                })
                .collect();
            SchemeData::SpatialCompress(vecs)
        }
    };
    MeasurementSpec::new(m, n, data)
}

fn check_dims<T: Real>(spec: &MeasurementSpec<T>, x: &DMatrix<Complex<T>>) -> Result<()> {
    if x.shape() != (spec.rows, spec.cols) {
        return invalid(format!("data is {}x{}, scheme expects {}x{}", x.nrows(), x.ncols(), spec.rows, spec.cols));
    }
    Ok(())
}

/// `Σ_n conj(b[n]) r[n]`.
pub(crate) fn bdot<T: Real>(b: &DVector<Complex<T>>, x: &DMatrix<Complex<T>>, row: usize) -> Complex<T> {
    b.iter().enumerate().fold(czero(), |acc, (j, bj)| acc + bj.conj() * x[(row, j)])
}

pub(crate) fn real_times<T: Real>(phi: &DMatrix<T>, x: &DVector<Complex<T>>) -> DVector<Complex<T>> {
    DVector::from_fn(phi.nrows(), |i, _| {
        phi.row(i).iter().zip(x.iter()).fold(czero(), |acc, (p, v)| acc + *v * *p)
    })
}

pub(crate) fn real_tr_times<T: Real>(phi: &DMatrix<T>, y: &DVector<Complex<T>>) -> DVector<Complex<T>> {
    let mut out = DVector::from_element(phi.ncols(), czero());
    for (i, yi) in y.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            *o += *yi * phi[(i, j)];
        }
    }
    out
}

pub fn apply<T: Real>(spec: &MeasurementSpec<T>, x: &DMatrix<Complex<T>>) -> Result<Observation<T>> {
    check_dims(spec, x)?;
    Ok(match &spec.data {
        SchemeData::Full => Observation::Full(x.clone()),
        SchemeData::SyncSample(rows) => {
            Observation::SyncSample(DMatrix::from_fn(rows.len(), spec.cols, |i, j| x[(rows[i], j)]))
        }
        SchemeData::AsyncSample(e) => Observation::AsyncSample(e.iter().map(|&(r, c)| (r, c, x[(r, c)])).collect()),
        SchemeData::TemporalCompress(p) => Observation::TemporalCompress(
            p.iter().enumerate().map(|(j, phi)| real_times(phi, &x.column(j).into_owned())).collect(),
        ),
        SchemeData::SpatialCompress(b) => {
            Observation::SpatialCompress(DVector::from_fn(spec.rows, |i, _| bdot(&b[i], x, i)))
        }
    })
}

fn mismatch<T>() -> Result<T> {
    invalid("observation does not match the measurement scheme")
}

/// Checks the observation payload against the scheme.
pub fn check_observation<T: Real>(spec: &MeasurementSpec<T>, obs: &Observation<T>) -> Result<()> {
    let ok = match (&spec.data, obs) {
        (SchemeData::Full, Observation::Full(y)) => y.shape() == (spec.rows, spec.cols),
        (SchemeData::SyncSample(r), Observation::SyncSample(y)) => y.shape() == (r.len(), spec.cols),
        (SchemeData::AsyncSample(e), Observation::AsyncSample(y)) => {
            e.len() == y.len() && e.iter().zip(y).all(|(a, b)| a.0 == b.0 && a.1 == b.1)
        }
        (SchemeData::TemporalCompress(p), Observation::TemporalCompress(y)) => {
            p.len() == y.len() && p.iter().zip(y).all(|(a, b)| a.nrows() == b.len())
        }
        (SchemeData::SpatialCompress(b), Observation::SpatialCompress(y)) => b.len() == y.len(),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        mismatch()
    }
}

/// Adjoint of [`apply`] under `Re tr(B* A)`.
pub fn adjoint<T: Real>(spec: &MeasurementSpec<T>, obs: &Observation<T>) -> Result<DMatrix<Complex<T>>> {
    check_observation(spec, obs)?;
    let (m, n) = (spec.rows, spec.cols);
    let mut out = DMatrix::from_element(m, n, czero());
    match (&spec.data, obs) {
        (SchemeData::Full, Observation::Full(y)) => out.copy_from(y),
        (SchemeData::SyncSample(rows), Observation::SyncSample(y)) => {
            for (i, &r) in rows.iter().enumerate() {
                out.row_mut(r).copy_from(&y.row(i));
            }
        }
        (SchemeData::AsyncSample(_), Observation::AsyncSample(y)) => {
            for &(r, c, v) in y {
                out[(r, c)] = v;
            }
        }
        (SchemeData::TemporalCompress(p), Observation::TemporalCompress(y)) => {
            for (j, (phi, yj)) in p.iter().zip(y).enumerate() {
                out.set_column(j, &real_tr_times(phi, yj));
            }
        }
        (SchemeData::SpatialCompress(b), Observation::SpatialCompress(y)) => {
            for i in 0..m {
                for j in 0..n {
                    out[(i, j)] = y[i] * b[i][j];
                }
            }
        }
        _ => return mismatch(),
    }
    Ok(out)
}

/// `X + W` with `W` i.i.d. CN(0, σ²).
pub fn add_noise<T: Real, R: Rng + ?Sized>(x: &DMatrix<Complex<T>>, sigma: T, rng: &mut R) -> Result<DMatrix<Complex<T>>> {
    if !(sigma >= T::zero()) {
        return invalid(format!("noise sigma {sigma} must be non-negative"));
    }
    let mut y = x.clone();
    if sigma == T::zero() {
        return Ok(y);
    }
    let s = sigma * T::lit(0.5).sqrt();
    for v in y.iter_mut() {
        *v += Complex::new(gauss::<T, R>(rng) * s, gauss::<T, R>(rng) * s);
    }
    Ok(y)
}

impl<T: Real> Observation<T> {
    pub fn kind(&self) -> SchemeKind {
        match self {
            Observation::Full(_) => SchemeKind::Full,
            Observation::SyncSample(_) => SchemeKind::SyncSample,
            Observation::AsyncSample(_) => SchemeKind::AsyncSample,
            Observation::TemporalCompress(_) => SchemeKind::TemporalCompress,
            Observation::SpatialCompress(_) => SchemeKind::SpatialCompress,
        }
    }

    fn values(&self) -> Vec<Complex<T>> {
        match self {
            Observation::Full(y) | Observation::SyncSample(y) => y.iter().copied().collect(),
            Observation::AsyncSample(y) => y.iter().map(|v| v.2).collect(),
            Observation::TemporalCompress(y) => y.iter().flat_map(|v| v.iter().copied()).collect(),
            Observation::SpatialCompress(y) => y.iter().copied().collect(),
        }
    }

    fn map_values(&self, mut f: impl FnMut(Complex<T>) -> Complex<T>) -> Self {
        match self {
            Observation::Full(y) => Observation::Full(y.map(&mut f)),
            Observation::SyncSample(y) => Observation::SyncSample(y.map(&mut f)),
            Observation::AsyncSample(y) => Observation::AsyncSample(y.iter().map(|&(r, c, v)| (r, c, f(v))).collect()),
            Observation::TemporalCompress(y) => Observation::TemporalCompress(y.iter().map(|v| v.map(&mut f)).collect()),
            Observation::SpatialCompress(y) => Observation::SpatialCompress(y.map(&mut f)),
        }
    }

    pub fn norm(&self) -> T {
        self.values().iter().fold(T::zero(), |s, v| s + v.norm_sqr()).sqrt()
    }

    pub fn len(&self) -> usize {
        self.values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Re Σ conj(other) self`.
    pub fn inner_re(&self, other: &Self) -> Result<T> {
        let (a, b) = (self.values(), other.values());
        if a.len() != b.len() || self.kind() != other.kind() {
            return mismatch();
        }
        Ok(a.iter().zip(&b).fold(T::zero(), |s, (x, y)| s + (y.conj() * x).re))
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: Complex<T>, other: &Self, b: Complex<T>) -> Result<Self> {
        let ov = other.values();
        if ov.len() != self.len() || self.kind() != other.kind() {
            return mismatch();
        }
        let mut it = ov.into_iter();
        Ok(self.map_values(|v| a * v + b * it.next().unwrap_or_else(czero)))
    }

    pub fn scale(&self, a: Complex<T>) -> Self {
        self.map_values(|v| a * v)
    }

    /// Adds i.i.d. CN(0, σ²) noise to every measured value.
    pub fn with_noise<R: Rng + ?Sized>(&self, sigma: T, rng: &mut R) -> Result<Self> {
        if !(sigma >= T::zero()) {
            return invalid(format!("noise sigma {sigma} must be non-negative"));
        }
        if sigma == T::zero() {
            return Ok(self.clone());
        }
        let s = sigma * T::lit(0.5).sqrt();
        Ok(self.map_values(|v| v + Complex::new(gauss::<T, R>(rng) * s, gauss::<T, R>(rng) * s)))
    }
}
