//! Experiment configuration, read from and written to JSON.

use std::path::{Path, PathBuf};

use anm_modal::measure::{SchemeKind, SpatialDistribution};
use anm_modal::modal::LocateOptions;
use anm_modal::{SolverOptions, StructuralSystem};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub truth: TruthModel,
    pub schemes: Vec<SchemeKind>,
    /// Per-sensor sample budget: kept rows for sync sampling, the average
    /// per sensor for async sampling (|Ω_A| = budget·N), M′ for temporal
    /// compression. Recorded but unused for full data and spatial
    /// compression.
    pub budgets: Vec<usize>,
    /// Sensor counts N. Structural models fix N to their degrees of freedom.
    pub sensors: Vec<usize>,
    /// Mode counts K. Structural models fix K to their amplitude count.
    pub orders: Vec<usize>,
    #[serde(default)]
    pub noise: NoiseGrid,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub estimator: Estimator,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub locate: LocateConfig,
    #[serde(default)]
    pub spatial: SpatialDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TruthModel {
    /// Free vibration of a mass-spring system.
    Structure(StructureTruth),
    /// Synthetic modes drawn per trial.
    Random(RandomTruth),
    /// Fixed digital frequencies, amplitudes and shapes.
    Direct(DirectTruth),
}

/// Mass and stiffness, as full matrices or as a grounded chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemDef {
    Chain {
        masses: Vec<f64>,
        /// One more spring than masses (both ends grounded).
        springs: Vec<f64>,
    },
    Matrices {
        /// Row-major.
        mass: Vec<Vec<f64>>,
        stiffness: Vec<Vec<f64>>,
    },
}

/// A system file: the system plus optional proportional damping `(α, β)`
/// with `C = αM + βK`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    #[serde(flatten)]
    pub system: SystemDef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<(f64, f64)>,
}

fn square(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, HarnessError> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return bad(format!("{what} matrix must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl SystemFile {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn dof(&self) -> usize {
        match &self.system {
            SystemDef::Chain { masses, .. } => masses.len(),
            SystemDef::Matrices { mass, .. } => mass.len(),
        }
    }

    pub fn build(&self) -> Result<StructuralSystem, HarnessError> {
        let sys = match &self.system {
            SystemDef::Chain { masses, springs } => StructuralSystem::chain(masses, springs)?,
            SystemDef::Matrices { mass, stiffness } => {
                StructuralSystem::new(square(mass, "mass")?, square(stiffness, "stiffness")?)?
            }
        };
        Ok(match self.damping {
            Some((a, b)) => sys.with_proportional_damping(a, b),
            None => sys,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureTruth {
    pub system: SystemFile,
    /// `T_s = sample_factor / F_c`, `F_c` the highest natural frequency.
    pub sample_factor: f64,
    pub samples: usize,
    /// Modal amplitudes of the lowest modes, one per driven mode.
    pub amplitudes: Vec<f64>,
    /// Sign applied to each mode shape after the first-entry-positive
    /// normalization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape_signs: Option<Vec<f64>>,
    /// When set, synthesize this many real samples of the free response and
    /// keep the first `samples` of their analytic signal. Otherwise the
    /// analytic modes are synthesized directly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_samples: Option<usize>,
    /// Initial phases of the real free response (default zero).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectTruth {
    pub samples: usize,
    pub frequencies: Vec<f64>,
    /// Real amplitudes.
    pub amplitudes: Vec<f64>,
    /// N rows of K entries; columns are normalized on use.
    pub shapes: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomTruth {
    pub samples: usize,
    pub frequencies: FrequencyRule,
    pub amplitudes: AmplitudeRule,
    pub shapes: ShapeRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FrequencyRule {
    /// The first K values.
    Fixed { values: Vec<f64> },
    /// K distinct draws from `start : spacing/M : stop`.
    Grid { start: f64, stop: f64, spacing_times_m: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AmplitudeRule {
    /// The first K values.
    Fixed { values: Vec<f64> },
    Uniform { low: f64, high: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShapeRule {
    /// i.i.d. standard normal entries, then normalized.
    Gaussian,
    /// Shape 2 is shape 1 plus `perturbation` times a standard normal
    /// vector, normalized; the rest are Gaussian.
    Correlated { perturbation: f64 },
    /// Orthonormal columns.
    Orthogonal,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseGrid {
    #[default]
    None,
    Sigma { values: Vec<f64> },
    /// `σ = 10^(−SNR/20)`.
    SnrDb { values: Vec<f64> },
}

impl NoiseGrid {
    pub fn sigmas(&self) -> Vec<f64> {
        match self {
            NoiseGrid::None => vec![0.0],
            NoiseGrid::Sigma { values } => values.clone(),
            NoiseGrid::SnrDb { values } => values.iter().map(|s| snr_to_sigma(*s)).collect(),
        }
    }
}

pub fn snr_to_sigma(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 20.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Joint (MMV) atomic-norm recovery.
    Anm,
    /// N independent single-column atomic-norm problems.
    AnmSeparate,
    /// Leading right singular vectors of the full data matrix.
    Svd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Anm => "anm",
            Method::AnmSeparate => "anm-separate",
            Method::Svd => "svd",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Estimator {
    /// Equality-constrained atomic-norm minimization.
    #[default]
    Exact,
    /// Penalized problem with `λ = η·σ·√(4MN log M)`, floored at
    /// `lambda_floor·‖y‖` so that noiseless trials stay well posed.
    Denoise { eta: f64, lambda_floor: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub rho: Option<f64>,
    pub max_iters: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub certificate_tolerance: f64,
    pub adapt_rho: bool,
    pub adapt_interval: usize,
    pub fallback_certificate: bool,
    pub anderson_memory: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        SolverConfig {
            rho: o.rho,
            max_iters: o.max_iters,
            tol_abs: o.tol_abs,
            tol_rel: o.tol_rel,
            certificate_tolerance: o.certificate_tolerance,
            adapt_rho: o.adapt_rho,
            adapt_interval: o.adapt_interval,
            fallback_certificate: o.fallback_certificate,
            anderson_memory: o.anderson_memory,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            rho: self.rho,
            max_iters: self.max_iters,
            tol_abs: self.tol_abs,
            tol_rel: self.tol_rel,
            certificate_tolerance: self.certificate_tolerance,
            adapt_rho: self.adapt_rho,
            adapt_interval: self.adapt_interval,
            fallback_certificate: self.fallback_certificate,
            anderson_memory: self.anderson_memory,
            log_interval: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocateConfig {
    pub eps_peak: f64,
    pub grid_size: Option<usize>,
    pub merge_radius: Option<f64>,
    /// Drop located modes whose amplitude is below this fraction of the
    /// largest, then refit the rest.
    pub amplitude_floor: Option<f64>,
    /// Keep only the K largest-amplitude modes when more are located.
    pub prune_to_order: bool,
}

impl Default for LocateConfig {
    fn default() -> Self {
        let d = LocateOptions::<f64>::default();
        LocateConfig { eps_peak: d.eps_peak, grid_size: d.grid_size, merge_radius: d.merge_radius, amplitude_floor: None, prune_to_order: false }
    }
}

impl LocateConfig {
    pub fn options(&self) -> LocateOptions<f64> {
        LocateOptions { eps_peak: self.eps_peak, grid_size: self.grid_size, merge_radius: self.merge_radius }
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T, HarnessError> {
    Err(HarnessError::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Samples per sensor M.
    pub fn samples(&self) -> usize {
        match &self.truth {
            TruthModel::Structure(s) => s.samples,
            TruthModel::Random(r) => r.samples,
            TruthModel::Direct(d) => d.samples,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        for (name, empty) in [
            ("schemes", self.schemes.is_empty()),
            ("budgets", self.budgets.is_empty()),
            ("sensors", self.sensors.is_empty()),
            ("orders", self.orders.is_empty()),
            ("methods", self.methods.is_empty()),
            ("noise", self.noise.sigmas().is_empty()),
        ] {
            if empty {
                return bad(format!("{name} grid is empty"));
            }
        }
        let m = self.samples();
        if m < 2 {
            return bad("need at least 2 samples per sensor");
        }
        if self.noise.sigmas().iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("noise levels must be finite and non-negative");
        }
        if self.methods.contains(&Method::AnmSeparate) && self.schemes.contains(&SchemeKind::SpatialCompress) {
            return bad("spatial compression mixes sensors and has no per-sensor problem");
        }
        if let Estimator::Denoise { eta, lambda_floor } = self.estimator {
            if !(eta > 0.0) || !(lambda_floor > 0.0) {
                return bad("denoising needs positive eta and lambda_floor");
            }
        }
        for &b in &self.budgets {
            for &s in &self.schemes {
                let ok = match s {
                    SchemeKind::SyncSample | SchemeKind::AsyncSample | SchemeKind::TemporalCompress => (1..=m).contains(&b),
                    SchemeKind::Full | SchemeKind::SpatialCompress => true,
                };
                if !ok {
                    return bad(format!("budget {b} outside 1..={m} for {s}"));
                }
            }
        }
        match &self.truth {
            TruthModel::Structure(t) => {
                let n = t.system.dof();
                t.system.build()?;
                if self.sensors != [n] {
                    return bad(format!("structure has {n} sensors; set sensors to [{n}]"));
                }
                if self.orders != [t.amplitudes.len()] || t.amplitudes.len() > n {
                    return bad(format!("structure drives {} modes; set orders to match", t.amplitudes.len()));
                }
                if t.shape_signs.as_ref().is_some_and(|s| s.len() != t.amplitudes.len()) {
                    return bad("one shape sign per amplitude");
                }
                if t.phases.as_ref().is_some_and(|p| p.len() != t.amplitudes.len()) {
                    return bad("one phase per amplitude");
                }
                if !(t.sample_factor > 0.0) {
                    return bad("sample_factor must be positive");
                }
                if t.real_samples.is_some_and(|r| r < t.samples) {
                    return bad("real_samples must cover the kept samples");
                }
            }
            TruthModel::Direct(d) => {
                let k = d.frequencies.len();
                if d.amplitudes.len() != k || d.shapes.iter().any(|r| r.len() != k) {
                    return bad("direct truth needs one amplitude and one shape column per frequency");
                }
                if self.sensors != [d.shapes.len()] || self.orders != [k] {
                    return bad(format!("direct truth fixes sensors to [{}] and orders to [{k}]", d.shapes.len()));
                }
                if d.frequencies.iter().any(|f| !(0.0..1.0).contains(f)) {
                    return bad("digital frequencies must lie in [0, 1)");
                }
            }
            TruthModel::Random(r) => {
                let kmax = *self.orders.iter().max().unwrap_or(&0);
                if self.orders.contains(&0) {
                    return bad("orders must be positive");
                }
                match &r.frequencies {
                    FrequencyRule::Fixed { values } => {
                        if values.len() < kmax || values.iter().any(|f| !(0.0..1.0).contains(f)) {
                            return bad("fixed frequencies must cover K and lie in [0, 1)");
                        }
                    }
                    FrequencyRule::Grid { start, stop, spacing_times_m } => {
                        let count = grid_frequencies(*start, *stop, *spacing_times_m, m).len();
                        if count < kmax || *start < 0.0 || *stop >= 1.0 {
                            return bad("frequency grid inside [0, 1) must hold at least K points");
                        }
                    }
                }
                match &r.amplitudes {
                    AmplitudeRule::Fixed { values } if values.len() < kmax => return bad("fixed amplitudes must cover K"),
                    AmplitudeRule::Uniform { low, high } if !(0.0 <= *low && low < high) => {
                        return bad("uniform amplitude range must satisfy 0 <= low < high")
                    }
                    _ => {}
                }
                if let ShapeRule::Correlated { perturbation } = r.shapes {
                    if !(perturbation >= 0.0) || kmax < 2 {
                        return bad("correlated shapes need K >= 2 and a non-negative perturbation");
                    }
                }
                if matches!(r.shapes, ShapeRule::Orthogonal) && self.sensors.iter().any(|&n| n < kmax) {
                    return bad("orthogonal shapes need N >= K");
                }
            }
        }
        Ok(())
    }
}

/// `start : spacing/M : stop`, inclusive of `stop` up to rounding.
pub fn grid_frequencies(start: f64, stop: f64, spacing_times_m: f64, m: usize) -> Vec<f64> {
    let step = spacing_times_m / m as f64;
    if !(step > 0.0) || stop < start {
        return Vec::new();
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| start + i as f64 * step).collect()
}
