//! One Monte-Carlo trial: truth, observation, recovery and scoring.

use std::time::Instant;

use anm_modal::measure::{add_noise, apply, draw_scheme_with, Dims, SchemeData, SchemeKind};
use anm_modal::modal::{evaluate, extract, prune_to_order, recover_shapes, svd_baseline, EstimateSource};
use anm_modal::sdpsolve::{solve, SolveMode};
use anm_modal::structsim::{analytic_free_response, solve_modes, synthesize_analytic, TrimPolicy};
use anm_modal::{AnmProblem, CMatrix, EvaluationReport, MeasurementSpec, ModalEstimate, ModalGroundTruth, Observation, C64};
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::{
    grid_frequencies, AmplitudeRule, Estimator, ExperimentConfig, FrequencyRule, Method, RandomTruth, ShapeRule,
    StructureTruth, TruthModel,
};
use crate::HarnessError;

/// Coordinates of one grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub scheme: SchemeKind,
    pub method: Method,
    pub sensors: usize,
    pub order: usize,
    pub budget: usize,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub preset: String,
    pub point: GridPoint,
    pub samples: usize,
    pub trial: usize,
    pub seed: u64,
    pub sample_interval: f64,
    pub mac: Vec<f64>,
    pub freq_err: Vec<f64>,
    /// Estimated digital frequencies, ascending.
    pub freq_hat: Vec<f64>,
    pub rel_fro_err: Option<f64>,
    /// `‖X̂ − X⋆‖_F²`.
    pub mse: Option<f64>,
    pub k_hat: usize,
    pub shape_success: bool,
    pub data_success: bool,
    pub iters: usize,
    pub converged: bool,
    pub wall_ms: f64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed of a trial. Scheme and method are left out so that every
/// scheme and method at the same coordinates sees the same truth.
pub fn child_seed(master: u64, point: &GridPoint, trial: usize) -> u64 {
    [point.sensors as u64, point.order as u64, point.budget as u64, point.sigma.to_bits(), trial as u64]
        .iter()
        .fold(splitmix(master), |h, &v| splitmix(h ^ v))
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

const TRUTH_STREAM: u64 = 1;
const SCHEME_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

fn real(v: f64) -> C64 {
    C64::new(v, 0.0)
}

fn normalized_columns(m: DMatrix<f64>) -> CMatrix {
    let cols: Vec<_> = m.column_iter().map(|c| c.normalize().map(real)).collect();
    DMatrix::from_columns(&cols)
}

fn gaussian<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Ground truth and its noiseless data matrix.
pub fn make_truth(cfg: &ExperimentConfig, n: usize, k: usize, seed: u64) -> Result<(ModalGroundTruth, CMatrix), HarnessError> {
    match &cfg.truth {
        TruthModel::Structure(s) => structure_truth(s),
        TruthModel::Random(r) => {
            let truth = random_truth(r, n, k, &mut stream(seed, TRUTH_STREAM))?;
            let x = synthesize_analytic(&truth)?.entries;
            Ok((truth, x))
        }
        TruthModel::Direct(d) => {
            let shapes = DMatrix::from_fn(d.shapes.len(), d.frequencies.len(), |i, j| d.shapes[i][j]);
            let truth = ModalGroundTruth::new(
                d.frequencies.clone(),
                d.amplitudes.iter().map(|a| real(*a)).collect(),
                normalized_columns(shapes),
                1.0,
                d.samples,
            )?;
            let x = synthesize_analytic(&truth)?.entries;
            Ok((truth, x))
        }
    }
}

fn structure_truth(s: &StructureTruth) -> Result<(ModalGroundTruth, CMatrix), HarnessError> {
    let sys = s.system.build()?;
    let modes = solve_modes(&sys)?;
    let k = s.amplitudes.len();
    let fc = modes.natural_frequencies[..k].iter().fold(0.0f64, |a, &b| a.max(b));
    let ts = s.sample_factor / fc;
    let signs = s.shape_signs.clone().unwrap_or_else(|| vec![1.0; k]);
    let shapes = DMatrix::from_fn(sys.dof(), k, |i, j| real(modes.mode_shapes[(i, j)] * signs[j]));
    let amps: Vec<C64> = s.amplitudes.iter().map(|a| real(*a)).collect();
    match s.real_samples {
        None => {
            let f = modes.natural_frequencies[..k].iter().map(|f| f * ts).collect();
            let truth = ModalGroundTruth::new(f, amps, shapes, ts, s.samples)?;
            let x = synthesize_analytic(&truth)?.entries;
            Ok((truth, x))
        }
        Some(total) => {
            // the free response uses the unsigned shapes; fold the signs into the amplitudes
            let u: Vec<f64> = s.amplitudes.iter().zip(&signs).map(|(a, g)| a * g).collect();
            let phases = s.phases.clone().unwrap_or_else(|| vec![0.0; k]);
            let trim = TrimPolicy { real_samples: Some(total) };
            let x = analytic_free_response(&sys, &u, &phases, ts, s.samples, trim)?.entries;
            let f = modes.damped_frequencies[..k].iter().map(|f| f * ts).collect();
            let truth = ModalGroundTruth::new(f, amps, shapes, ts, s.samples)?;
            Ok((truth, x))
        }
    }
}

fn random_truth<R: Rng>(r: &RandomTruth, n: usize, k: usize, rng: &mut R) -> Result<ModalGroundTruth, HarnessError> {
    let freqs = match &r.frequencies {
        FrequencyRule::Fixed { values } => values[..k].to_vec(),
        FrequencyRule::Grid { start, stop, spacing_times_m } => {
            let grid = grid_frequencies(*start, *stop, *spacing_times_m, r.samples);
            let mut f: Vec<f64> = sample(rng, grid.len(), k).into_iter().map(|i| grid[i]).collect();
            f.sort_by(f64::total_cmp);
            f
        }
    };
    let amps: Vec<C64> = match &r.amplitudes {
        AmplitudeRule::Fixed { values } => values[..k].iter().map(|a| real(*a)).collect(),
        AmplitudeRule::Uniform { low, high } => (0..k).map(|_| real(rng.random_range(*low..*high))).collect(),
    };
    let shapes = match r.shapes {
        ShapeRule::Gaussian => normalized_columns(DMatrix::from_fn(n, k, |_, _| rng.sample(StandardNormal))),
        ShapeRule::Correlated { perturbation } => {
            let mut cols: Vec<DVector<f64>> = (0..k).map(|_| gaussian(n, rng)).collect();
            cols[0] = cols[0].normalize();
            let p = gaussian(n, rng);
            cols[1] = &cols[0] + p * perturbation;
            normalized_columns(DMatrix::from_columns(&cols))
        }
        ShapeRule::Orthogonal => {
            let g = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
            g.qr().q().map(real)
        }
    };
    Ok(ModalGroundTruth::new(freqs, amps, shapes, 1.0, r.samples)?)
}

/// Draw size passed to the scheme sampler.
pub fn scheme_budget(kind: SchemeKind, budget: usize, n: usize) -> usize {
    match kind {
        SchemeKind::AsyncSample => budget * n,
        _ => budget,
    }
}

fn solve_mode(cfg: &ExperimentConfig, obs: &Observation, m: usize, n: usize, sigma: f64) -> SolveMode<f64> {
    match cfg.estimator {
        Estimator::Exact => SolveMode::Exact,
        Estimator::Denoise { eta, lambda_floor } => {
            let lam = eta * sigma * (4.0 * (m * n) as f64 * (m as f64).ln()).sqrt();
            SolveMode::Penalized(lam.max(lambda_floor * obs.norm()))
        }
    }
}

struct Recovery {
    est: ModalEstimate,
    x_hat: Option<CMatrix>,
    iters: usize,
    converged: bool,
}

fn recover_joint(
    cfg: &ExperimentConfig,
    spec: MeasurementSpec,
    obs: Observation,
    sigma: f64,
    order: usize,
) -> Result<Recovery, HarnessError> {
    let (m, n) = (spec.rows, spec.cols);
    let mode = solve_mode(cfg, &obs, m, n, sigma);
    let problem = AnmProblem::new(spec, obs, mode)?;
    let sol = solve(&problem, &cfg.solver.options())?;
    let mut est = extract(&sol, &cfg.locate.options())?;
    if let Some(floor) = cfg.locate.amplitude_floor {
        est = drop_weak(&sol.x, est, floor)?;
    }
    if cfg.locate.prune_to_order {
        est = prune_to_order(&sol.x, &est, order)?;
    }
    Ok(Recovery { est, iters: sol.iterations, converged: sol.converged, x_hat: Some(sol.x) })
}

fn drop_weak(x: &CMatrix, est: ModalEstimate, floor: f64) -> Result<ModalEstimate, HarnessError> {
    let top = est.amplitudes.iter().fold(0.0f64, |a, &b| a.max(b));
    let kept = est.amplitudes.iter().filter(|&&a| a >= floor * top).count();
    if kept == est.modes() {
        return Ok(est);
    }
    Ok(prune_to_order(x, &est, kept)?)
}

/// The single-sensor scheme and observation of column `j`.
fn column_problem(spec: &MeasurementSpec, obs: &Observation, j: usize) -> Option<(MeasurementSpec, Observation)> {
    let m = spec.rows;
    let (data, o) = match (&spec.data, obs) {
        (SchemeData::Full, Observation::Full(y)) => (SchemeData::Full, Observation::Full(y.columns(j, 1).into_owned())),
        (SchemeData::SyncSample(rows), Observation::SyncSample(y)) => {
            (SchemeData::SyncSample(rows.clone()), Observation::SyncSample(y.columns(j, 1).into_owned()))
        }
        (SchemeData::AsyncSample(_), Observation::AsyncSample(ent)) => {
            let mine: Vec<_> = ent.iter().filter(|e| e.1 == j).map(|&(r, _, v)| (r, 0, v)).collect();
            if mine.is_empty() {
                return None;
            }
            (SchemeData::AsyncSample(mine.iter().map(|e| (e.0, 0)).collect()), Observation::AsyncSample(mine))
        }
        (SchemeData::TemporalCompress(phi), Observation::TemporalCompress(y)) => {
            (SchemeData::TemporalCompress(vec![phi[j].clone()]), Observation::TemporalCompress(vec![y[j].clone()]))
        }
        _ => return None,
    };
    Some((MeasurementSpec::new(m, 1, data).ok()?, o))
}

fn circular_mean(fs: &[f64]) -> f64 {
    let (s, c) = fs.iter().fold((0.0, 0.0), |(s, c), f| {
        let a = std::f64::consts::TAU * f;
        (s + a.sin(), c + a.cos())
    });
    (s.atan2(c) / std::f64::consts::TAU).rem_euclid(1.0)
}

/// N single-column problems. The column estimates are stacked into X̂; the
/// frequencies are the per-mode circular mean when every column finds the
/// same number of modes, else those of the strongest column; shapes are then
/// fit against X̂.
fn recover_separate(
    cfg: &ExperimentConfig,
    spec: &MeasurementSpec,
    obs: &Observation,
    sigma: f64,
    order: usize,
) -> Result<Recovery, HarnessError> {
    let (m, n) = (spec.rows, spec.cols);
    let mut x_hat = DMatrix::zeros(m, n);
    let mut col_freqs = Vec::with_capacity(n);
    let (mut iters, mut converged) = (0, true);
    for j in 0..n {
        let Some((s, o)) = column_problem(spec, obs, j) else {
            col_freqs.push(Vec::new());
            continue;
        };
        let r = recover_joint(cfg, s, o, sigma, order)?;
        iters += r.iters;
        converged &= r.converged;
        if let Some(xj) = r.x_hat {
            x_hat.set_column(j, &xj.column(0));
        }
        col_freqs.push(r.est.frequencies);
    }
    let k0 = col_freqs[0].len();
    let freqs: Vec<f64> = if k0 > 0 && col_freqs.iter().all(|f| f.len() == k0) {
        (0..k0).map(|i| circular_mean(&col_freqs.iter().map(|f| f[i]).collect::<Vec<_>>())).collect()
    } else {
        let strongest = (0..n).max_by(|&a, &b| x_hat.column(a).norm().total_cmp(&x_hat.column(b).norm())).unwrap_or(0);
        col_freqs[strongest].clone()
    };
    let est = if freqs.is_empty() {
        ModalEstimate { frequencies: freqs, amplitudes: Vec::new(), mode_shapes: DMatrix::zeros(n, 0), source: EstimateSource::Anm }
    } else {
        let (amplitudes, mode_shapes) = recover_shapes(&x_hat, &freqs)?;
        ModalEstimate { frequencies: freqs, amplitudes, mode_shapes, source: EstimateSource::Anm }
    };
    Ok(Recovery { est, x_hat: Some(x_hat), iters, converged })
}

/// Scheme realization and (noisy) observation of a trial's data.
pub fn observe(
    cfg: &ExperimentConfig,
    point: &GridPoint,
    seed: u64,
    x: &CMatrix,
) -> Result<(MeasurementSpec, Observation), HarnessError> {
    let (m, n) = x.shape();
    let dims = Dims { rows: m, cols: n, budget: scheme_budget(point.scheme, point.budget, n) };
    let spec = draw_scheme_with(point.scheme, dims, cfg.spatial, &mut stream(seed, SCHEME_STREAM))?;
    let mut obs = apply(&spec, x)?;
    if point.sigma > 0.0 {
        obs = obs.with_noise(point.sigma, &mut stream(seed, NOISE_STREAM))?;
    }
    Ok((spec, obs))
}

pub fn run_trial(cfg: &ExperimentConfig, point: &GridPoint, trial: usize) -> Result<ResultRow, HarnessError> {
    let start = Instant::now();
    let seed = child_seed(cfg.seed, point, trial);
    let (truth, x) = make_truth(cfg, point.sensors, point.order, seed)?;
    let m = x.nrows();
    let sigma = point.sigma;

    let rec = match point.method {
        Method::Svd => {
            let y = if sigma > 0.0 { add_noise(&x, sigma, &mut stream(seed, NOISE_STREAM))? } else { x.clone() };
            let est = svd_baseline(&y, point.order)?;
            Recovery { est, x_hat: None, iters: 0, converged: true }
        }
        Method::Anm | Method::AnmSeparate => {
            let (spec, obs) = observe(cfg, point, seed, &x)?;
            if point.method == Method::Anm {
                recover_joint(cfg, spec, obs, sigma, point.order)?
            } else {
                recover_separate(cfg, &spec, &obs, sigma, point.order)?
            }
        }
    };

    let report: EvaluationReport = evaluate(&truth, &rec.est, rec.x_hat.as_ref(), Some(&x));
    let mse = rec.x_hat.as_ref().map(|xh| (xh - &x).norm_squared());
    Ok(ResultRow {
        preset: cfg.name.clone(),
        point: *point,
        samples: m,
        trial,
        seed,
        sample_interval: truth.sample_interval,
        mac: report.mac,
        freq_err: report.freq_abs_error,
        freq_hat: rec.est.frequencies.clone(),
        rel_fro_err: report.rel_fro_err,
        mse,
        k_hat: rec.est.modes(),
        shape_success: report.shape_success,
        data_success: report.data_success,
        iters: rec.iters,
        converged: rec.converged,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset;

    fn point(scheme: SchemeKind, method: Method, budget: usize) -> GridPoint {
        GridPoint { scheme, method, sensors: 4, order: 2, budget, sigma: 0.0 }
    }

    #[test]
    fn seeds_pair_schemes_and_separate_trials() {
        let a = point(SchemeKind::SyncSample, Method::Anm, 5);
        let b = point(SchemeKind::AsyncSample, Method::Svd, 5);
        assert_eq!(child_seed(7, &a, 3), child_seed(7, &b, 3));
        assert_ne!(child_seed(7, &a, 3), child_seed(7, &a, 4));
        assert_ne!(child_seed(7, &a, 3), child_seed(8, &a, 3));
        assert_ne!(child_seed(7, &a, 3), child_seed(7, &point(SchemeKind::SyncSample, Method::Anm, 6), 3));
    }

    #[test]
    fn correlated_shapes_are_unit_and_correlated() {
        let r = RandomTruth {
            samples: 40,
            frequencies: FrequencyRule::Fixed { values: vec![0.1, 0.15, 0.5] },
            amplitudes: AmplitudeRule::Fixed { values: vec![1.0, 0.85, 0.7] },
            shapes: ShapeRule::Correlated { perturbation: 0.1 },
        };
        let t = random_truth(&r, 10, 3, &mut stream(1, TRUTH_STREAM)).unwrap();
        for c in t.mode_shapes.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
        let dot = t.mode_shapes.column(0).dotc(&t.mode_shapes.column(1)).norm();
        assert!(dot > 0.9, "{dot}");
    }

    #[test]
    fn grid_truth_draws_distinct_grid_frequencies() {
        let r = RandomTruth {
            samples: 100,
            frequencies: FrequencyRule::Grid { start: 0.03, stop: 0.99, spacing_times_m: 2.0 },
            amplitudes: AmplitudeRule::Uniform { low: 0.0, high: 1.0 },
            shapes: ShapeRule::Orthogonal,
        };
        let t = random_truth(&r, 10, 6, &mut stream(5, TRUTH_STREAM)).unwrap();
        for w in t.frequencies.windows(2) {
            assert!(w[1] - w[0] > 0.02 - 1e-12);
        }
        for f in &t.frequencies {
            let steps = (f - 0.03) / 0.02;
            assert!((steps - steps.round()).abs() < 1e-9);
        }
        assert!(t.amplitudes.iter().all(|a| a.re > 0.0 && a.re < 1.0));
        let g = t.mode_shapes.adjoint() * &t.mode_shapes;
        assert!((g - CMatrix::identity(6, 6)).norm() < 1e-10);
    }

    #[test]
    fn column_problems_partition_the_observation() {
        let cfg = preset("async-vs-sync").unwrap();
        let (_, x) = make_truth(&cfg, 4, 3, 11).unwrap();
        for kind in [SchemeKind::Full, SchemeKind::SyncSample, SchemeKind::AsyncSample, SchemeKind::TemporalCompress] {
            let dims = Dims { rows: 80, cols: 4, budget: scheme_budget(kind, 10, 4) };
            let spec: MeasurementSpec = draw_scheme_with(kind, dims, cfg.spatial, &mut stream(2, SCHEME_STREAM)).unwrap();
            let obs = apply(&spec, &x).unwrap();
            let mut total = 0.0;
            for j in 0..4 {
                let (s, o) = column_problem(&spec, &obs, j).unwrap();
                let direct = apply(&s, &x.columns(j, 1).into_owned()).unwrap();
                assert_eq!(direct, o, "{kind}");
                total += o.norm().powi(2);
            }
            assert!((total - obs.norm().powi(2)).abs() < 1e-9 * total);
        }
    }

    #[test]
    fn noiseless_denoise_trial_with_floor_fits_data() {
        let mut cfg = preset("denoise-sweep").unwrap();
        cfg.noise = crate::config::NoiseGrid::None;
        let p = GridPoint { scheme: SchemeKind::Full, method: Method::Anm, sensors: 4, order: 3, budget: 0, sigma: 0.0 };
        let row = run_trial(&cfg, &p, 0).unwrap();
        assert!(row.rel_fro_err.unwrap() <= 1e-5, "{row:?}");
    }

    #[test]
    fn trials_are_deterministic() {
        let cfg = preset("async-vs-sync").unwrap();
        let p = GridPoint { scheme: SchemeKind::AsyncSample, method: Method::Anm, sensors: 4, order: 3, budget: 12, sigma: 0.0 };
        let mut a = run_trial(&cfg, &p, 2).unwrap();
        let mut b = run_trial(&cfg, &p, 2).unwrap();
        a.wall_ms = 0.0;
        b.wall_ms = 0.0;
        assert_eq!(a, b);
    }
}
