//! Built-in experiment presets.

use anm_modal::measure::{SchemeKind, SpatialDistribution};

use crate::config::{
    AmplitudeRule, Estimator, ExperimentConfig, FrequencyRule, LocateConfig, Method, NoiseGrid, RandomTruth, ShapeRule,
    SolverConfig, StructureTruth, SystemDef, SystemFile, TruthModel,
};
use crate::HarnessError;

pub const NAMES: [&str; 7] = [
    "boxcar-uniform",
    "async-vs-sync",
    "temporal-joint-vs-separate",
    "temporal-K-scaling",
    "spatial-vs-svd",
    "denoise-sweep",
    "boxcar-damped",
];

const MASSES: [f64; 6] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
const FREQS3: [f64; 3] = [0.1, 0.15, 0.5];
const AMPS3: [f64; 3] = [1.0, 0.85, 0.7];

/// The boxcar system of the uniform-sampling experiment.
pub fn boxcar_system() -> SystemFile {
    SystemFile {
        system: SystemDef::Chain { masses: MASSES.to_vec(), springs: vec![500.0, 150.0, 100.0, 50.0, 100.0, 150.0, 500.0] },
        damping: None,
    }
}

/// The stiffer, proportionally damped variant.
pub fn damped_boxcar_system() -> SystemFile {
    SystemFile {
        system: SystemDef::Chain { masses: MASSES.to_vec(), springs: vec![500.0, 300.0, 100.0, 50.0, 400.0, 200.0, 500.0] },
        damping: Some((0.01, 0.006)),
    }
}

/// Solver settings for Monte-Carlo sweeps: an iteration cap keeps failing
/// trials from dominating the run time.
fn mc_solver() -> SolverConfig {
    SolverConfig { max_iters: 2000, ..SolverConfig::default() }
}

/// Isolated spurious peaks of a converged certificate sit near 0.996, true
/// ones above 0.9999. Degenerate certificates can still touch one away from
/// the support; those atoms carry no amplitude in the least-squares fit.
fn mc_locate() -> LocateConfig {
    LocateConfig { eps_peak: 1e-3, amplitude_floor: Some(1e-3), ..LocateConfig::default() }
}

fn three_modes(shapes: ShapeRule) -> TruthModel {
    TruthModel::Random(RandomTruth {
        samples: 80,
        frequencies: FrequencyRule::Fixed { values: FREQS3.to_vec() },
        amplitudes: AmplitudeRule::Fixed { values: AMPS3.to_vec() },
        shapes,
    })
}

fn base(name: &str, truth: TruthModel) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        truth,
        schemes: vec![SchemeKind::Full],
        budgets: vec![0],
        sensors: vec![10],
        orders: vec![3],
        noise: NoiseGrid::None,
        methods: vec![Method::Anm],
        estimator: Estimator::Exact,
        trials: 1,
        seed: 1,
        solver: mc_solver(),
        locate: mc_locate(),
        spatial: SpatialDistribution::Gaussian,
        output: None,
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig, HarnessError> {
    let correlated = ShapeRule::Correlated { perturbation: 0.1 };
    let cfg = match name {
        "boxcar-uniform" => ExperimentConfig {
            sensors: vec![6],
            orders: vec![6],
            budgets: vec![100],
            methods: vec![Method::Anm, Method::Svd],
            solver: SolverConfig::default(),
            locate: LocateConfig::default(),
            ..base(
                name,
                TruthModel::Structure(StructureTruth {
                    system: boxcar_system(),
                    sample_factor: 0.9,
                    samples: 100,
                    amplitudes: vec![1.0, 0.85, 0.7, 0.5, 0.25, 0.1],
                    shape_signs: Some(vec![1.0, -1.0, -1.0, 1.0, -1.0, 1.0]),
                    real_samples: None,
                    phases: None,
                }),
            )
        },
        "async-vs-sync" => ExperimentConfig {
            schemes: vec![SchemeKind::SyncSample, SchemeKind::AsyncSample],
            budgets: (2..=20).collect(),
            trials: 300,
            ..base(name, three_modes(correlated))
        },
        "temporal-joint-vs-separate" => ExperimentConfig {
            schemes: vec![SchemeKind::TemporalCompress],
            budgets: (3..=30).collect(),
            sensors: vec![5, 10, 20],
            methods: vec![Method::Anm, Method::AnmSeparate],
            trials: 100,
            ..base(name, three_modes(ShapeRule::Gaussian))
        },
        "temporal-K-scaling" => ExperimentConfig {
            schemes: vec![SchemeKind::TemporalCompress],
            budgets: (3..=30).collect(),
            orders: vec![2, 4, 6],
            trials: 100,
            ..base(
                name,
                TruthModel::Random(RandomTruth {
                    samples: 100,
                    frequencies: FrequencyRule::Grid { start: 0.03, stop: 0.99, spacing_times_m: 2.0 },
                    amplitudes: AmplitudeRule::Uniform { low: 0.0, high: 1.0 },
                    shapes: ShapeRule::Gaussian,
                }),
            )
        },
        "spatial-vs-svd" => ExperimentConfig {
            schemes: vec![SchemeKind::SpatialCompress],
            budgets: vec![80],
            methods: vec![Method::Anm, Method::Svd],
            trials: 50,
            ..base(name, three_modes(correlated))
        },
        "denoise-sweep" => ExperimentConfig {
            noise: NoiseGrid::SnrDb { values: vec![15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0] },
            estimator: Estimator::Denoise { eta: 1.0, lambda_floor: 1e-6 },
            trials: 50,
            ..base(name, three_modes(ShapeRule::Gaussian))
        },
        "boxcar-damped" => ExperimentConfig {
            sensors: vec![6],
            orders: vec![6],
            budgets: vec![100],
            methods: vec![Method::Anm, Method::Svd],
            solver: SolverConfig::default(),
            locate: LocateConfig { prune_to_order: true, ..LocateConfig::default() },
            ..base(
                name,
                TruthModel::Structure(StructureTruth {
                    system: damped_boxcar_system(),
                    sample_factor: 0.5,
                    samples: 100,
                    amplitudes: vec![1.0, 0.85, 0.7, 0.5, 0.25, 0.7],
                    shape_signs: None,
                    real_samples: Some(300),
                    phases: Some(vec![0.0; 6]),
                }),
            )
        },
        other => {
            return Err(HarnessError::Usage(format!("unknown preset '{other}'; available: {}", NAMES.join(", "))));
        }
    };
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listed_parameters() {
        let b = preset("boxcar-uniform").unwrap();
        let TruthModel::Structure(t) = &b.truth else { panic!() };
        assert_eq!(t.samples, 100);
        assert_eq!(t.sample_factor, 0.9);
        assert_eq!(t.amplitudes, vec![1.0, 0.85, 0.7, 0.5, 0.25, 0.1]);

        let d = preset("denoise-sweep").unwrap();
        assert_eq!(d.trials, 50);
        let s = d.noise.sigmas();
        assert_eq!(s.len(), 8);
        assert!((s[0] - 0.1778).abs() < 1e-4 && (s[7] - 0.00316).abs() < 1e-5);

        let dm = preset("boxcar-damped").unwrap();
        let TruthModel::Structure(t) = &dm.truth else { panic!() };
        assert_eq!(t.system.damping, Some((0.01, 0.006)));
        assert_eq!((t.sample_factor, t.real_samples, t.samples), (0.5, Some(300), 100));
        assert_eq!(t.amplitudes, vec![1.0, 0.85, 0.7, 0.5, 0.25, 0.7]);

        let a = preset("async-vs-sync").unwrap();
        assert_eq!(a.budgets, (2..=20).collect::<Vec<_>>());
        assert_eq!(a.trials, 300);
    }

    #[test]
    fn unknown_preset_is_usage_error() {
        let e = preset("nope").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("boxcar-damped"));
    }
}
