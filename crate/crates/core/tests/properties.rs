use anm_modal::atomcore::{dual_norm_sup, steering, toeplitz_adjoint, toeplitz_expand};
use anm_modal::measure::{adjoint, apply, draw_scheme, Dims, Observation, SchemeData, SchemeKind};
use anm_modal::modal::{locate_frequencies, mac, recover_shapes, svd_baseline, LocateOptions};
use anm_modal::sdpsolve::{psd_project, solve, AnmProblem, SolveMode, SolverOptions};
use anm_modal::structsim::{hilbert_analytic, min_separation, solve_modes, synthesize_analytic, ModalGroundTruth, StructuralSystem};
use anm_modal::{Real, C64};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn g(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn cmat(m: usize, n: usize, r: &mut ChaCha8Rng) -> DMatrix<C64> {
    DMatrix::from_fn(m, n, |_, _| C64::new(g(r), g(r)))
}

fn herm(p: usize, r: &mut ChaCha8Rng) -> DMatrix<C64> {
    let a = cmat(p, p, r);
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

fn unitary(n: usize, r: &mut ChaCha8Rng) -> DMatrix<C64> {
    cmat(n, n, r).qr().q()
}

fn inner_re(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

fn budget(kind: SchemeKind, m: usize, n: usize, r: &mut ChaCha8Rng) -> usize {
    let u = (g(r).abs() * 1000.0) as usize;
    match kind {
        SchemeKind::Full => 0,
        SchemeKind::SyncSample => 1 + u % m,
        SchemeKind::AsyncSample => 1 + u % (m * n),
        SchemeKind::TemporalCompress => 1 + u % m,
        SchemeKind::SpatialCompress => 1,
    }
}

fn kind_strategy() -> impl Strategy<Value = SchemeKind> {
    prop::sample::select(SchemeKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn measure_adjoint_identity(kind in kind_strategy(), m in 2usize..24, n in 1usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let b = budget(kind, m, n, &mut r);
        let spec = draw_scheme::<f64, _>(kind, Dims { rows: m, cols: n, budget: b }, &mut r).unwrap();
        let x = cmat(m, n, &mut r);
        let ax = apply(&spec, &x).unwrap();
        let y = apply(&spec, &cmat(m, n, &mut r)).unwrap();
        let lhs = ax.inner_re(&y).unwrap();
        let rhs = inner_re(&x, &adjoint(&spec, &y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "{kind}: {lhs} vs {rhs}");
    }

    #[test]
    fn apply_is_linear(kind in kind_strategy(), m in 2usize..20, n in 1usize..5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let b = budget(kind, m, n, &mut r);
        let spec = draw_scheme::<f64, _>(kind, Dims { rows: m, cols: n, budget: b }, &mut r).unwrap();
        let (x1, x2) = (cmat(m, n, &mut r), cmat(m, n, &mut r));
        let (a, c) = (C64::new(g(&mut r), g(&mut r)), C64::new(g(&mut r), g(&mut r)));
        let lhs = apply(&spec, &(&x1 * a + &x2 * c)).unwrap();
        let rhs = apply(&spec, &x1).unwrap().combine(a, &apply(&spec, &x2).unwrap(), c).unwrap();
        let diff = lhs.combine(C64::new(1.0, 0.0), &rhs, C64::new(-1.0, 0.0)).unwrap();
        prop_assert!(diff.norm() <= 1e-12 * (1.0 + lhs.norm()));
    }

    #[test]
    fn sync_is_async_on_full_rows(m in 2usize..20, n in 1usize..5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let b = budget(SchemeKind::SyncSample, m, n, &mut r);
        let spec = draw_scheme::<f64, _>(SchemeKind::SyncSample, Dims { rows: m, cols: n, budget: b }, &mut r).unwrap();
        let rows = match &spec.data { SchemeData::SyncSample(rows) => rows.clone(), _ => unreachable!() };
        let entries: Vec<(usize, usize)> = rows.iter().flat_map(|&i| (0..n).map(move |j| (i, j))).collect();
        let mut sorted = entries.clone();
        sorted.sort();
        let aspec = anm_modal::MeasurementSpec::new(m, n, SchemeData::AsyncSample(sorted)).unwrap();
        let x = cmat(m, n, &mut r);
        let (Observation::SyncSample(ys), Observation::AsyncSample(ya)) = (apply(&spec, &x).unwrap(), apply(&aspec, &x).unwrap()) else { unreachable!() };
        for (i, j, v) in ya {
            let k = rows.iter().position(|&row| row == i).unwrap();
            prop_assert_eq!(ys[(k, j)], v);
        }
    }

    #[test]
    fn draw_scheme_reproducible(kind in kind_strategy(), m in 2usize..20, n in 1usize..5, seed in any::<u64>()) {
        let b = budget(kind, m, n, &mut rng(seed ^ 7));
        let dims = Dims { rows: m, cols: n, budget: b };
        let s1 = draw_scheme::<f64, _>(kind, dims, &mut rng(seed)).unwrap();
        let s2 = draw_scheme::<f64, _>(kind, dims, &mut rng(seed)).unwrap();
        prop_assert_eq!(s1, s2);
    }

    #[test]
    fn steering_norm_and_toeplitz_hermitian(f in 0.0f64..1.0, m in 1usize..64, seed in any::<u64>()) {
        let a = steering(f, m).unwrap();
        prop_assert!((a.norm_squared() - m as f64).abs() <= 1e-12 * m as f64);
        let mut r = rng(seed);
        let u = DVector::from_fn(m, |_, _| C64::new(g(&mut r), g(&mut r)));
        let t = toeplitz_expand(&u);
        prop_assert!((&t - t.adjoint()).iter().all(|v| v.norm() <= 1e-14));
    }

    #[test]
    fn toeplitz_pairing(m in 1usize..30, seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut u = DVector::from_fn(m, |_, _| C64::new(g(&mut r), g(&mut r)));
        u[0].im = 0.0;
        let z = cmat(m, m, &mut r);
        let lhs = inner_re(&toeplitz_expand(&u), &z);
        let rhs: f64 = u.iter().zip(toeplitz_adjoint(&z).iter()).map(|(a, b)| (a.conj() * b).re).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn dual_norm_unitary_invariant(m in 4usize..24, n in 1usize..5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let q = cmat(m, n, &mut r);
        let u = unitary(n, &mut r);
        let grid = 1 << 12;
        let (a, _) = dual_norm_sup(&q, grid).unwrap();
        let (b, _) = dual_norm_sup(&(&q * &u), grid).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn psd_projection_properties(p in 1usize..12, seed in any::<u64>()) {
        let mut r = rng(seed);
        let h = herm(p, &mut r);
        let hp = psd_project(&h).unwrap();
        let hn = h.norm();
        prop_assert!(f64::hermitian_eigen(&hp).unwrap().0[0] >= -1e-12 * hn);
        prop_assert!((psd_project(&hp).unwrap() - &hp).norm() <= 1e-12 * hn.max(1.0));
        let u = unitary(p, &mut r);
        let rotated = psd_project(&(&u * &h * u.adjoint())).unwrap();
        prop_assert!((rotated - &u * &hp * u.adjoint()).norm() <= 1e-10 * hn.max(1.0));
    }

    #[test]
    fn mac_phase_invariant(n in 1usize..10, th1 in 0.0f64..6.3, th2 in 0.0f64..6.3, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = DVector::from_fn(n, |_, _| C64::new(g(&mut r), g(&mut r))).normalize();
        let b = DVector::from_fn(n, |_, _| C64::new(g(&mut r), g(&mut r))).normalize();
        let base = mac(a.as_slice(), b.as_slice()).unwrap();
        let a2 = &a * C64::from_polar(1.0, th1);
        let b2 = &b * C64::from_polar(1.0, th2);
        prop_assert!((mac(a2.as_slice(), b.as_slice()).unwrap() - base).abs() <= 1e-12);
        prop_assert!((mac(a.as_slice(), b2.as_slice()).unwrap() - base).abs() <= 1e-12);
        prop_assert!((mac(a.as_slice(), a2.as_slice()).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn svd_shapes_orthogonal(m in 6usize..30, n in 2usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = cmat(m, n, &mut r);
        let k = n.min(3);
        let est = svd_baseline(&x, k).unwrap();
        let gram = est.mode_shapes.adjoint() * &est.mode_shapes;
        prop_assert!((gram - DMatrix::identity(k, k)).norm() <= 1e-10);
    }

    #[test]
    fn recover_shapes_consistent(m in 16usize..48, n in 1usize..5, k in 1usize..4, seed in any::<u64>()) {
        let mut r = rng(seed);
        // k frequencies on a jittered grid with spacing at least 1/M
        let step = 1.0 / k as f64;
        let freqs: Vec<f64> = (0..k).map(|i| i as f64 * step + 0.1 * step * g(&mut r).tanh().abs()).collect();
        prop_assume!(min_separation(&freqs).unwrap() >= 1.0 / m as f64);
        let shapes = DMatrix::from_columns(&(0..k).map(|_| DVector::from_fn(n, |_, _| C64::new(g(&mut r), g(&mut r))).normalize()).collect::<Vec<_>>());
        let amps: Vec<C64> = (0..k).map(|_| C64::from_polar(0.2 + g(&mut r).abs(), g(&mut r))).collect();
        let truth = ModalGroundTruth::new(freqs.clone(), amps.clone(), shapes.clone(), 1.0, m).unwrap();
        let x = synthesize_analytic(&truth).unwrap().entries;
        let (mags, psi) = recover_shapes(&x, &freqs).unwrap();
        for i in 0..k {
            prop_assert!((mags[i] - amps[i].norm()).abs() <= 1e-8);
            let v = mac(shapes.column(i).as_slice(), psi.column(i).as_slice()).unwrap();
            prop_assert!((v - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn locate_unitary_invariant(n in 1usize..4, seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = 24;
        let freqs = [0.2, 0.55];
        // a certificate-like Q with exact unit peaks: Q = Σ a(f_k) b_kᵀ / M with orthonormal b_k
        let b = unitary(n.max(2), &mut r);
        let mut q = DMatrix::<C64>::zeros(m, n.max(2));
        for (i, f) in freqs.iter().enumerate() {
            q += steering(*f, m).unwrap() * b.row(i) * C64::new(1.0 / m as f64, 0.0);
        }
        let u = unitary(q.ncols(), &mut r);
        let opts = LocateOptions::default();
        let a = locate_frequencies(&q, &opts);
        let c = locate_frequencies(&(&q * u), &opts);
        prop_assert_eq!(a.len(), c.len());
        for (x, y) in a.iter().zip(&c) {
            prop_assert!((x - y).abs() <= 1e-8);
        }
    }

    #[test]
    fn synthesis_linear_in_amplitudes(c in 0.0f64..10.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let shapes = cmat(3, 2, &mut r);
        let amps = vec![C64::new(g(&mut r), g(&mut r)), C64::new(g(&mut r), g(&mut r))];
        let t1 = ModalGroundTruth::new(vec![0.1, 0.4], amps.clone(), shapes.clone(), 1.0, 12).unwrap();
        let t2 = ModalGroundTruth::new(vec![0.1, 0.4], amps.iter().map(|a| a * c).collect(), shapes, 1.0, 12).unwrap();
        let x1 = synthesize_analytic(&t1).unwrap().entries;
        let x2 = synthesize_analytic(&t2).unwrap().entries;
        prop_assert!((x1 * C64::new(c, 0.0) - x2).iter().all(|v| v.norm() <= 1e-12 * (1.0 + c)));
    }

    #[test]
    fn hilbert_keeps_real_part(m in 2usize..64, n in 1usize..4, seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = DMatrix::from_fn(m, n, |_, _| g(&mut r));
        let z = hilbert_analytic(&x).unwrap();
        prop_assert!(z.iter().zip(x.iter()).all(|(a, b)| (a.re - b).abs() <= 1e-10));
    }

    #[test]
    fn separation_invariances(fs in prop::collection::vec(0.0f64..1.0, 2..8), shift in -3i32..3, seed in any::<u64>()) {
        let base = min_separation(&fs).unwrap();
        let mut perm = fs.clone();
        let mut r = rng(seed);
        for i in (1..perm.len()).rev() {
            let j = (g(&mut r).abs() * 1e6) as usize % (i + 1);
            perm.swap(i, j);
        }
        let shifted: Vec<f64> = perm.iter().map(|f| f + shift as f64).collect();
        prop_assert!((min_separation(&perm).unwrap() - base).abs() <= 1e-12);
        prop_assert!((min_separation(&shifted).unwrap() - base).abs() <= 1e-9);
    }

    #[test]
    fn mode_residuals(masses in prop::collection::vec(0.5f64..5.0, 2..7), seed in any::<u64>()) {
        let mut r = rng(seed);
        let springs: Vec<f64> = (0..=masses.len()).map(|_| 10.0 + 100.0 * g(&mut r).abs()).collect();
        let sys = StructuralSystem::chain(&masses, &springs).unwrap();
        let modes = solve_modes(&sys).unwrap();
        let knorm = sys.stiffness.norm();
        for (k, f) in modes.natural_frequencies.iter().enumerate() {
            let w2 = (2.0 * std::f64::consts::PI * f).powi(2);
            let res = (&sys.stiffness - &sys.mass * w2) * modes.mode_shapes.column(k);
            prop_assert!(res.norm() <= 1e-8 * knorm);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn solve_is_deterministic(kind in kind_strategy(), seed in any::<u64>()) {
        let (m, n) = (16, 2);
        let mut r = rng(seed);
        let b = budget(kind, m, n, &mut r).max(if kind == SchemeKind::AsyncSample { 16 } else { 1 });
        let spec = draw_scheme::<f64, _>(kind, Dims { rows: m, cols: n, budget: b }, &mut r).unwrap();
        let truth = ModalGroundTruth::new(vec![0.2], vec![C64::new(1.0, 0.0)], cmat(n, 1, &mut r), 1.0, m).unwrap();
        let obs = apply(&spec, &synthesize_analytic(&truth).unwrap().entries).unwrap();
        let p = AnmProblem::new(spec, obs, SolveMode::Exact).unwrap();
        let opts = SolverOptions { max_iters: 300, ..SolverOptions::default() };
        let a = solve(&p, &opts).unwrap();
        let c = solve(&p, &opts).unwrap();
        prop_assert_eq!(a.x, c.x);
        prop_assert_eq!(a.certificate.q, c.certificate.q);
        prop_assert_eq!(a.iterations, c.iterations);
    }
}
