//! Brute-force oracles and property tests across module boundaries.

mod common;

use num_complex::Complex64;
use proptest::prelude::*;

use qrc::experiments::{run_scan, ExperimentConfig, Task};
use qrc::features::{build_measurement_set, describe};
use qrc::linalg::{self, kron, partial_trace, ComplexMatrix, DensityMatrix};
use qrc::randmat::{random_hermitian, RandomMatrixSpec};
use qrc::reservoir::{evolve, ChainConfig, Trajectory};
use qrc::rng::SplitMix64;
use qrc::tasks::{cubic_hermite_interpolate, cubic_spline_interpolate, split, SplitKind, SplitPlan, TimeSeries};

use common::{all_subsets, lift_oracle, partial_trace_oracle, random_state};

#[test]
fn partial_trace_matches_nested_loop_oracle() {
    for n in 1..=3 {
        for seed in 0..100 {
            let rho = random_state(n, seed);
            for keep in all_subsets(n) {
                let got = partial_trace(&rho, &keep).unwrap();
                let want = partial_trace_oracle(rho.matrix(), n, &keep);
                assert!(got.matrix().max_abs_diff(&want) <= 1e-12, "n={n} seed={seed} keep={keep:?}");
            }
        }
    }
}

#[test]
fn features_match_lift_to_full_space_oracle() {
    for n in 1..=4 {
        for seed in 0..25u64 {
            let states: Vec<DensityMatrix> = (0..3).map(|k| random_state(n, seed * 7 + k)).collect();
            let traj = Trajectory {
                times: vec![1.0, 2.0, 3.0],
                states,
                drive: vec![0.0; 3],
            };
            for obs_spins in 1..=n {
                let mset = build_measurement_set(6, n, obs_spins, 0.8, seed).unwrap();
                let f = describe(&traj, &mset).unwrap();
                for (t, rho) in traj.states.iter().enumerate() {
                    for (i, (obs, sites)) in mset.observables().iter().zip(mset.site_sets()).enumerate() {
                        let lifted = lift_oracle(obs, sites, n);
                        let want = rho.matrix().matmul(&lifted).trace().re;
                        assert!((f.get(t, i) - want).abs() <= 1e-10);
                    }
                }
            }
        }
    }
}

fn small_matrix(seed: u64, dim: usize) -> ComplexMatrix {
    let mut rng = SplitMix64::new(seed);
    let data = (0..dim * dim)
        .map(|_| Complex64::new(rng.uniform_signed(), rng.uniform_signed()))
        .collect();
    ComplexMatrix::from_vec(dim, data).unwrap()
}

/// First and second derivative at knot `k` from one side, using four
/// points inside a single cubic piece. The stencils are exact for cubics,
/// so only round-off remains.
fn one_sided(train: &TimeSeries, k: f64, dir: f64, hermite: bool) -> (f64, f64) {
    let h = 1e-3;
    let q: Vec<f64> = (0..4).map(|i| k + dir * i as f64 * h).collect();
    let f = if hermite {
        cubic_hermite_interpolate(train, &q).unwrap()
    } else {
        cubic_spline_interpolate(train, &q).unwrap()
    };
    let d1 = dir * (-11.0 * f[0] + 18.0 * f[1] - 9.0 * f[2] + 2.0 * f[3]) / (6.0 * h);
    let d2 = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (h * h);
    (d1, d2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kron_mixed_product(seed in any::<u64>(), da in 1usize..4, db in 1usize..4) {
        let (a, c) = (small_matrix(seed, da), small_matrix(seed ^ 1, da));
        let (b, d) = (small_matrix(seed ^ 2, db), small_matrix(seed ^ 3, db));
        let lhs = kron(&a, &b).unwrap().matmul(&kron(&c, &d).unwrap());
        let rhs = kron(&a.matmul(&c), &b.matmul(&d)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn partial_trace_of_product_state_recovers_factor(seed in any::<u64>()) {
        let a = random_state(1, seed);
        let b = random_state(2, seed.wrapping_add(1));
        let joint = DensityMatrix::new(kron(a.matrix(), b.matrix()).unwrap(), vec![2, 2, 2]).unwrap();
        let ra = partial_trace(&joint, &[0]).unwrap();
        let rb = partial_trace(&joint, &[1, 2]).unwrap();
        prop_assert!(ra.matrix().max_abs_diff(a.matrix()) < 1e-12);
        prop_assert!(rb.matrix().max_abs_diff(b.matrix()) < 1e-12);
    }

    #[test]
    fn expectation_is_linear(seed in any::<u64>(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let rho = random_state(2, seed);
        let o1 = random_hermitian(&RandomMatrixSpec::new(4, 0.7, seed ^ 5).unwrap()).unwrap();
        let o2 = random_hermitian(&RandomMatrixSpec::new(4, 0.7, seed ^ 9).unwrap()).unwrap();
        let combo = &o1.scale_real(x) + &o2.scale_real(y);
        let lhs = linalg::expectation(&rho, &combo).unwrap();
        let rhs = x * linalg::expectation(&rho, &o1).unwrap() + y * linalg::expectation(&rho, &o2).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_sum_to_trace(seed in any::<u64>(), k in 1u32..6, density in 0.0f64..=1.0) {
        let h = random_hermitian(&RandomMatrixSpec::new(1 << k, density, seed).unwrap()).unwrap();
        let sum: f64 = linalg::eigenvalues_hermitian(&h).unwrap().iter().sum();
        prop_assert!((sum - h.trace().re).abs() < 1e-10);
    }

    #[test]
    fn split_is_a_partition(n in 2usize..300, f in 0.01f64..0.99, seed in any::<u64>(), shuffled in any::<bool>()) {
        let plan = SplitPlan {
            kind: if shuffled { SplitKind::Shuffled } else { SplitKind::Contiguous },
            train_fraction: f,
            seed,
        };
        match split(n, &plan) {
            Ok((train, test)) => {
                prop_assert!(!train.is_empty() && !test.is_empty());
                let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
            Err(_) => {
                let cut = (f * n as f64 + 1e-9).floor() as usize;
                prop_assert!(cut == 0 || cut >= n);
            }
        }
    }

    #[test]
    fn hermite_preserves_monotone_data(steps in prop::collection::vec((0.05f64..2.0, 0.0f64..3.0), 3..12)) {
        let mut t = 0.0;
        let mut v = 0.0;
        let (mut times, mut values) = (vec![0.0], vec![0.0]);
        for (dt, dv) in steps {
            t += dt;
            v += dv;
            times.push(t);
            values.push(v);
        }
        let train = TimeSeries::new(times.clone(), values).unwrap();
        let mut q = Vec::new();
        for w in times.windows(2) {
            for s in 0..50 {
                q.push(w[0] + (w[1] - w[0]) * s as f64 / 50.0);
            }
        }
        let out = cubic_hermite_interpolate(&train, &q).unwrap();
        for w in out.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn splines_are_smooth_across_knots(values in prop::collection::vec(-5.0f64..5.0, 4..9)) {
        let times: Vec<f64> = (0..values.len()).map(|k| k as f64 * 0.7).collect();
        let train = TimeSeries::new(times.clone(), values).unwrap();
        for &k in &times[1..times.len() - 1] {
            let (s_left, s_right) = (one_sided(&train, k, -1.0, false), one_sided(&train, k, 1.0, false));
            let (m_left, m_right) = (one_sided(&train, k, -1.0, true), one_sided(&train, k, 1.0, true));
            prop_assert!((m_left.0 - m_right.0).abs() < 1e-6);
            prop_assert!((s_left.0 - s_right.0).abs() < 1e-6);
            prop_assert!((s_left.1 - s_right.1).abs() < 1e-6 * (1.0 + s_left.1.abs()));
        }
    }

    #[test]
    fn open_loop_states_ignore_future_input(seed in any::<u64>(), cut in 1usize..15) {
        let mut rng = SplitMix64::new(seed);
        let u: Vec<f64> = (0..16).map(|_| rng.uniform_signed()).collect();
        let mut v = u.clone();
        for x in &mut v[cut..] {
            *x = rng.uniform_signed();
        }
        let cfg = ChainConfig { n_spins: 3, ..ChainConfig::default() };
        let a = evolve(&cfg, &u).unwrap();
        let b = evolve(&cfg, &v).unwrap();
        for k in 0..cut {
            prop_assert_eq!(&a.states[k], &b.states[k]);
        }
    }
}

#[test]
fn trajectories_keep_state_invariants() {
    let mut rng = SplitMix64::new(3);
    let input: Vec<f64> = (0..200).map(|_| rng.uniform_signed()).collect();
    let cfg = ChainConfig {
        n_spins: 4,
        dephasing_rate: 0.3,
        ..ChainConfig::default()
    };
    let traj = evolve(&cfg, &input).unwrap();
    for s in &traj.states {
        assert!((s.matrix().trace().re - 1.0).abs() < 1e-10);
        assert!(s.matrix().is_exactly_hermitian() || s.matrix().hermiticity_error() < 1e-12);
        assert!(linalg::eigenvalues_hermitian(s.matrix()).unwrap()[0] > -1e-8);
        assert!(s.purity() <= 1.0 + 1e-9);
    }
}

#[test]
fn scan_cells_are_order_independent() {
    let mut cfg = ExperimentConfig::for_task(Task::Scan);
    cfg.chain.n_spins = 2;
    cfg.cosine.samples_per_period = 10;
    cfg.cosine.periods = 6;
    cfg.scan.couplings = vec![0.5, 2.0];
    cfg.scan.feature_counts = vec![3, 8];
    cfg.scan.horizon_fractions = vec![0.5, 1.0];
    let forward = run_scan(&cfg).unwrap();
    cfg.scan.couplings.reverse();
    cfg.scan.feature_counts.reverse();
    cfg.scan.horizon_fractions.reverse();
    let backward = run_scan(&cfg).unwrap();
    let key = |r: &qrc::experiments::ScanRow| (r.coupling_grid.to_bits(), r.state_dim, r.horizon_fraction.to_bits());
    let mut a = forward.rows.clone();
    let mut b = backward.rows.clone();
    a.sort_by_key(key);
    b.sort_by_key(key);
    assert_eq!(a, b);
}
