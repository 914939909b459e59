//! Random-observable measurement sets and the state description they produce.
//!
//! Observable `i` acts on a uniformly drawn subset of `obs_spins` sites and
//! is generated by [`random_hermitian`] with seed `mix_seed(seed, [i, 1])`;
//! its site subset is drawn from `mix_seed(seed, [i, 0])`. The feature value
//! at time `t` is `tr(rho_t|sites O_i)`, the expectation on the reduced state.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QrcError, Result};
use crate::linalg::{self, ComplexMatrix, RealMatrix};
use crate::randmat::{random_hermitian, RandomMatrixSpec};
use crate::reservoir::Trajectory;
use crate::rng::{mix_seed, SplitMix64};

/// `T x F` table of expectation values.
pub type FeatureMatrix = RealMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    observables: Vec<ComplexMatrix>,
    site_sets: Vec<Vec<usize>>,
    n_spins: usize,
    seed: u64,
    density: f64,
}

impl MeasurementSet {
    /// Assembles a set from explicit observables, checking every invariant.
    pub fn from_parts(
        observables: Vec<ComplexMatrix>,
        site_sets: Vec<Vec<usize>>,
        n_spins: usize,
    ) -> Result<Self> {
        if observables.len() != site_sets.len() {
            return Err(QrcError::Shape(format!(
                "{} observables but {} site sets",
                observables.len(),
                site_sets.len()
            )));
        }
        for (i, (obs, sites)) in observables.iter().zip(&site_sets).enumerate() {
            if sites.is_empty() || sites.windows(2).any(|w| w[0] >= w[1]) {
                return Err(QrcError::Argument(format!(
                    "site set {i} must be nonempty and strictly ascending"
                )));
            }
            if let Some(&s) = sites.iter().find(|&&s| s >= n_spins) {
                return Err(QrcError::SiteIndex {
                    index: s,
                    n_sites: n_spins,
                });
            }
            if obs.dim() != 1 << sites.len() {
                return Err(QrcError::Shape(format!(
                    "observable {i} has dimension {} for {} sites",
                    obs.dim(),
                    sites.len()
                )));
            }
            if !obs.is_exactly_hermitian() {
                return Err(QrcError::Hermiticity(format!("observable {i} is not Hermitian")));
            }
        }
        Ok(Self {
            observables,
            site_sets,
            n_spins,
            seed: 0,
            density: f64::NAN,
        })
    }

    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }

    pub fn observables(&self) -> &[ComplexMatrix] {
        &self.observables
    }

    pub fn site_sets(&self) -> &[Vec<usize>] {
        &self.site_sets
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn density(&self) -> f64 {
        self.density
    }
}

pub fn build_measurement_set(
    n_features: usize,
    n_spins: usize,
    obs_spins: usize,
    density: f64,
    seed: u64,
) -> Result<MeasurementSet> {
    if n_features == 0 {
        return Err(QrcError::Argument("n_features must be at least 1".into()));
    }
    if obs_spins == 0 || obs_spins > n_spins {
        return Err(QrcError::Argument(format!(
            "obs_spins must lie in 1..={n_spins}, got {obs_spins}"
        )));
    }
    let dim = 1usize << obs_spins;
    let mut observables = Vec::with_capacity(n_features);
    let mut site_sets = Vec::with_capacity(n_features);
    for i in 0..n_features as u64 {
        let mut sites = SplitMix64::derived(seed, &[i, 0]).sample_without_replacement(n_spins, obs_spins);
        sites.sort_unstable();
        site_sets.push(sites);
        let spec = RandomMatrixSpec::new(dim, density, mix_seed(seed, &[i, 1]))?;
        observables.push(random_hermitian(&spec)?);
    }
    Ok(MeasurementSet {
        observables,
        site_sets,
        n_spins,
        seed,
        density,
    })
}

/// Feature row for every state in the trajectory.
pub fn describe(traj: &Trajectory, mset: &MeasurementSet) -> Result<FeatureMatrix> {
    if traj.n_spins() != mset.n_spins() {
        return Err(QrcError::Shape(format!(
            "trajectory has {} spins, measurement set expects {}",
            traj.n_spins(),
            mset.n_spins()
        )));
    }
    let n_features = mset.len();
    let rows: Vec<Vec<f64>> = traj
        .states
        .par_iter()
        .map(|rho| {
            let mut reduced: HashMap<&[usize], linalg::DensityMatrix> = HashMap::new();
            let mut row = Vec::with_capacity(n_features);
            for (obs, sites) in mset.observables.iter().zip(&mset.site_sets) {
                let value = if sites.len() == mset.n_spins {
                    linalg::expectation(rho, obs)?
                } else {
                    if !reduced.contains_key(sites.as_slice()) {
                        reduced.insert(sites, linalg::partial_trace(rho, sites)?);
                    }
                    linalg::expectation(&reduced[sites.as_slice()], obs)?
                };
                row.push(value);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    let fm = RealMatrix::from_vec(traj.len(), n_features, data)?;
    if !fm.is_finite() {
        return Err(QrcError::Numerical("non-finite feature value".into()));
    }
    Ok(fm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli;
    use crate::reservoir::{evolve, initial_state, ChainConfig, InitialState};

    #[test]
    fn full_width_observable_covers_all_sites() {
        let m = build_measurement_set(1, 4, 4, 0.5, 3).unwrap();
        assert_eq!(m.site_sets()[0], vec![0, 1, 2, 3]);
        assert_eq!(m.observables()[0].dim(), 16);
    }

    #[test]
    fn deterministic_for_fixed_arguments() {
        let a = build_measurement_set(20, 5, 2, 0.7, 42).unwrap();
        let b = build_measurement_set(20, 5, 2, 0.7, 42).unwrap();
        assert_eq!(a, b);
        let c = build_measurement_set(20, 5, 2, 0.7, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn large_single_site_set() {
        let m = build_measurement_set(500, 5, 1, 1.0, 9).unwrap();
        assert_eq!(m.len(), 500);
        assert!(m.observables().iter().all(|o| o.dim() == 2 && o.is_exactly_hermitian()));
        assert!(m.site_sets().iter().all(|s| s.len() == 1 && s[0] < 5));
        // Uniform site choice: every site gets used.
        for site in 0..5 {
            assert!(m.site_sets().iter().any(|s| s[0] == site));
        }
    }

    #[test]
    fn argument_errors() {
        assert!(build_measurement_set(3, 2, 3, 1.0, 0).is_err());
        assert!(build_measurement_set(0, 2, 1, 1.0, 0).is_err());
        assert!(build_measurement_set(3, 2, 0, 1.0, 0).is_err());
    }

    fn short_trajectory(n: usize) -> Trajectory {
        let mut cfg = ChainConfig::default();
        cfg.n_spins = n;
        evolve(&cfg, &[0.3, -0.5, 0.8, 0.1]).unwrap()
    }

    #[test]
    fn identity_observable_gives_ones() {
        let traj = short_trajectory(3);
        let mset = MeasurementSet::from_parts(
            vec![ComplexMatrix::identity(2), ComplexMatrix::identity(4)],
            vec![vec![1], vec![0, 2]],
            3,
        )
        .unwrap();
        let f = describe(&traj, &mset).unwrap();
        assert!(f.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sigma_z_on_plus_state_is_zero() {
        let mut cfg = ChainConfig::default();
        cfg.n_spins = 3;
        cfg.initial_state = InitialState::AllPlusX;
        let rho = initial_state(&cfg).unwrap();
        let traj = Trajectory {
            times: vec![0.0],
            states: vec![rho],
            drive: vec![0.0],
        };
        let mset = MeasurementSet::from_parts(vec![pauli::z()], vec![vec![1]], 3).unwrap();
        let f = describe(&traj, &mset).unwrap();
        assert!(f.get(0, 0).abs() < 1e-12);
    }

    #[test]
    fn zero_density_columns_vanish() {
        let traj = short_trajectory(3);
        let mset = build_measurement_set(4, 3, 2, 0.0, 1).unwrap();
        let f = describe(&traj, &mset).unwrap();
        assert!(f.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn size_mismatch_rejected() {
        let traj = short_trajectory(3);
        let mset = build_measurement_set(2, 4, 1, 1.0, 1).unwrap();
        assert!(matches!(describe(&traj, &mset), Err(QrcError::Shape(_))));
    }

    #[test]
    fn from_parts_validation() {
        assert!(MeasurementSet::from_parts(vec![pauli::z()], vec![vec![3]], 3).is_err());
        assert!(MeasurementSet::from_parts(vec![pauli::z()], vec![vec![0, 1]], 3).is_err());
        let skew = pauli::y().scale_real(1.0);
        assert!(MeasurementSet::from_parts(vec![skew], vec![vec![0]], 3).is_ok());
        let bad = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(MeasurementSet::from_parts(vec![bad], vec![vec![0]], 3).is_err());
    }
}
