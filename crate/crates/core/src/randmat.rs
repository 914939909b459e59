//! Seeded sparse random Hermitian observables and random density matrices,
//! plus the eigenvalue-spread and measurement-diversity studies built on them.
//!
//! Generation scheme for [`random_hermitian`]: a [`SplitMix64`] stream seeded
//! with `spec.seed` walks the upper triangle row by row (`i` ascending, then
//! `j` from `i` to `dim - 1`). For each entry one uniform decides occupancy
//! (`u < density`). Occupied diagonal entries take one more uniform on
//! `[-1, 1)` as their real value; occupied off-diagonal entries take two,
//! real part first. The lower triangle is the exact conjugate mirror.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QrcError, Result};
use crate::linalg::{self, ComplexMatrix, DensityMatrix};
use crate::rng::{mix_seed, SplitMix64};
use num_complex::Complex64;

pub const MAX_RANDOM_DIM: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomMatrixSpec {
    pub dim: usize,
    pub density: f64,
    pub seed: u64,
}

impl RandomMatrixSpec {
    pub fn new(dim: usize, density: f64, seed: u64) -> Result<Self> {
        let spec = Self { dim, density, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dim.is_power_of_two() || self.dim > MAX_RANDOM_DIM {
            return Err(QrcError::Argument(format!(
                "random matrix dimension must be a power of two <= {MAX_RANDOM_DIM}, got {}",
                self.dim
            )));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(QrcError::Argument(format!(
                "density must lie in [0, 1], got {}",
                self.density
            )));
        }
        Ok(())
    }
}

pub fn random_hermitian(spec: &RandomMatrixSpec) -> Result<ComplexMatrix> {
    spec.validate()?;
    let n = spec.dim;
    let mut rng = SplitMix64::new(spec.seed);
    let mut m = ComplexMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            if rng.uniform() >= spec.density {
                continue;
            }
            if i == j {
                m.set(i, i, Complex64::new(rng.uniform_signed(), 0.0));
            } else {
                let re = rng.uniform_signed();
                let im = rng.uniform_signed();
                let z = Complex64::new(re, im);
                m.set(i, j, z);
                m.set(j, i, z.conj());
            }
        }
    }
    Ok(m)
}

/// `rho = A A^dagger / tr(A A^dagger)` with `A = random_hermitian(spec)`. A
/// zero draw is retried with the seed incremented by one.
pub fn random_density_matrix(spec: &RandomMatrixSpec) -> Result<DensityMatrix> {
    spec.validate()?;
    if spec.density == 0.0 {
        return Err(QrcError::Argument(
            "density 0 only produces the zero matrix; no density matrix can be formed".into(),
        ));
    }
    let mut attempt = *spec;
    let a = loop {
        let a = random_hermitian(&attempt)?;
        if a.max_abs() > 0.0 {
            break a;
        }
        attempt.seed = attempt.seed.wrapping_add(1);
    };
    let aad = a.matmul(&a.dagger());
    let norm = aad.trace().re;
    let n = a.dim();
    // Symmetrize away round-off so the result is Hermitian bit for bit.
    let rho = ComplexMatrix::from_fn(n, |i, j| {
        if i <= j {
            (aad.get(i, j) + aad.get(j, i).conj()) * (0.5 / norm)
        } else {
            (aad.get(j, i) + aad.get(i, j).conj()).conj() * (0.5 / norm)
        }
    });
    DensityMatrix::new_structural(rho, qubit_site_dims(n))
}

/// Site dimensions of `log2(dim)` spins, or `[1]` for the trivial space.
pub(crate) fn qubit_site_dims(dim: usize) -> Vec<usize> {
    let n = dim.trailing_zeros() as usize;
    if n == 0 {
        vec![1]
    } else {
        vec![2; n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub dim: usize,
    pub density: f64,
    pub eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub rows: Vec<SpectrumRow>,
}

impl SpectrumTable {
    /// Pooled `max - min` eigenvalue for one cell, if present.
    pub fn spread(&self, dim: usize, density: f64) -> Option<f64> {
        let mut values = self
            .rows
            .iter()
            .filter(|r| r.dim == dim && r.density == density)
            .map(|r| r.eigenvalue)
            .peekable();
        values.peek()?;
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        Some(hi - lo)
    }

    pub fn max_abs(&self, dim: usize, density: f64) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.dim == dim && r.density == density)
            .map(|r| r.eigenvalue.abs())
            .reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dim,density,eigenvalue\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.dim, r.density, r.eigenvalue));
        }
        out
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    for &d in dims {
        if !d.is_power_of_two() || d > MAX_RANDOM_DIM {
            return Err(QrcError::Argument(format!(
                "dimension {d} is not a power of two <= {MAX_RANDOM_DIM}"
            )));
        }
    }
    Ok(())
}

/// Pooled eigenvalues of `samples_per_cell` random observables for every
/// `(dim, density)` cell. Sample `s` of cell `(i, j)` uses seed
/// `mix_seed(seed, [i, j, s])`.
pub fn spectrum_study(
    dims: &[usize],
    densities: &[f64],
    samples_per_cell: usize,
    seed: u64,
) -> Result<SpectrumTable> {
    check_dims(dims)?;
    if samples_per_cell == 0 {
        return Err(QrcError::Argument("samples_per_cell must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for (di, &dim) in dims.iter().enumerate() {
        for (pi, &density) in densities.iter().enumerate() {
            let per_sample: Vec<Vec<f64>> = (0..samples_per_cell)
                .into_par_iter()
                .map(|s| {
                    let spec = RandomMatrixSpec::new(
                        dim,
                        density,
                        mix_seed(seed, &[di as u64, pi as u64, s as u64]),
                    )?;
                    linalg::eigenvalues_hermitian(&random_hermitian(&spec)?)
                })
                .collect::<Result<_>>()?;
            rows.extend(per_sample.into_iter().flatten().map(|eigenvalue| SpectrumRow {
                dim,
                density,
                eigenvalue,
            }));
        }
    }
    Ok(SpectrumTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementStudy {
    pub full_spins: usize,
    pub obs_dims: Vec<usize>,
    pub samples: usize,
    pub density: f64,
    pub seed: u64,
    /// Replace every observable by the identity. Test hook.
    pub force_identity: bool,
}

impl Default for MeasurementStudy {
    fn default() -> Self {
        Self {
            full_spins: 9,
            obs_dims: vec![2, 4, 8, 16, 32, 64, 128, 256, 512],
            samples: 500,
            density: 1.0,
            seed: 0,
            force_identity: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub obs_dim: usize,
    pub expectation: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasurementTable {
    pub rows: Vec<MeasurementRow>,
}

impl MeasurementTable {
    pub fn values(&self, obs_dim: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.obs_dim == obs_dim)
            .map(|r| r.expectation)
            .collect()
    }

    /// Sample standard deviation of the expectations recorded for `obs_dim`.
    pub fn std_dev(&self, obs_dim: usize) -> Option<f64> {
        sample_std(&self.values(obs_dim))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("obs_dim,expectation\n");
        for r in &self.rows {
            out.push_str(&format!("{},{}\n", r.obs_dim, r.expectation));
        }
        out
    }
}

pub(crate) fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some(var.sqrt())
}

/// Expectations of fresh random observables on random subsets of a random
/// `2^full_spins` state. For sample `s` of obs-dim index `d` the state,
/// site subset and observable use seeds `mix_seed(seed, [d, s, 0|1|2])`.
pub fn measurement_statistics_study(study: &MeasurementStudy) -> Result<MeasurementTable> {
    let full_dim = 1usize
        .checked_shl(study.full_spins as u32)
        .filter(|&d| d <= MAX_RANDOM_DIM && study.full_spins >= 1)
        .ok_or_else(|| {
            QrcError::Argument(format!("full_spins must be in 1..=9, got {}", study.full_spins))
        })?;
    check_dims(&study.obs_dims)?;
    if let Some(&d) = study.obs_dims.iter().find(|&&d| d > full_dim || d < 2) {
        return Err(QrcError::Argument(format!(
            "observable dimension {d} must lie in 2..={full_dim}"
        )));
    }
    let mut rows = Vec::new();
    for (di, &obs_dim) in study.obs_dims.iter().enumerate() {
        let k = obs_dim.trailing_zeros() as usize;
        let values: Vec<f64> = (0..study.samples)
            .into_par_iter()
            .map(|s| {
                let cell = |tag: u64| mix_seed(study.seed, &[di as u64, s as u64, tag]);
                let rho = random_density_matrix(&RandomMatrixSpec::new(
                    full_dim,
                    study.density,
                    cell(0),
                )?)?;
                let mut sites =
                    SplitMix64::new(cell(1)).sample_without_replacement(study.full_spins, k);
                sites.sort_unstable();
                let reduced = linalg::partial_trace(&rho, &sites)?;
                let obs = if study.force_identity {
                    ComplexMatrix::identity(obs_dim)
                } else {
                    random_hermitian(&RandomMatrixSpec::new(obs_dim, study.density, cell(2))?)?
                };
                linalg::expectation(&reduced, &obs)
            })
            .collect::<Result<_>>()?;
        rows.extend(values.into_iter().map(|expectation| MeasurementRow {
            obs_dim,
            expectation,
        }));
    }
    Ok(MeasurementTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigenvalues_hermitian;

    #[test]
    fn hermitian_is_exact_mirror() {
        for seed in 0..20 {
            let m = random_hermitian(&RandomMatrixSpec::new(16, 0.6, seed).unwrap()).unwrap();
            assert!(m.is_exactly_hermitian());
        }
    }

    #[test]
    fn zero_density_gives_zero_matrix() {
        let m = random_hermitian(&RandomMatrixSpec::new(8, 0.0, 5).unwrap()).unwrap();
        assert_eq!(m, ComplexMatrix::zeros(8));
        assert!(random_density_matrix(&RandomMatrixSpec::new(8, 0.0, 5).unwrap()).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = RandomMatrixSpec::new(32, 0.3, 99).unwrap();
        assert_eq!(random_hermitian(&spec).unwrap(), random_hermitian(&spec).unwrap());
        assert_eq!(
            random_density_matrix(&spec).unwrap(),
            random_density_matrix(&spec).unwrap()
        );
    }

    #[test]
    fn invalid_specs() {
        assert!(RandomMatrixSpec::new(6, 0.5, 0).is_err());
        assert!(RandomMatrixSpec::new(1024, 0.5, 0).is_err());
        assert!(RandomMatrixSpec::new(4, 1.5, 0).is_err());
        assert!(RandomMatrixSpec::new(4, -0.1, 0).is_err());
    }

    #[test]
    fn entries_within_unit_box() {
        let m = random_hermitian(&RandomMatrixSpec::new(64, 1.0, 1).unwrap()).unwrap();
        for i in 0..64 {
            assert_eq!(m.get(i, i).im, 0.0);
            for j in 0..64 {
                let z = m.get(i, j);
                assert!(z.re.abs() <= 1.0 && z.im.abs() <= 1.0);
            }
        }
    }

    #[test]
    fn occupancy_tracks_density() {
        let dim = 64;
        for density in [0.1, 0.5, 0.9] {
            let mut nonzero = 0usize;
            let mut total = 0usize;
            for seed in 0..100 {
                let m = random_hermitian(&RandomMatrixSpec::new(dim, density, seed).unwrap()).unwrap();
                for i in 0..dim {
                    for j in i..dim {
                        total += 1;
                        if m.get(i, j) != Complex64::new(0.0, 0.0) {
                            nonzero += 1;
                        }
                    }
                }
            }
            let frac = nonzero as f64 / total as f64;
            assert!((frac - density).abs() < 0.05, "density {density}: {frac}");
        }
    }

    #[test]
    fn degenerate_density_matrix() {
        let rho = random_density_matrix(&RandomMatrixSpec::new(1, 1.0, 3).unwrap()).unwrap();
        assert_eq!(rho.matrix().dim(), 1);
        assert!((rho.matrix().get(0, 0).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn density_matrices_satisfy_invariants() {
        for seed in 0..1000u64 {
            let dim = 2usize << (seed % 4);
            let density = [1.0, 0.5, 0.2][(seed % 3) as usize];
            let rho = random_density_matrix(&RandomMatrixSpec::new(dim, density, seed).unwrap()).unwrap();
            let m = rho.matrix().clone();
            assert!((m.trace().re - 1.0).abs() < 1e-12);
            assert!(eigenvalues_hermitian(&m).unwrap()[0] >= -1e-12);
            DensityMatrix::new(m, rho.site_dims().to_vec()).unwrap();
        }
    }

    #[test]
    fn spectrum_study_single_cell() {
        let t = spectrum_study(&[2], &[1.0], 1, 4).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows.iter().all(|r| r.eigenvalue.is_finite()));
        assert_eq!(t, spectrum_study(&[2], &[1.0], 1, 4).unwrap());
        assert!(t.to_csv().starts_with("dim,density,eigenvalue\n"));
        assert!(spectrum_study(&[3], &[1.0], 1, 4).is_err());
        assert!(spectrum_study(&[2], &[1.0], 0, 4).is_err());
    }

    #[test]
    fn spectrum_grows_with_dimension() {
        let t = spectrum_study(&[2, 512], &[1.0], 50, 11).unwrap();
        assert!(t.max_abs(512, 1.0).unwrap() > t.max_abs(2, 1.0).unwrap());
    }

    #[test]
    fn full_identity_observable_measures_one() {
        let study = MeasurementStudy {
            full_spins: 4,
            obs_dims: vec![16, 2],
            samples: 20,
            density: 1.0,
            seed: 8,
            force_identity: true,
        };
        let t = measurement_statistics_study(&study).unwrap();
        assert_eq!(t.rows.len(), 40);
        assert!(t.rows.iter().all(|r| (r.expectation - 1.0).abs() < 1e-12));
    }

    #[test]
    fn measurement_study_rejects_oversized_observable() {
        let study = MeasurementStudy {
            full_spins: 3,
            obs_dims: vec![16],
            samples: 2,
            ..MeasurementStudy::default()
        };
        assert!(matches!(
            measurement_statistics_study(&study),
            Err(QrcError::Argument(_))
        ));
    }

    #[test]
    fn measurement_study_is_deterministic() {
        let study = MeasurementStudy {
            full_spins: 5,
            obs_dims: vec![2, 32],
            samples: 10,
            seed: 21,
            ..MeasurementStudy::default()
        };
        assert_eq!(
            measurement_statistics_study(&study).unwrap(),
            measurement_statistics_study(&study).unwrap()
        );
    }
}
