//! Driven XXX Heisenberg chain used as the physical reservoir.
//!
//! The state obeys
//!
//! ```text
//! drho/dt = -i [H0 + h(t) D, rho]
//!           + g_phi * sum_l (Z_l rho Z_l - rho)
//!           + g_dec * sum_{l in L} (S-_l rho S+_l - 1/2 {S+_l S-_l, rho})
//! ```
//!
//! with `H0 = J sum_i (X_i X_{i+1} + Y_i Y_{i+1} + Z_i Z_{i+1})` on an open
//! chain, `D = sum_l sigma_a^(l)` for the drive axis `a`, and `S-_l = |1><0|`
//! lowering site `l` from up to down. `L` is the set of lossy sites (all
//! sites when `decay_sites` is `None`). The input is held constant over each
//! sample interval and integrated with classical RK4.
//!
//! With a uniform drive and identical channels on every site the state stays
//! a symmetric product state that commutes with `H0`, so `J` drops out. The
//! default therefore damps only site 0.

use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::error::{QrcError, Result};
use crate::linalg::{self, kron_all, pauli, ComplexMatrix, DensityMatrix};

pub const MAX_SPINS: usize = 9;

/// Trace drift above which a recorded state is renormalized.
const TRACE_RENORM_TOL: f64 = 1e-12;
/// Drift in trace, purity or positivity treated as a failed integration.
const DRIFT_ABORT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn pauli(self) -> ComplexMatrix {
        match self {
            Axis::X => pauli::x(),
            Axis::Y => pauli::y(),
            Axis::Z => pauli::z(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    AllPlusX,
    AllUpZ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub n_spins: usize,
    /// Exchange coupling `J` in angular-frequency units.
    pub coupling: f64,
    pub drive_axis: Axis,
    pub initial_state: InitialState,
    /// Rate of the per-site `sigma_z` dephasing channel.
    pub dephasing_rate: f64,
    /// Rate of the spin lowering channel.
    pub decay_rate: f64,
    /// Sites carrying the lowering channel; `None` means every site.
    pub decay_sites: Option<Vec<usize>>,
    /// RK4 steps per input sample.
    pub substeps: usize,
    /// Time per input sample.
    pub sample_dt: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_spins: 5,
            coupling: std::f64::consts::PI,
            drive_axis: Axis::X,
            initial_state: InitialState::AllUpZ,
            dephasing_rate: 0.0,
            decay_rate: 5.0,
            decay_sites: Some(vec![0]),
            substeps: 20,
            sample_dt: 0.1,
        }
    }
}

impl ChainConfig {
    /// Closed chain with no dissipation.
    pub fn unitary(n_spins: usize, coupling: f64) -> Self {
        Self {
            n_spins,
            coupling,
            decay_rate: 0.0,
            dephasing_rate: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_SPINS).contains(&self.n_spins) {
            return Err(QrcError::Argument(format!(
                "n_spins must be in 1..={MAX_SPINS}, got {}",
                self.n_spins
            )));
        }
        if !self.coupling.is_finite() {
            return Err(QrcError::Argument("coupling must be finite".into()));
        }
        for (name, rate) in [("dephasing_rate", self.dephasing_rate), ("decay_rate", self.decay_rate)] {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(QrcError::Argument(format!("{name} must be finite and >= 0, got {rate}")));
            }
        }
        if let Some(sites) = &self.decay_sites {
            if let Some(&s) = sites.iter().find(|&&s| s >= self.n_spins) {
                return Err(QrcError::SiteIndex {
                    index: s,
                    n_sites: self.n_spins,
                });
            }
            if sites.windows(2).any(|w| w[0] >= w[1]) {
                return Err(QrcError::Argument("decay_sites must be strictly ascending".into()));
            }
        }
        if self.substeps == 0 {
            return Err(QrcError::Argument("substeps must be at least 1".into()));
        }
        if !(self.sample_dt.is_finite() && self.sample_dt > 0.0) {
            return Err(QrcError::Argument("sample_dt must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins
    }

    pub fn is_unitary(&self) -> bool {
        self.dephasing_rate == 0.0 && self.decay_rate == 0.0
    }

    /// Upper bound on the spectral radius of the generator for inputs with
    /// `|u| <= max_abs_input`.
    pub fn generator_bound(&self, max_abs_input: f64) -> f64 {
        let n = self.n_spins as f64;
        let h_norm = 3.0 * self.coupling.abs() * (n - 1.0) + max_abs_input.abs() * n;
        let lossy = self.decay_sites.as_ref().map_or(n, |s| s.len() as f64);
        2.0 * h_norm + 2.0 * self.dephasing_rate * n + self.decay_rate * lossy
    }

    /// Bit masks of the lossy sites. Site 0 is the most significant bit of
    /// a basis index.
    fn decay_masks(&self) -> Vec<usize> {
        let n = self.n_spins;
        match &self.decay_sites {
            Some(sites) => sites.iter().map(|&s| 1 << (n - 1 - s)).collect(),
            None => (0..n).map(|s| 1 << (n - 1 - s)).collect(),
        }
    }

    /// Smallest substep count keeping `step * generator_bound <= max_phase`,
    /// never fewer than the configured `substeps`.
    pub fn required_substeps(&self, max_abs_input: f64, max_phase: f64) -> usize {
        let needed = (self.sample_dt * self.generator_bound(max_abs_input) / max_phase).ceil();
        self.substeps.max(needed as usize).max(1)
    }
}

/// Time-ordered states after each input sample, with the drive that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub drive: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n_spins(&self) -> usize {
        self.states.first().map_or(0, |s| s.n_sites())
    }
}

fn pair_term(op: &ComplexMatrix, i: usize, n: usize) -> Result<ComplexMatrix> {
    let id = pauli::identity();
    let factors: Vec<&ComplexMatrix> = (0..n)
        .map(|s| if s == i || s == i + 1 { op } else { &id })
        .collect();
    kron_all(factors)
}

pub fn build_static_hamiltonian(config: &ChainConfig) -> Result<ComplexMatrix> {
    config.validate()?;
    let n = config.n_spins;
    let mut h = ComplexMatrix::zeros(config.dim());
    for i in 0..n.saturating_sub(1) {
        for op in [pauli::x(), pauli::y(), pauli::z()] {
            h = &h + &pair_term(&op, i, n)?;
        }
    }
    Ok(h.scale_real(config.coupling))
}

pub fn build_drive_operator(config: &ChainConfig) -> Result<ComplexMatrix> {
    config.validate()?;
    let op = config.drive_axis.pauli();
    let mut d = ComplexMatrix::zeros(config.dim());
    for l in 0..config.n_spins {
        d = &d + &linalg::embed_single_site(&op, l, config.n_spins)?;
    }
    Ok(d)
}

pub fn initial_state(config: &ChainConfig) -> Result<DensityMatrix> {
    config.validate()?;
    let single = match config.initial_state {
        InitialState::AllPlusX => pauli::plus(),
        InitialState::AllUpZ => pauli::up(),
    };
    DensityMatrix::qubits_from_projectors(&vec![single; config.n_spins])
}

/// Row-compressed Hamiltonian; chain Hamiltonians have `O(N)` nonzeros
/// per row.
#[derive(Default)]
struct SparseRows {
    start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseRows {
    fn from_dense(dim: usize, dense: impl Iterator<Item = Complex64>) -> Self {
        let mut rows = Self {
            start: vec![0],
            ..Self::default()
        };
        for (idx, v) in dense.enumerate() {
            if v.re != 0.0 || v.im != 0.0 {
                rows.cols.push(idx % dim);
                rows.vals.push(v);
            }
            if idx % dim == dim - 1 {
                rows.start.push(rows.cols.len());
            }
        }
        rows
    }
}

/// Right-hand side of the master equation for a fixed Hamiltonian.
struct Generator {
    dim: usize,
    hamiltonian: SparseRows,
    dephasing_rate: f64,
    decay_rate: f64,
    decay_masks: Vec<usize>,
}

impl Generator {
    /// Writes `drho/dt` into `out`. `rho` must be Hermitian; the commutator
    /// uses `rho H = (H rho)^dagger`.
    fn apply(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        let h = &self.hamiltonian;
        // out <- H rho
        out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for i in 0..n {
            let row = &mut out[i * n..(i + 1) * n];
            for e in h.start[i]..h.start[i + 1] {
                let (k, a) = (h.cols[e], h.vals[e]);
                for (o, b) in row.iter_mut().zip(&rho[k * n..(k + 1) * n]) {
                    *o += a * b;
                }
            }
        }
        // out <- -i (K - K^dagger), computed on the upper triangle and mirrored.
        for i in 0..n {
            for j in i..n {
                let k_ij = out[i * n + j];
                let k_ji = out[j * n + i];
                let d = k_ij - k_ji.conj();
                let v = Complex64::new(d.im, -d.re);
                out[i * n + j] = v;
                out[j * n + i] = v.conj();
            }
        }
        if self.dephasing_rate > 0.0 {
            let g = 2.0 * self.dephasing_rate;
            for a in 0..n {
                for b in 0..n {
                    let flips = (a ^ b).count_ones() as f64;
                    if flips > 0.0 {
                        out[a * n + b] -= rho[a * n + b] * (g * flips);
                    }
                }
            }
        }
        if self.decay_rate > 0.0 {
            let g = self.decay_rate;
            for &mask in &self.decay_masks {
                for a in 0..n {
                    let a_up = a & mask == 0;
                    for b in 0..n {
                        let b_up = b & mask == 0;
                        let mut v = Complex64::new(0.0, 0.0);
                        if !a_up && !b_up {
                            v += rho[(a ^ mask) * n + (b ^ mask)];
                        }
                        let ups = a_up as u8 + b_up as u8;
                        if ups > 0 {
                            v -= rho[a * n + b] * (0.5 * ups as f64);
                        }
                        out[a * n + b] += v * g;
                    }
                }
            }
        }
    }
}

struct Rk4Workspace {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Rk4Workspace {
    fn new(len: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); len];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    fn step(&mut self, gen: &Generator, rho: &mut [Complex64], h: f64) {
        gen.apply(rho, &mut self.k1);
        axpy_into(&mut self.tmp, rho, 0.5 * h, &self.k1);
        gen.apply(&self.tmp, &mut self.k2);
        axpy_into(&mut self.tmp, rho, 0.5 * h, &self.k2);
        gen.apply(&self.tmp, &mut self.k3);
        axpy_into(&mut self.tmp, rho, h, &self.k3);
        gen.apply(&self.tmp, &mut self.k4);
        let w = h / 6.0;
        for i in 0..rho.len() {
            rho[i] += (self.k1[i] + (self.k2[i] + self.k3[i]) * 2.0 + self.k4[i]) * w;
        }
    }
}

fn axpy_into(out: &mut [Complex64], x: &[Complex64], a: f64, y: &[Complex64]) {
    for ((o, x), y) in out.iter_mut().zip(x).zip(y) {
        *o = x + y * a;
    }
}

/// Drives the chain with `input`, one zero-order-hold sample per entry, and
/// records the state after every sample.
pub fn evolve(config: &ChainConfig, input: &[f64]) -> Result<Trajectory> {
    let rho0 = initial_state(config)?;
    evolve_from(config, rho0, input)
}

/// As [`evolve`], from an explicit starting state.
pub fn evolve_from(config: &ChainConfig, rho0: DensityMatrix, input: &[f64]) -> Result<Trajectory> {
    config.validate()?;
    if input.is_empty() {
        return Err(QrcError::Argument("input signal is empty".into()));
    }
    if let Some(k) = input.iter().position(|u| !u.is_finite()) {
        return Err(QrcError::Argument(format!("input sample {k} is not finite")));
    }
    if rho0.dim() != config.dim() {
        return Err(QrcError::Shape(format!(
            "initial state has dimension {}, chain needs {}",
            rho0.dim(),
            config.dim()
        )));
    }
    let h0 = build_static_hamiltonian(config)?;
    let drive = build_drive_operator(config)?;
    let dim = config.dim();
    let site_dims = rho0.site_dims().to_vec();
    let mut rho: Vec<Complex64> = rho0.into_matrix().as_slice().to_vec();
    let mut work = Rk4Workspace::new(dim * dim);
    let step = config.sample_dt / config.substeps as f64;

    let mut gen = Generator {
        dim,
        hamiltonian: SparseRows::default(),
        dephasing_rate: config.dephasing_rate,
        decay_rate: config.decay_rate,
        decay_masks: config.decay_masks(),
    };

    let mut times = Vec::with_capacity(input.len());
    let mut states = Vec::with_capacity(input.len());
    for (k, &u) in input.iter().enumerate() {
        let total = h0.as_slice().iter().zip(drive.as_slice()).map(|(h, d)| h + d * u);
        gen.hamiltonian = SparseRows::from_dense(dim, total);
        for _ in 0..config.substeps {
            work.step(&gen, &mut rho, step);
        }
        let state = checked_state(&mut rho, dim, &site_dims, k)?;
        times.push((k + 1) as f64 * config.sample_dt);
        states.push(state);
    }
    Ok(Trajectory {
        times,
        states,
        drive: input.to_vec(),
    })
}

fn checked_state(
    rho: &mut [Complex64],
    dim: usize,
    site_dims: &[usize],
    sample: usize,
) -> Result<DensityMatrix> {
    let instability = |detail: String| QrcError::IntegrationInstability { sample, detail };
    if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(QrcError::Numerical(format!("state became non-finite at sample {sample}")));
    }
    let trace: Complex64 = (0..dim).map(|i| rho[i * dim + i]).sum();
    let drift = (trace - 1.0).norm();
    if drift > DRIFT_ABORT_TOL {
        return Err(instability(format!("trace drifted to {trace}")));
    }
    if drift > TRACE_RENORM_TOL {
        let inv = 1.0 / trace.re;
        rho.iter_mut().for_each(|z| *z *= inv);
    }
    let m = ComplexMatrix::from_vec_unchecked(dim, rho.to_vec());
    let herm = m.hermiticity_error();
    if herm > linalg::HERMITIAN_TOL {
        return Err(instability(format!("state lost Hermiticity ({herm:e})")));
    }
    let purity = m.trace_product(&m).re;
    if purity > 1.0 + DRIFT_ABORT_TOL {
        return Err(instability(format!("purity rose to {purity}")));
    }
    let min_eig = linalg::eigenvalues_hermitian(&m)?[0];
    if min_eig < -DRIFT_ABORT_TOL {
        return Err(instability(format!("negative eigenvalue {min_eig:e}")));
    }
    Ok(DensityMatrix::from_parts_unchecked(m, site_dims.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigenvalues_hermitian, embed_single_site, expectation, kron};

    fn single_spin(axis: Axis, initial: InitialState) -> ChainConfig {
        ChainConfig {
            n_spins: 1,
            coupling: 0.0,
            drive_axis: axis,
            initial_state: initial,
            dephasing_rate: 0.0,
            decay_rate: 0.0,
            decay_sites: None,
            substeps: 20,
            sample_dt: 0.1,
        }
    }

    #[test]
    fn single_spin_hamiltonian_is_zero() {
        let h = build_static_hamiltonian(&ChainConfig::unitary(1, 3.0)).unwrap();
        assert_eq!(h, ComplexMatrix::zeros(2));
    }

    #[test]
    fn two_spin_spectrum() {
        let h = build_static_hamiltonian(&ChainConfig::unitary(2, 1.0)).unwrap();
        let ev = eigenvalues_hermitian(&h).unwrap();
        for (a, b) in ev.iter().zip([-3.0, 1.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(h.is_exactly_hermitian());
    }

    #[test]
    fn three_spin_hamiltonian_matches_term_by_term_oracle() {
        let id = pauli::identity();
        let mut oracle = ComplexMatrix::zeros(8);
        for op in [pauli::x(), pauli::y(), pauli::z()] {
            let left = kron(&kron(&op, &op).unwrap(), &id).unwrap();
            let right = kron(&id, &kron(&op, &op).unwrap()).unwrap();
            oracle = &oracle + &(&left + &right);
        }
        let oracle = oracle.scale_real(2.0);
        let h = build_static_hamiltonian(&ChainConfig::unitary(3, 2.0)).unwrap();
        assert!(h.max_abs_diff(&oracle) < 1e-12);
    }

    #[test]
    fn drive_operator_examples() {
        let d = build_drive_operator(&single_spin(Axis::Z, InitialState::AllUpZ)).unwrap();
        assert_eq!(d, pauli::z());
        let mut cfg = ChainConfig::unitary(2, 1.0);
        cfg.drive_axis = Axis::Z;
        assert_eq!(build_drive_operator(&cfg).unwrap(), ComplexMatrix::diag(&[2.0, 0.0, 0.0, -2.0]));
        cfg.drive_axis = Axis::X;
        let oracle = &kron(&pauli::x(), &pauli::identity()).unwrap()
            + &kron(&pauli::identity(), &pauli::x()).unwrap();
        assert_eq!(build_drive_operator(&cfg).unwrap(), oracle);
    }

    #[test]
    fn initial_state_examples() {
        let up = initial_state(&single_spin(Axis::Z, InitialState::AllUpZ)).unwrap();
        assert_eq!(up.matrix(), &ComplexMatrix::diag(&[1.0, 0.0]));
        let plus = initial_state(&single_spin(Axis::Z, InitialState::AllPlusX)).unwrap();
        assert_eq!(plus.matrix(), &pauli::plus());
        let mut cfg = ChainConfig::unitary(2, 1.0);
        cfg.initial_state = InitialState::AllPlusX;
        let rho = initial_state(&cfg).unwrap();
        assert!(rho.matrix().as_slice().iter().all(|z| (z - 0.25).norm() < 1e-15));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ChainConfig::default();
        cfg.n_spins = 10;
        assert!(cfg.validate().is_err());
        cfg = ChainConfig::default();
        cfg.dephasing_rate = -1.0;
        assert!(cfg.validate().is_err());
        cfg = ChainConfig::default();
        cfg.coupling = f64::NAN;
        assert!(cfg.validate().is_err());
        assert!(evolve(&ChainConfig::default(), &[]).is_err());
        assert!(evolve(&ChainConfig::default(), &[f64::NAN]).is_err());
    }

    #[test]
    fn zero_drive_leaves_single_spin_constant() {
        let cfg = single_spin(Axis::Z, InitialState::AllPlusX);
        let traj = evolve(&cfg, &[0.0; 30]).unwrap();
        for s in &traj.states {
            assert_eq!(s.matrix(), &pauli::plus());
        }
    }

    #[test]
    fn precession_follows_cosine() {
        let h0 = 0.7;
        let mut cfg = single_spin(Axis::Z, InitialState::AllPlusX);
        cfg.substeps = 4;
        assert!(2.0 * h0 * cfg.sample_dt / cfg.substeps as f64 <= 0.05);
        let traj = evolve(&cfg, &vec![h0; 200]).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let sx = expectation(s, &pauli::x()).unwrap();
            assert!((sx - (2.0 * h0 * t).cos()).abs() < 1e-6);
        }
    }

    #[test]
    fn dephasing_shrinks_coherence() {
        let mut cfg = single_spin(Axis::Z, InitialState::AllPlusX);
        cfg.dephasing_rate = 0.3;
        let traj = evolve(&cfg, &[0.0; 50]).unwrap();
        let mut last = f64::INFINITY;
        for s in &traj.states {
            let c = s.matrix().get(0, 1).norm();
            assert!(c <= last);
            last = c;
        }
        // Exact solution: coherence 0.5 exp(-2 g t).
        let t = traj.times[49];
        assert!((last - 0.5 * (-0.6 * t).exp()).abs() < 1e-8);
    }

    #[test]
    fn decay_relaxes_towards_down() {
        let mut cfg = single_spin(Axis::X, InitialState::AllUpZ);
        cfg.decay_rate = 0.5;
        let traj = evolve(&cfg, &[0.0; 40]).unwrap();
        let t = traj.times[39];
        let p_up = traj.states[39].matrix().get(0, 0).re;
        assert!((p_up - (-0.5 * t).exp()).abs() < 1e-8);
    }

    #[test]
    fn unitary_invariants_on_chain() {
        let mut cfg = ChainConfig::unitary(3, 1.0);
        cfg.drive_axis = Axis::X;
        cfg.substeps = 40;
        let input: Vec<f64> = (0..100).map(|k| (0.3 * k as f64).sin()).collect();
        let traj = evolve(&cfg, &input).unwrap();
        for s in &traj.states {
            assert!((s.matrix().trace().re - 1.0).abs() < 1e-10);
            assert!(s.matrix().hermiticity_error() < 1e-10);
            assert!((s.purity() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn energy_conserved_under_constant_drive() {
        let mut cfg = ChainConfig::unitary(3, 0.8);
        cfg.drive_axis = Axis::X;
        cfg.substeps = 40;
        let u = 0.6;
        let h = &build_static_hamiltonian(&cfg).unwrap()
            + &build_drive_operator(&cfg).unwrap().scale_real(u);
        let traj = evolve(&cfg, &[u; 100]).unwrap();
        let e0 = expectation(&initial_state(&cfg).unwrap(), &h).unwrap();
        for s in &traj.states {
            assert!((expectation(s, &h).unwrap() - e0).abs() < 1e-6);
        }
    }

    /// Dissipator of `cfg` (zero Hamiltonian) applied elementwise, against
    /// `Z rho Z - rho` and the operator form of the lowering channel.
    fn check_dissipators(cfg: &ChainConfig, lossy: &[usize], seed: u64) {
        let n = cfg.n_spins;
        let dim = cfg.dim();
        let rho = crate::randmat::random_density_matrix(
            &crate::randmat::RandomMatrixSpec::new(dim, 1.0, seed).unwrap(),
        )
        .unwrap();
        let gen = Generator {
            dim,
            hamiltonian: SparseRows::from_dense(dim, std::iter::repeat(Complex64::new(0.0, 0.0)).take(dim * dim)),
            dephasing_rate: cfg.dephasing_rate,
            decay_rate: cfg.decay_rate,
            decay_masks: cfg.decay_masks(),
        };
        let mut out = vec![Complex64::new(0.0, 0.0); dim * dim];
        gen.apply(rho.matrix().as_slice(), &mut out);
        let got = ComplexMatrix::from_vec(dim, out).unwrap();

        let r = rho.matrix();
        let lower = ComplexMatrix::from_real_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let mut expected = ComplexMatrix::zeros(dim);
        for l in 0..n {
            let z = embed_single_site(&pauli::z(), l, n).unwrap();
            let deph = &z.matmul(r).matmul(&z) - r;
            expected = &expected + &deph.scale_real(cfg.dephasing_rate);
        }
        for &l in lossy {
            let lo = embed_single_site(&lower, l, n).unwrap();
            let ld = lo.dagger();
            let n_op = ld.matmul(&lo);
            let jump = lo.matmul(r).matmul(&ld);
            let anti = &n_op.matmul(r) + &r.matmul(&n_op);
            expected = &expected + &(&jump - &anti.scale_real(0.5)).scale_real(cfg.decay_rate);
        }
        assert!(got.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn dissipators_match_operator_form() {
        let mut cfg = ChainConfig::default();
        cfg.n_spins = 2;
        cfg.dephasing_rate = 0.7;
        cfg.decay_rate = 0.4;
        cfg.decay_sites = None;
        check_dissipators(&cfg, &[0, 1], 12);
        cfg.n_spins = 3;
        cfg.dephasing_rate = 0.0;
        for sites in [vec![0], vec![1], vec![0, 2]] {
            cfg.decay_sites = Some(sites.clone());
            check_dissipators(&cfg, &sites, 5);
        }
    }

    #[test]
    fn decay_sites_validated() {
        let mut cfg = ChainConfig::default();
        cfg.decay_sites = Some(vec![5]);
        assert!(matches!(cfg.validate(), Err(QrcError::SiteIndex { .. })));
        cfg.decay_sites = Some(vec![2, 1]);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn coupling_is_invisible_for_uniform_local_dynamics() {
        // Identical product states commute with every exchange term, so with
        // uniform drive and uniform channels J has no effect at all.
        let input: Vec<f64> = (0..40).map(|k| (0.3 * k as f64).cos()).collect();
        let mut cfg = ChainConfig::default();
        cfg.n_spins = 3;
        cfg.coupling = 0.0;
        cfg.decay_sites = None;
        let a = evolve(&cfg, &input).unwrap();
        cfg.coupling = 2.0;
        cfg.substeps = 60;
        let b = evolve(&cfg, &input).unwrap();
        let m = |t: &Trajectory| crate::linalg::partial_trace(&t.states[39], &[1]).unwrap();
        assert!(m(&a).matrix().max_abs_diff(m(&b).matrix()) < 1e-6);
        // A single lossy site breaks the symmetry.
        cfg.decay_sites = Some(vec![0]);
        let c = evolve(&cfg, &input).unwrap();
        cfg.coupling = 0.0;
        let d = evolve(&cfg, &input).unwrap();
        assert!(m(&c).matrix().max_abs_diff(m(&d).matrix()) > 1e-3);
    }

    #[test]
    fn substep_requirement_grows_with_coupling() {
        let mut cfg = ChainConfig::default();
        cfg.coupling = 1.0;
        let low = cfg.required_substeps(1.0, 0.5);
        cfg.coupling = 100.0;
        let high = cfg.required_substeps(1.0, 0.5);
        assert!(high > low);
        assert!(low >= cfg.substeps);
    }
}
