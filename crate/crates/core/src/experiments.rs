//! End-to-end runs: drive the chain, describe its states, fit a readout and
//! score it, plus the coupling/state-size/horizon scan and the report
//! writers used by the CLI.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QrcError, Result};
use crate::features::{build_measurement_set, describe, FeatureMatrix};
use crate::linalg::RealMatrix;
use crate::randmat::{measurement_statistics_study, spectrum_study, MeasurementStudy, MeasurementTable, SpectrumTable};
use crate::readout::{self, pearson, ReadoutSpec};
use crate::reservoir::{evolve, ChainConfig};
use crate::rng::mix_seed;
use crate::tasks::{
    self, cubic_hermite_interpolate, cubic_spline_interpolate, gen_cosine, gen_mackey_glass, gen_random_walk,
    subsample, MackeyGlass, MinMaxScale, SplitKind, SplitPlan, TimeSeries,
};

/// Default bound on `step * generator_bound` used to size RK4 substeps.
pub const DEFAULT_MAX_PHASE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Cosine,
    MackeyGlass,
    Interpolation,
    Scan,
    Spectra,
    MeasureStats,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Cosine => "cosine",
            Task::MackeyGlass => "mackey_glass",
            Task::Interpolation => "interpolation",
            Task::Scan => "scan",
            Task::Spectra => "spectra",
            Task::MeasureStats => "measure_stats",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub n_features: usize,
    pub obs_spins: usize,
    pub density: f64,
    pub seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_features: 100,
            obs_spins: 1,
            density: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CosineParams {
    pub amplitude: f64,
    pub samples_per_period: usize,
    pub periods: usize,
}

impl Default for CosineParams {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            samples_per_period: 50,
            periods: 10,
        }
    }
}

impl CosineParams {
    pub fn series(&self, sample_dt: f64) -> Result<TimeSeries> {
        if self.samples_per_period == 0 || self.periods == 0 {
            return Err(QrcError::Argument("cosine needs samples_per_period and periods >= 1".into()));
        }
        let period = self.samples_per_period as f64 * sample_dt;
        gen_cosine(self.amplitude, period, self.samples_per_period * self.periods, sample_dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MackeyGlassParams {
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub n_exp: f64,
    pub dt: f64,
    pub history_value: f64,
    pub discard: usize,
    pub stride: usize,
    pub n_points: usize,
    /// Min-max rescale to `[-1, 1]` before driving the chain.
    pub rescale: bool,
}

impl Default for MackeyGlassParams {
    fn default() -> Self {
        let mg = MackeyGlass::default();
        Self {
            beta: mg.beta,
            gamma: mg.gamma,
            tau: mg.tau,
            n_exp: mg.n_exp,
            dt: mg.dt,
            history_value: mg.history_value,
            discard: mg.discard,
            stride: 20,
            n_points: 1000,
            rescale: true,
        }
    }
}

impl MackeyGlassParams {
    pub fn system(&self) -> MackeyGlass {
        MackeyGlass {
            beta: self.beta,
            gamma: self.gamma,
            tau: self.tau,
            n_exp: self.n_exp,
            dt: self.dt,
            n_steps: self.discard + self.n_points.saturating_sub(1) * self.stride,
            history_value: self.history_value,
            discard: self.discard,
        }
    }

    pub fn series(&self) -> Result<TimeSeries> {
        if self.n_points < 2 || self.stride == 0 {
            return Err(QrcError::Argument("Mackey-Glass needs n_points >= 2 and stride >= 1".into()));
        }
        subsample(&gen_mackey_glass(&self.system())?, self.stride)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesSource {
    RandomWalk,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpolationParams {
    pub source: SeriesSource,
    pub csv_path: Option<PathBuf>,
    pub n_points: usize,
    pub step_std: f64,
    pub walk_seed: u64,
    pub fractions: Vec<f64>,
}

impl Default for InterpolationParams {
    fn default() -> Self {
        Self {
            source: SeriesSource::RandomWalk,
            csv_path: None,
            n_points: 1000,
            step_std: 1.0,
            walk_seed: 0,
            fractions: (1..=9).map(|k| k as f64 / 10.0).collect(),
        }
    }
}

impl InterpolationParams {
    pub fn series(&self) -> Result<TimeSeries> {
        match self.source {
            SeriesSource::RandomWalk => gen_random_walk(self.n_points, self.step_std, self.walk_seed),
            SeriesSource::Csv => {
                let path = self
                    .csv_path
                    .as_ref()
                    .ok_or_else(|| QrcError::Config("interpolation.csv_path is required for source = \"csv\"".into()))?;
                Ok(tasks::load_price_csv(path)?.series)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanParams {
    pub couplings: Vec<f64>,
    /// Multiply every grid coupling by pi.
    pub couplings_times_pi: bool,
    pub feature_counts: Vec<usize>,
    /// Prediction offsets in cosine periods.
    pub horizon_fractions: Vec<f64>,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            couplings: vec![0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 100.0],
            couplings_times_pi: true,
            feature_counts: vec![1, 10, 20, 50, 100, 500],
            horizon_fractions: vec![0.05, 0.5, 1.0, 2.5, 5.0, 25.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectraParams {
    pub dims: Vec<usize>,
    pub densities: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SpectraParams {
    fn default() -> Self {
        Self {
            dims: (1..=9).map(|k| 1 << k).collect(),
            densities: vec![0.25, 0.5, 1.0],
            samples: 500,
            seed: 0,
        }
    }
}

/// Everything an experiment depends on. Every run is a pure function of
/// this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    /// When set, every component seed is derived from this one.
    pub seed: Option<u64>,
    /// Prediction offset in samples.
    pub horizon: usize,
    pub washout: usize,
    /// RK4 steps are sized so that `step * generator_bound <= max_phase`.
    pub max_phase: f64,
    /// Record wall time in reports (breaks byte-identical output).
    pub record_timing: bool,
    pub chain: ChainConfig,
    pub features: FeatureConfig,
    pub readout: ReadoutSpec,
    pub split: SplitPlan,
    pub cosine: CosineParams,
    pub mackey_glass: MackeyGlassParams,
    pub interpolation: InterpolationParams,
    pub scan: ScanParams,
    pub spectra: SpectraParams,
    pub measure_stats: MeasurementStudy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Cosine,
            seed: None,
            horizon: 1,
            washout: 0,
            max_phase: DEFAULT_MAX_PHASE,
            record_timing: false,
            chain: ChainConfig::default(),
            features: FeatureConfig::default(),
            readout: ReadoutSpec::default(),
            split: SplitPlan::default(),
            cosine: CosineParams::default(),
            mackey_glass: MackeyGlassParams::default(),
            interpolation: InterpolationParams::default(),
            scan: ScanParams::default(),
            spectra: SpectraParams::default(),
            measure_stats: MeasurementStudy::default(),
        }
    }
}

impl ExperimentConfig {
    /// Defaults for one experiment: couplings and state sizes of the
    /// reference runs.
    pub fn for_task(task: Task) -> Self {
        let mut cfg = Self {
            task,
            ..Self::default()
        };
        match task {
            Task::Cosine => cfg.chain.coupling = 10.0 * PI,
            Task::MackeyGlass => {
                cfg.chain.coupling = 0.1 * PI;
                cfg.features.n_features = 1000;
            }
            Task::Interpolation => {
                cfg.chain.coupling = 2.0 * PI;
                cfg.split = SplitPlan {
                    kind: SplitKind::Shuffled,
                    train_fraction: 0.2,
                    seed: 0,
                };
            }
            Task::Scan => {
                cfg.cosine.samples_per_period = 20;
                cfg.cosine.periods = 40;
            }
            Task::Spectra | Task::MeasureStats => {}
        }
        cfg
    }

    /// Parses a TOML document layered over the defaults of its task. The
    /// task comes from `task` in the document, else from `default_task`.
    pub fn from_toml_str(text: &str, default_task: Task) -> Result<Self> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| QrcError::Config(e.to_string()))?;
        let task = match doc.get("task") {
            Some(v) => v
                .clone()
                .try_into::<Task>()
                .map_err(|e| QrcError::Config(format!("task: {e}")))?,
            None => default_task,
        };
        let base = toml::Table::try_from(Self::for_task(task)).map_err(|e| QrcError::Config(e.to_string()))?;
        let merged = merge_tables(base, doc);
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e| QrcError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, default_task: Task) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| QrcError::io(path, e))?;
        Self::from_toml_str(&text, default_task)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| QrcError::Config(e.to_string()))
    }

    /// Copy with component seeds derived from the master seed, if one is set.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        if let Some(master) = self.seed {
            cfg.features.seed = mix_seed(master, &[1]);
            cfg.split.seed = mix_seed(master, &[2]);
            cfg.readout.init_seed = mix_seed(master, &[3]);
            cfg.interpolation.walk_seed = mix_seed(master, &[4]);
            cfg.spectra.seed = mix_seed(master, &[5]);
            cfg.measure_stats.seed = mix_seed(master, &[6]);
        }
        cfg
    }

    pub fn seeds(&self) -> SeedProvenance {
        SeedProvenance {
            master: self.seed,
            features: self.features.seed,
            split: self.split.seed,
            readout: self.readout.init_seed,
            walk: self.interpolation.walk_seed,
            spectra: self.spectra.seed,
            measure_stats: self.measure_stats.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        self.readout.validate()?;
        let f = &self.features;
        if f.n_features == 0 {
            return Err(QrcError::Config("features.n_features must be at least 1".into()));
        }
        if f.obs_spins == 0 || f.obs_spins > self.chain.n_spins {
            return Err(QrcError::Config(format!(
                "features.obs_spins must lie in 1..={}",
                self.chain.n_spins
            )));
        }
        if !(0.0..=1.0).contains(&f.density) {
            return Err(QrcError::Config("features.density must lie in [0, 1]".into()));
        }
        if !(self.max_phase > 0.0 && self.max_phase.is_finite()) {
            return Err(QrcError::Config("max_phase must be positive".into()));
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(QrcError::Config("split.train_fraction must lie in (0, 1)".into()));
        }
        let s = &self.scan;
        if s.couplings.is_empty() || s.feature_counts.is_empty() || s.horizon_fractions.is_empty() {
            return Err(QrcError::Config("scan grids must be nonempty".into()));
        }
        if s.feature_counts.contains(&0) || s.horizon_fractions.iter().any(|h| !(*h >= 0.0)) {
            return Err(QrcError::Config("scan feature counts must be >= 1 and horizons >= 0".into()));
        }
        if self.interpolation.fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(QrcError::Config("interpolation fractions must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

fn merge_tables(mut base: toml::Table, overlay: toml::Table) -> toml::Table {
    for (key, value) in overlay {
        match (base.remove(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                base.insert(key, toml::Value::Table(merge_tables(b, o)));
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
    base
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub master: Option<u64>,
    pub features: u64,
    pub split: u64,
    pub readout: u64,
    pub walk: u64,
    pub spectra: u64,
    pub measure_stats: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: Task,
    pub seeds: SeedProvenance,
    pub horizon: usize,
    pub washout: usize,
    pub substeps: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub pearson_train: f64,
    pub pearson_test: f64,
    /// Series index of each test target.
    pub test_indices: Vec<usize>,
    pub predictions: Vec<f64>,
    pub targets: Vec<f64>,
    pub wall_time_s: Option<f64>,
    pub config: ExperimentConfig,
}

impl RunReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "task,horizon,washout,n_train,n_test,pearson_train,pearson_test,test_index,target,prediction\n",
        );
        for ((i, t), p) in self.test_indices.iter().zip(&self.targets).zip(&self.predictions) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{i},{t},{p}\n",
                self.task.name(),
                self.horizon,
                self.washout,
                self.n_train,
                self.n_test,
                self.pearson_train,
                self.pearson_test
            ));
        }
        out
    }
}

/// Chain copy with substeps sized for the largest input magnitude.
pub fn prepared_chain(chain: &ChainConfig, input: &[f64], max_phase: f64) -> ChainConfig {
    let max_u = input.iter().fold(0.0f64, |m, u| m.max(u.abs()));
    ChainConfig {
        substeps: chain.required_substeps(max_u, max_phase),
        ..chain.clone()
    }
}

/// Drives the chain with `input` and measures `n_features` observables on
/// every recorded state.
pub fn reservoir_features(cfg: &ExperimentConfig, chain: &ChainConfig, input: &[f64]) -> Result<FeatureMatrix> {
    let f = &cfg.features;
    let mset = build_measurement_set(f.n_features, chain.n_spins, f.obs_spins, f.density, f.seed)?;
    let traj = evolve(chain, input)?;
    describe(&traj, &mset)
}

/// Feature rows `washout..len - horizon` paired with targets `u[k + horizon]`.
struct Pairs {
    rows: Vec<usize>,
    target_index: Vec<usize>,
    targets: Vec<f64>,
}

fn open_loop_pairs(input: &[f64], horizon: usize, washout: usize) -> Result<Pairs> {
    let len = input.len();
    if horizon + washout + 2 > len {
        return Err(QrcError::Argument(format!(
            "horizon {horizon} plus washout {washout} leaves fewer than two pairs in a series of {len}"
        )));
    }
    let rows: Vec<usize> = (washout..len - horizon).collect();
    let target_index: Vec<usize> = rows.iter().map(|k| k + horizon).collect();
    let targets = target_index.iter().map(|&t| input[t]).collect();
    Ok(Pairs {
        rows,
        target_index,
        targets,
    })
}

struct Scores {
    pearson_train: f64,
    pearson_test: f64,
    predictions: Vec<f64>,
}

/// Fits on the `train` pairs and scores both partitions. Indices refer to
/// rows of `x` and entries of `y`.
fn fit_and_score(x: &RealMatrix, y: &[f64], train: &[usize], test: &[usize], spec: &ReadoutSpec) -> Result<Scores> {
    let pick = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<f64>>();
    let (y_train, y_test) = (pick(train), pick(test));
    let x_train = x.select_rows(train);
    let model = readout::fit(&x_train, &RealMatrix::column_vector(&y_train), spec)?;
    let fit_train = readout::predict(&model, &x_train)?.column(0);
    let predictions = readout::predict(&model, &x.select_rows(test))?.column(0);
    Ok(Scores {
        pearson_train: pearson(&fit_train, &y_train)?,
        pearson_test: pearson(&predictions, &y_test)?,
        predictions,
    })
}

fn leading_columns(x: &RealMatrix, cols: usize) -> Result<RealMatrix> {
    if cols == x.cols() {
        return Ok(x.clone());
    }
    let data = (0..x.rows()).flat_map(|r| x.row(r)[..cols].iter().copied()).collect();
    RealMatrix::from_vec(x.rows(), cols, data)
}

/// Driving signal for the open-loop tasks.
pub fn task_input(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    match cfg.task {
        Task::Cosine | Task::Scan => Ok(cfg.cosine.series(cfg.chain.sample_dt)?.values),
        Task::MackeyGlass => {
            let values = cfg.mackey_glass.series()?.values;
            if !cfg.mackey_glass.rescale {
                return Ok(values);
            }
            let scale = MinMaxScale::fit(&values);
            Ok(values.iter().map(|&v| scale.forward(v)).collect())
        }
        Task::Interpolation => Ok(cfg.interpolation.series()?.values),
        Task::Spectra | Task::MeasureStats => Err(QrcError::Argument(format!(
            "task {} has no driving signal",
            cfg.task.name()
        ))),
    }
}

/// Single-step (or `horizon`-step) open-loop prediction on the cosine or
/// Mackey-Glass signal. The true signal drives the chain throughout.
pub fn run_open_loop(config: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    let cfg = config.resolved();
    cfg.validate()?;
    if !matches!(cfg.task, Task::Cosine | Task::MackeyGlass) {
        return Err(QrcError::Argument(format!(
            "open-loop runs need task cosine or mackey_glass, got {}",
            cfg.task.name()
        )));
    }
    let input = task_input(&cfg)?;
    let pairs = open_loop_pairs(&input, cfg.horizon, cfg.washout)?;
    let chain = prepared_chain(&cfg.chain, &input, cfg.max_phase);
    let features = reservoir_features(&cfg, &chain, &input)?.select_rows(&pairs.rows);
    let (train, test) = tasks::split(pairs.rows.len(), &cfg.split)?;
    let scores = fit_and_score(&features, &pairs.targets, &train, &test, &cfg.readout)?;
    log::info!(
        "{}: pearson train {:.6} test {:.6} ({} substeps/sample)",
        cfg.task.name(),
        scores.pearson_train,
        scores.pearson_test,
        chain.substeps
    );
    Ok(RunReport {
        task: cfg.task,
        seeds: cfg.seeds(),
        horizon: cfg.horizon,
        washout: cfg.washout,
        substeps: chain.substeps,
        n_train: train.len(),
        n_test: test.len(),
        pearson_train: scores.pearson_train,
        pearson_test: scores.pearson_test,
        test_indices: test.iter().map(|&i| pairs.target_index[i]).collect(),
        predictions: scores.predictions,
        targets: test.iter().map(|&i| pairs.targets[i]).collect(),
        wall_time_s: cfg.record_timing.then(|| start.elapsed().as_secs_f64()),
        config: cfg,
    })
}

/// Open-loop run on the subsampled Mackey-Glass series.
pub fn run_mackey_glass(config: &ExperimentConfig) -> Result<RunReport> {
    let cfg = ExperimentConfig {
        task: Task::MackeyGlass,
        ..config.clone()
    };
    run_open_loop(&cfg)
}

/// Converts a horizon in periods to a sample offset of at least one.
pub fn horizon_samples(fraction: f64, samples_per_period: usize) -> usize {
    ((fraction * samples_per_period as f64).round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    /// Grid value as written in the config.
    pub coupling_grid: f64,
    /// Coupling actually used.
    pub coupling: f64,
    pub state_dim: usize,
    pub horizon_fraction: f64,
    pub horizon_samples: usize,
    pub pearson_train: Option<f64>,
    pub pearson_test: Option<f64>,
    /// `ok`, or the error category followed by its message.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub seeds: SeedProvenance,
    pub rows: Vec<ScanRow>,
    pub wall_time_s: Option<f64>,
    pub config: ExperimentConfig,
}

impl ScanReport {
    /// Median test correlation over all successful cells at one horizon.
    pub fn median_test(&self, horizon_fraction: f64) -> Option<f64> {
        let mut v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.horizon_fraction == horizon_fraction)
            .filter_map(|r| r.pearson_test)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "coupling_grid,coupling,state_dim,horizon_fraction,horizon_samples,pearson_train,pearson_test,status\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.coupling_grid,
                r.coupling,
                r.state_dim,
                r.horizon_fraction,
                r.horizon_samples,
                opt(r.pearson_train),
                opt(r.pearson_test),
                csv_field(&r.status)
            ));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn status_of(e: &QrcError) -> String {
    format!("{}: {e}", e.category())
}

/// Cosine open-loop prediction over the coupling x state size x horizon
/// grid. One trajectory is evolved per coupling and the widest feature
/// matrix is sliced for the smaller state sizes: observable `i` depends only
/// on the feature seed and `i`, so every cell equals a standalone run with
/// the same seeds.
pub fn run_scan(config: &ExperimentConfig) -> Result<ScanReport> {
    let start = Instant::now();
    let mut cfg = config.resolved();
    cfg.task = Task::Scan;
    cfg.validate()?;
    let input = cfg.cosine.series(cfg.chain.sample_dt)?.values;
    let spp = cfg.cosine.samples_per_period;
    let widest = *cfg.scan.feature_counts.iter().max().expect("validated nonempty");
    let factor = if cfg.scan.couplings_times_pi { PI } else { 1.0 };

    let per_coupling: Vec<Vec<ScanRow>> = cfg
        .scan
        .couplings
        .par_iter()
        .map(|&grid| {
            let coupling = grid * factor;
            let chain = prepared_chain(
                &ChainConfig {
                    coupling,
                    ..cfg.chain.clone()
                },
                &input,
                cfg.max_phase,
            );
            let wide_cfg = ExperimentConfig {
                features: FeatureConfig {
                    n_features: widest,
                    ..cfg.features.clone()
                },
                ..cfg.clone()
            };
            let features = reservoir_features(&wide_cfg, &chain, &input);
            let cells: Vec<(usize, f64)> = cfg
                .scan
                .feature_counts
                .iter()
                .flat_map(|&f| cfg.scan.horizon_fractions.iter().map(move |&h| (f, h)))
                .collect();
            cells
                .par_iter()
                .map(|&(state_dim, fraction)| {
                    let horizon = horizon_samples(fraction, spp);
                    let outcome = features.as_ref().map_err(status_of).and_then(|x| {
                        scan_cell(x, &input, state_dim, horizon, &cfg).map_err(|e| status_of(&e))
                    });
                    let (pearson_train, pearson_test, status) = match outcome {
                        Ok(s) => (Some(s.pearson_train), Some(s.pearson_test), "ok".to_string()),
                        Err(status) => (None, None, status),
                    };
                    ScanRow {
                        coupling_grid: grid,
                        coupling,
                        state_dim,
                        horizon_fraction: fraction,
                        horizon_samples: horizon,
                        pearson_train,
                        pearson_test,
                        status,
                    }
                })
                .collect()
        })
        .collect();
    let rows: Vec<ScanRow> = per_coupling.into_iter().flatten().collect();
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        log::warn!("scan: {failed} of {} cells failed", rows.len());
    }
    Ok(ScanReport {
        seeds: cfg.seeds(),
        rows,
        wall_time_s: cfg.record_timing.then(|| start.elapsed().as_secs_f64()),
        config: cfg,
    })
}

fn scan_cell(wide: &RealMatrix, input: &[f64], state_dim: usize, horizon: usize, cfg: &ExperimentConfig) -> Result<Scores> {
    let pairs = open_loop_pairs(input, horizon, cfg.washout)?;
    let x = leading_columns(wide, state_dim)?.select_rows(&pairs.rows);
    let (train, test) = tasks::split(pairs.rows.len(), &cfg.split)?;
    fit_and_score(&x, &pairs.targets, &train, &test, &cfg.readout)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationRow {
    pub train_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub reservoir_pearson_train: Option<f64>,
    pub reservoir_pearson_test: Option<f64>,
    /// Reservoir score restricted to the points the splines can evaluate.
    pub reservoir_pearson_common: Option<f64>,
    pub spline_pearson_test: Option<f64>,
    pub hermite_pearson_test: Option<f64>,
    /// Test points outside the training time range, left out of the
    /// baseline comparison.
    pub baseline_excluded: usize,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub run: RunReport,
    pub sweep: Vec<InterpolationRow>,
}

impl InterpolationReport {
    pub fn sweep_csv(&self) -> String {
        let mut out = String::from(
            "train_fraction,n_train,n_test,reservoir_pearson_train,reservoir_pearson_test,\
             reservoir_pearson_common,spline_pearson_test,hermite_pearson_test,baseline_excluded,status\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.sweep {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.train_fraction,
                r.n_train,
                r.n_test,
                opt(r.reservoir_pearson_train),
                opt(r.reservoir_pearson_test),
                opt(r.reservoir_pearson_common),
                opt(r.spline_pearson_test),
                opt(r.hermite_pearson_test),
                r.baseline_excluded,
                csv_field(&r.status)
            ));
        }
        out
    }
}

struct InterpolationOutcome {
    train: Vec<usize>,
    test: Vec<usize>,
    scores: Scores,
    row: InterpolationRow,
}

fn interpolation_at(
    cfg: &ExperimentConfig,
    features: &RealMatrix,
    pairs: &Pairs,
    series: &TimeSeries,
    fraction: f64,
) -> Result<InterpolationOutcome> {
    let plan = SplitPlan {
        train_fraction: fraction,
        ..cfg.split.clone()
    };
    let (train, test) = tasks::split(pairs.rows.len(), &plan)?;
    let scores = fit_and_score(features, &pairs.targets, &train, &test, &cfg.readout)?;

    let time_of = |i: usize| series.times[pairs.target_index[i]];
    let knots = TimeSeries::new(
        train.iter().map(|&i| time_of(i)).collect(),
        train.iter().map(|&i| pairs.targets[i]).collect(),
    )?;
    let (lo, hi) = (knots.times[0], knots.times[knots.len() - 1]);
    let inside: Vec<usize> = (0..test.len())
        .filter(|&j| (lo..=hi).contains(&time_of(test[j])))
        .collect();
    let query: Vec<f64> = inside.iter().map(|&j| time_of(test[j])).collect();
    let truth: Vec<f64> = inside.iter().map(|&j| pairs.targets[test[j]]).collect();
    let common: Vec<f64> = inside.iter().map(|&j| scores.predictions[j]).collect();
    let spline = cubic_spline_interpolate(&knots, &query)?;
    let hermite = cubic_hermite_interpolate(&knots, &query)?;
    let row = InterpolationRow {
        train_fraction: fraction,
        n_train: train.len(),
        n_test: test.len(),
        reservoir_pearson_train: Some(scores.pearson_train),
        reservoir_pearson_test: Some(scores.pearson_test),
        reservoir_pearson_common: pearson(&common, &truth).ok(),
        spline_pearson_test: pearson(&spline, &truth).ok(),
        hermite_pearson_test: pearson(&hermite, &truth).ok(),
        baseline_excluded: test.len() - inside.len(),
        status: "ok".into(),
    };
    Ok(InterpolationOutcome {
        train,
        test,
        scores,
        row,
    })
}

/// Shuffled-split interpolation: the chain is driven by the time-ordered
/// series, pairs `(features_k, u[k + horizon])` are split at random, and the
/// readout is compared with natural and monotone cubic splines through the
/// training targets. The headline run uses `split.train_fraction`; the
/// sweep covers `interpolation.fractions`.
pub fn run_interpolation(config: &ExperimentConfig) -> Result<InterpolationReport> {
    let start = Instant::now();
    let mut cfg = config.resolved();
    cfg.task = Task::Interpolation;
    cfg.validate()?;
    let series = cfg.interpolation.series()?;
    let input = series.values.clone();
    let pairs = open_loop_pairs(&input, cfg.horizon, cfg.washout)?;
    let chain = prepared_chain(&cfg.chain, &input, cfg.max_phase);
    let features = reservoir_features(&cfg, &chain, &input)?.select_rows(&pairs.rows);

    let main = interpolation_at(&cfg, &features, &pairs, &series, cfg.split.train_fraction)?;
    let sweep = cfg
        .interpolation
        .fractions
        .par_iter()
        .map(|&f| match interpolation_at(&cfg, &features, &pairs, &series, f) {
            Ok(out) => out.row,
            Err(e) => InterpolationRow {
                train_fraction: f,
                n_train: 0,
                n_test: 0,
                reservoir_pearson_train: None,
                reservoir_pearson_test: None,
                reservoir_pearson_common: None,
                spline_pearson_test: None,
                hermite_pearson_test: None,
                baseline_excluded: 0,
                status: status_of(&e),
            },
        })
        .collect();
    log::info!(
        "interpolation: pearson test {:.6} at fraction {}",
        main.scores.pearson_test,
        cfg.split.train_fraction
    );
    let run = RunReport {
        task: Task::Interpolation,
        seeds: cfg.seeds(),
        horizon: cfg.horizon,
        washout: cfg.washout,
        substeps: chain.substeps,
        n_train: main.train.len(),
        n_test: main.test.len(),
        pearson_train: main.scores.pearson_train,
        pearson_test: main.scores.pearson_test,
        test_indices: main.test.iter().map(|&i| pairs.target_index[i]).collect(),
        predictions: main.scores.predictions,
        targets: main.test.iter().map(|&i| pairs.targets[i]).collect(),
        wall_time_s: cfg.record_timing.then(|| start.elapsed().as_secs_f64()),
        config: cfg,
    };
    Ok(InterpolationReport { run, sweep })
}

pub fn run_spectra(config: &ExperimentConfig) -> Result<SpectrumTable> {
    let cfg = config.resolved();
    let s = &cfg.spectra;
    spectrum_study(&s.dims, &s.densities, s.samples, s.seed)
}

pub fn run_measure_stats(config: &ExperimentConfig) -> Result<MeasurementTable> {
    measurement_statistics_study(&config.resolved().measure_stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Anything the CLI can write.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Report {
    Run(RunReport),
    Scan(ScanReport),
    Interpolation(InterpolationReport),
    Spectra(SpectrumTable),
    MeasureStats(MeasurementTable),
    Series(TimeSeries),
}

impl Report {
    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(self).map_err(|e| QrcError::Data(e.to_string()))?;
                s.push('\n');
                Ok(s)
            }
            Format::Csv => Ok(match self {
                Report::Run(r) => r.to_csv(),
                Report::Scan(r) => r.to_csv(),
                Report::Interpolation(r) => r.sweep_csv(),
                Report::Spectra(t) => t.to_csv(),
                Report::MeasureStats(t) => t.to_csv(),
                Report::Series(s) => s.to_csv(),
            }),
        }
    }
}

pub fn emit_report(report: &Report, path: &Path, format: Format) -> Result<()> {
    std::fs::write(path, report.render(format)?).map_err(|e| QrcError::io(path, e))
}
