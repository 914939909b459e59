//! Trainable readouts: ridge regression and a one-hidden-layer ReLU network,
//! both on standardized features, plus the Pearson correlation used to score
//! predictions.

use faer::{Mat, Side};
use faer::linalg::solvers::Solve;
use serde::{Deserialize, Serialize};

use crate::error::{QrcError, Result};
use crate::linalg::RealMatrix;
use crate::rng::SplitMix64;

/// Lower bound applied to per-feature standard deviations.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutSpec {
    pub kind: ReadoutKind,
    /// Ridge penalty `lambda` (linear kind).
    pub ridge: f64,
    pub hidden_width: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub init_seed: u64,
    pub standardize: bool,
    pub fit_intercept: bool,
}

impl Default for ReadoutSpec {
    fn default() -> Self {
        Self {
            kind: ReadoutKind::Linear,
            ridge: 1e-6,
            hidden_width: 64,
            learning_rate: 1e-3,
            epochs: 2000,
            init_seed: 0,
            standardize: true,
            fit_intercept: true,
        }
    }
}

impl ReadoutSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(QrcError::Argument(format!("ridge must be >= 0, got {}", self.ridge)));
        }
        if self.kind == ReadoutKind::Mlp {
            if self.hidden_width == 0 {
                return Err(QrcError::Argument("hidden_width must be at least 1".into()));
            }
            if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
                return Err(QrcError::Argument("learning_rate must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Per-feature affine map to zero mean and unit variance. Columns whose
/// spread is below [`STD_FLOOR`] map to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &RealMatrix) -> Self {
        let n = x.rows() as f64;
        let cols = x.cols();
        let mut mean = vec![0.0; cols];
        for r in 0..x.rows() {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; cols];
        for r in 0..x.rows() {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Self { mean, std }
    }

    pub fn identity(cols: usize) -> Self {
        Self {
            mean: vec![0.0; cols],
            std: vec![1.0; cols],
        }
    }

    pub fn is_constant(&self, col: usize) -> bool {
        self.std[col] <= STD_FLOOR
    }

    pub fn transform(&self, x: &RealMatrix) -> RealMatrix {
        let mut out = RealMatrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            for c in 0..x.cols() {
                let v = if self.is_constant(c) {
                    0.0
                } else {
                    (x.get(r, c) - self.mean[c]) / self.std[c]
                };
                out.set(r, c, v);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReadoutWeights {
    Linear {
        /// `input_dim x output_dim`.
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    Mlp(MlpWeights),
}

/// `y = W2 relu(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    /// `hidden x input`.
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    /// `output x hidden`.
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub input_dim: usize,
    pub output_dim: usize,
    pub spec: ReadoutSpec,
    pub standardizer: Standardizer,
    pub weights: ReadoutWeights,
}

impl ReadoutModel {
    pub fn kind(&self) -> ReadoutKind {
        match self.weights {
            ReadoutWeights::Linear { .. } => ReadoutKind::Linear,
            ReadoutWeights::Mlp(_) => ReadoutKind::Mlp,
        }
    }

    /// Standardized features, with the constant column appended when the
    /// model fits an intercept. This is the matrix the ridge system is built on.
    pub fn design_matrix(&self, features: &RealMatrix) -> RealMatrix {
        design(&self.standardizer.transform(features), self.spec.fit_intercept)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| QrcError::Data(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| QrcError::Data(format!("invalid model JSON: {e}")))
    }
}

fn design(z: &RealMatrix, intercept: bool) -> RealMatrix {
    if !intercept {
        return z.clone();
    }
    let cols = z.cols() + 1;
    let mut data = Vec::with_capacity(z.rows() * cols);
    for r in 0..z.rows() {
        data.extend_from_slice(z.row(r));
        data.push(1.0);
    }
    RealMatrix::from_vec(z.rows(), cols, data).expect("consistent shape")
}

/// `(X^T X + lambda I, X^T Y)` accumulated row by row in a fixed order.
pub fn normal_equations(x: &RealMatrix, y: &RealMatrix, lambda: f64) -> (Mat<f64>, Mat<f64>) {
    let p = x.cols();
    let o = y.cols();
    let mut a = Mat::<f64>::zeros(p, p);
    let mut b = Mat::<f64>::zeros(p, o);
    for r in 0..x.rows() {
        let row = x.row(r);
        for i in 0..p {
            let xi = row[i];
            if xi == 0.0 {
                continue;
            }
            for j in i..p {
                a[(i, j)] += xi * row[j];
            }
            for k in 0..o {
                b[(i, k)] += xi * y.get(r, k);
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
        a[(i, i)] += lambda;
    }
    (a, b)
}

pub fn fit(features: &RealMatrix, targets: &RealMatrix, spec: &ReadoutSpec) -> Result<ReadoutModel> {
    spec.validate()?;
    if features.rows() != targets.rows() {
        return Err(QrcError::Shape(format!(
            "{} feature rows but {} target rows",
            features.rows(),
            targets.rows()
        )));
    }
    if features.rows() == 0 || features.cols() == 0 || targets.cols() == 0 {
        return Err(QrcError::Shape("readout needs at least one row, feature and target".into()));
    }
    if !features.is_finite() || !targets.is_finite() {
        return Err(QrcError::Data("features or targets contain NaN or infinity".into()));
    }
    let standardizer = if spec.standardize {
        Standardizer::fit(features)
    } else {
        Standardizer::identity(features.cols())
    };
    let z = standardizer.transform(features);
    let weights = match spec.kind {
        ReadoutKind::Linear => fit_ridge(&z, targets, spec, &standardizer)?,
        ReadoutKind::Mlp => ReadoutWeights::Mlp(train_mlp(&z, targets, spec)),
    };
    Ok(ReadoutModel {
        input_dim: features.cols(),
        output_dim: targets.cols(),
        spec: spec.clone(),
        standardizer,
        weights,
    })
}

fn fit_ridge(
    z: &RealMatrix,
    targets: &RealMatrix,
    spec: &ReadoutSpec,
    standardizer: &Standardizer,
) -> Result<ReadoutWeights> {
    if spec.ridge == 0.0 {
        if let Some(c) = (0..z.cols()).find(|&c| standardizer.is_constant(c) || z.column(c).iter().all(|&v| v == 0.0)) {
            return Err(QrcError::Singular(format!(
                "feature {c} is constant, so the unregularized normal equations are singular; use ridge > 0"
            )));
        }
    }
    let x = design(z, spec.fit_intercept);
    let (a, mut b) = normal_equations(&x, targets, spec.ridge);
    crate::linalg::sequential_faer();
    let llt = a.llt(Side::Lower).map_err(|e| {
        QrcError::Singular(format!("normal equations are not positive definite ({e:?}); use ridge > 0"))
    })?;
    llt.solve_in_place(b.as_mut());
    if (0..b.nrows()).any(|i| (0..b.ncols()).any(|k| !b[(i, k)].is_finite())) {
        return Err(QrcError::Singular("ridge solution is not finite; use ridge > 0".into()));
    }
    let f = z.cols();
    let weights = (0..f).map(|i| (0..b.ncols()).map(|k| b[(i, k)]).collect()).collect();
    let bias = if spec.fit_intercept {
        (0..b.ncols()).map(|k| b[(f, k)]).collect()
    } else {
        vec![0.0; b.ncols()]
    };
    Ok(ReadoutWeights::Linear { weights, bias })
}

/// Glorot-uniform weights and zero biases.
pub fn init_mlp(inputs: usize, hidden: usize, outputs: usize, seed: u64) -> MlpWeights {
    let mut rng = SplitMix64::new(seed);
    let mut layer = |rows: usize, cols: usize| -> Vec<Vec<f64>> {
        let scale = (6.0 / (rows + cols) as f64).sqrt();
        (0..rows)
            .map(|_| (0..cols).map(|_| scale * rng.uniform_signed()).collect())
            .collect()
    };
    let w1 = layer(hidden, inputs);
    let w2 = layer(outputs, hidden);
    MlpWeights {
        w1,
        b1: vec![0.0; hidden],
        w2,
        b2: vec![0.0; outputs],
    }
}

fn mlp_forward(w: &MlpWeights, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let pre: Vec<f64> = w
        .w1
        .iter()
        .zip(&w.b1)
        .map(|(row, b)| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b)
        .collect();
    let act: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
    let out = w
        .w2
        .iter()
        .zip(&w.b2)
        .map(|(row, b)| row.iter().zip(&act).map(|(a, h)| a * h).sum::<f64>() + b)
        .collect();
    (pre, out)
}

/// Mean squared error over all samples and outputs, and its gradient.
pub fn mlp_loss_and_grad(w: &MlpWeights, x: &RealMatrix, y: &RealMatrix) -> (f64, MlpWeights) {
    let hidden = w.b1.len();
    let outputs = w.b2.len();
    let scale = 1.0 / (x.rows() * outputs) as f64;
    let mut grad = MlpWeights {
        w1: vec![vec![0.0; x.cols()]; hidden],
        b1: vec![0.0; hidden],
        w2: vec![vec![0.0; hidden]; outputs],
        b2: vec![0.0; outputs],
    };
    let mut loss = 0.0;
    for r in 0..x.rows() {
        let xr = x.row(r);
        let (pre, out) = mlp_forward(w, xr);
        let mut d_act = vec![0.0; hidden];
        for k in 0..outputs {
            let err = out[k] - y.get(r, k);
            loss += err * err * scale;
            let d_out = 2.0 * err * scale;
            grad.b2[k] += d_out;
            for h in 0..hidden {
                grad.w2[k][h] += d_out * pre[h].max(0.0);
                d_act[h] += d_out * w.w2[k][h];
            }
        }
        for h in 0..hidden {
            if pre[h] <= 0.0 {
                continue;
            }
            grad.b1[h] += d_act[h];
            for (g, v) in grad.w1[h].iter_mut().zip(xr) {
                *g += d_act[h] * v;
            }
        }
    }
    (loss, grad)
}

fn train_mlp(z: &RealMatrix, y: &RealMatrix, spec: &ReadoutSpec) -> MlpWeights {
    let mut w = init_mlp(z.cols(), spec.hidden_width, y.cols(), spec.init_seed);
    let lr = spec.learning_rate;
    for _ in 0..spec.epochs {
        let (_, g) = mlp_loss_and_grad(&w, z, y);
        for (row, grow) in w.w1.iter_mut().zip(&g.w1) {
            row.iter_mut().zip(grow).for_each(|(a, d)| *a -= lr * d);
        }
        w.b1.iter_mut().zip(&g.b1).for_each(|(a, d)| *a -= lr * d);
        for (row, grow) in w.w2.iter_mut().zip(&g.w2) {
            row.iter_mut().zip(grow).for_each(|(a, d)| *a -= lr * d);
        }
        w.b2.iter_mut().zip(&g.b2).for_each(|(a, d)| *a -= lr * d);
    }
    w
}

pub fn predict(model: &ReadoutModel, features: &RealMatrix) -> Result<RealMatrix> {
    if features.cols() != model.input_dim {
        return Err(QrcError::Shape(format!(
            "model expects {} features, got {}",
            model.input_dim,
            features.cols()
        )));
    }
    let z = model.standardizer.transform(features);
    let mut out = RealMatrix::zeros(z.rows(), model.output_dim);
    match &model.weights {
        ReadoutWeights::Linear { weights, bias } => {
            for r in 0..z.rows() {
                for k in 0..model.output_dim {
                    let v: f64 = z.row(r).iter().zip(weights).map(|(x, w)| x * w[k]).sum();
                    out.set(r, k, v + bias[k]);
                }
            }
        }
        ReadoutWeights::Mlp(w) => {
            for r in 0..z.rows() {
                let (_, y) = mlp_forward(w, z.row(r));
                for (k, v) in y.into_iter().enumerate() {
                    out.set(r, k, v);
                }
            }
        }
    }
    Ok(out)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(QrcError::Shape(format!("series lengths {} and {} differ", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(QrcError::UndefinedCorrelation("need at least two points".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(QrcError::UndefinedCorrelation("a series has zero variance".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}
