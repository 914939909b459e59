//! Benchmark signals, price ingestion, train/test splitting and the spline
//! baselines used for interpolation comparisons.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{QrcError, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(QrcError::Shape(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(QrcError::Argument("times must be strictly increasing".into()));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(QrcError::Numerical("series contains non-finite values".into()));
        }
        Ok(Self { times, values })
    }

    /// Series with times `0, 1, 2, ...`.
    pub fn indexed(values: Vec<f64>) -> Result<Self> {
        Self::new((0..values.len()).map(|k| k as f64).collect(), values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Two-column CSV `t,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }
}

pub fn gen_cosine(amplitude: f64, period: f64, n: usize, dt: f64) -> Result<TimeSeries> {
    if !(period > 0.0 && dt > 0.0) || n == 0 {
        return Err(QrcError::Argument("cosine needs period > 0, dt > 0 and n >= 1".into()));
    }
    let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let values = times
        .iter()
        .map(|t| amplitude * (std::f64::consts::TAU * t / period).cos())
        .collect();
    TimeSeries::new(times, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MackeyGlass {
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub n_exp: f64,
    pub dt: f64,
    /// Integration steps; the raw series has `n_steps + 1` points.
    pub n_steps: usize,
    /// Constant value on `t <= 0`.
    pub history_value: f64,
    /// Leading points dropped from the output.
    pub discard: usize,
}

impl Default for MackeyGlass {
    fn default() -> Self {
        Self {
            beta: 0.2,
            gamma: 0.1,
            tau: 17.0,
            n_exp: 10.0,
            dt: 0.1,
            n_steps: 22_000,
            history_value: 1.2,
            discard: 2000,
        }
    }
}

impl MackeyGlass {
    fn rate(&self, x: f64, delayed: f64) -> f64 {
        self.beta * delayed / (1.0 + delayed.powf(self.n_exp)) - self.gamma * x
    }
}

/// Integrates `dx/dt = beta x(t - tau) / (1 + x(t - tau)^n) - gamma x(t)`
/// with classical RK4. Delayed values come from linear interpolation in the
/// stored solution; when the delayed time falls inside the current step the
/// interpolation runs between the step start and the current stage value.
pub fn gen_mackey_glass(p: &MackeyGlass) -> Result<TimeSeries> {
    if !(p.dt > 0.0) || !(p.tau >= 0.0) || !p.tau.is_finite() {
        return Err(QrcError::Argument("Mackey-Glass needs dt > 0 and finite tau >= 0".into()));
    }
    if p.discard > p.n_steps {
        return Err(QrcError::Argument("discard exceeds the number of steps".into()));
    }
    let h = p.dt;
    let mut xs = Vec::with_capacity(p.n_steps + 1);
    xs.push(p.history_value);

    let delayed = |xs: &[f64], n: usize, offset: f64, stage: f64| -> f64 {
        // Delayed time measured in steps from t = 0.
        let pos = n as f64 + (offset - p.tau) / h;
        if pos <= 0.0 {
            return p.history_value;
        }
        if pos <= n as f64 {
            let k = (pos.floor() as usize).min(n);
            if k == n {
                return xs[n];
            }
            let frac = pos - k as f64;
            return xs[k] + frac * (xs[k + 1] - xs[k]);
        }
        // tau < offset: between the step start and the stage point.
        let frac = (pos - n as f64) * h / offset;
        xs[n] + frac * (stage - xs[n])
    };

    for n in 0..p.n_steps {
        let x = xs[n];
        let k1 = p.rate(x, delayed(&xs, n, 0.0, x));
        let s2 = x + 0.5 * h * k1;
        let k2 = p.rate(s2, delayed(&xs, n, 0.5 * h, s2));
        let s3 = x + 0.5 * h * k2;
        let k3 = p.rate(s3, delayed(&xs, n, 0.5 * h, s3));
        let s4 = x + h * k3;
        let k4 = p.rate(s4, delayed(&xs, n, h, s4));
        let next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !next.is_finite() {
            return Err(QrcError::Numerical(format!("Mackey-Glass state diverged at step {n}")));
        }
        xs.push(next);
    }
    let times = (p.discard..=p.n_steps).map(|k| k as f64 * h).collect();
    TimeSeries::new(times, xs.split_off(p.discard))
}

/// Keeps points `0, stride, 2 stride, ...`.
pub fn subsample(series: &TimeSeries, stride: usize) -> Result<TimeSeries> {
    if stride == 0 {
        return Err(QrcError::Argument("stride must be at least 1".into()));
    }
    Ok(TimeSeries {
        times: series.times.iter().step_by(stride).copied().collect(),
        values: series.values.iter().step_by(stride).copied().collect(),
    })
}

/// Affine map of `[lo, hi]` onto `[-1, 1]`. A degenerate range maps to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScale {
    pub lo: f64,
    pub hi: f64,
}

impl MinMaxScale {
    pub fn fit(values: &[f64]) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { lo, hi }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.hi > self.lo)
    }

    pub fn forward(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            2.0 * (x - self.lo) / (self.hi - self.lo) - 1.0
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        if self.is_degenerate() {
            self.lo
        } else {
            self.lo + (y + 1.0) * 0.5 * (self.hi - self.lo)
        }
    }
}

/// Price series rescaled to `[-1, 1]`, with the scale kept for inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub series: TimeSeries,
    pub scale: MinMaxScale,
    pub dates: Vec<String>,
}

impl PriceSeries {
    pub fn closes(&self) -> Vec<f64> {
        self.series.values.iter().map(|&y| self.scale.inverse(y)).collect()
    }
}

fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return false;
    }
    let digits = |r: std::ops::Range<usize>| -> Option<u32> {
        let part = &s[r];
        part.bytes().all(|c| c.is_ascii_digit()).then(|| part.parse().ok()).flatten()
    };
    matches!(
        (digits(0..4), digits(5..7), digits(8..10)),
        (Some(_), Some(1..=12), Some(1..=31))
    )
}

/// Reads a `date,close` CSV. Times are trading-day indices in file order.
pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| QrcError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| QrcError::DataFormat { row: 1, detail: e.to_string() })?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| QrcError::DataFormat {
                row: 1,
                detail: format!("missing `{name}` column"),
            })
    };
    let (date_col, close_col) = (column("date")?, column("close")?);

    let mut dates = Vec::new();
    let mut closes = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| QrcError::DataFormat { row, detail: e.to_string() })?;
        let field = |c: usize| {
            record.get(c).ok_or_else(|| QrcError::DataFormat {
                row,
                detail: "missing field".into(),
            })
        };
        let date = field(date_col)?;
        if !is_iso_date(date) {
            return Err(QrcError::DataFormat {
                row,
                detail: format!("`{date}` is not an ISO-8601 date"),
            });
        }
        let close: f64 = field(close_col)?.parse().map_err(|_| QrcError::DataFormat {
            row,
            detail: format!("unparseable close `{}`", record.get(close_col).unwrap_or("")),
        })?;
        if !close.is_finite() || close <= 0.0 {
            return Err(QrcError::Data(format!("row {row}: close price must be positive, got {close}")));
        }
        dates.push(date.to_string());
        closes.push(close);
    }
    if closes.is_empty() {
        return Err(QrcError::Data(format!("{} has no price rows", path.display())));
    }
    let scale = MinMaxScale::fit(&closes);
    if scale.is_degenerate() {
        log::warn!("{}: constant price series, rescaled values are all zero", path.display());
    }
    let values = closes.iter().map(|&c| scale.forward(c)).collect();
    Ok(PriceSeries {
        series: TimeSeries::indexed(values)?,
        scale,
        dates,
    })
}

/// Cumulative sum of Gaussian steps starting at zero, rescaled to `[-1, 1]`.
pub fn gen_random_walk(n: usize, step_std: f64, seed: u64) -> Result<TimeSeries> {
    if n < 2 {
        return Err(QrcError::Argument("random walk needs at least two points".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let mut raw = Vec::with_capacity(n);
    raw.push(0.0);
    for k in 1..n {
        raw.push(raw[k - 1] + step_std * rng.gaussian());
    }
    let scale = MinMaxScale::fit(&raw);
    TimeSeries::indexed(raw.into_iter().map(|v| scale.forward(v)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Contiguous,
    Shuffled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            kind: SplitKind::Contiguous,
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

/// Train/test index sets, each in ascending order. The cut is
/// `floor(train_fraction * n_items)` with a `1e-9` allowance for
/// representation error in the fraction.
pub fn split(n_items: usize, plan: &SplitPlan) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_items < 2 {
        return Err(QrcError::Argument("split needs at least two items".into()));
    }
    if !(plan.train_fraction > 0.0 && plan.train_fraction < 1.0) {
        return Err(QrcError::Argument(format!(
            "train_fraction must lie in (0, 1), got {}",
            plan.train_fraction
        )));
    }
    let cut = (plan.train_fraction * n_items as f64 + 1e-9).floor() as usize;
    if cut == 0 || cut >= n_items {
        return Err(QrcError::Argument(format!(
            "train fraction {} of {n_items} items leaves one side empty",
            plan.train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n_items).collect();
    if plan.kind == SplitKind::Shuffled {
        SplitMix64::new(plan.seed).shuffle(&mut order);
    }
    let mut test = order.split_off(cut);
    let mut train = order;
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn check_knots(train: &TimeSeries) -> Result<()> {
    if train.len() < 3 {
        return Err(QrcError::Argument("spline needs at least three knots".into()));
    }
    if train.times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(QrcError::Argument("knot times must be strictly increasing".into()));
    }
    Ok(())
}

/// Interval index for `x`, with the left knot at or below `x`.
fn locate(knots: &[f64], x: f64) -> Result<usize> {
    let (lo, hi) = (knots[0], knots[knots.len() - 1]);
    if !(x >= lo && x <= hi) {
        return Err(QrcError::Range(format!("query {x} outside knot range [{lo}, {hi}]")));
    }
    Ok(knots.partition_point(|&k| k <= x).saturating_sub(1).min(knots.len() - 2))
}

/// Piecewise cubic `y_i + b dx + c dx^2 + d dx^3` on each knot interval.
struct PiecewiseCubic<'a> {
    knots: &'a [f64],
    values: &'a [f64],
    coeffs: Vec<[f64; 3]>,
}

impl PiecewiseCubic<'_> {
    fn eval(&self, x: f64) -> Result<f64> {
        let i = locate(self.knots, x)?;
        if x == self.knots[i + 1] {
            return Ok(self.values[i + 1]);
        }
        let dx = x - self.knots[i];
        let [b, c, d] = self.coeffs[i];
        Ok(self.values[i] + dx * (b + dx * (c + dx * d)))
    }
}

fn natural_spline(train: &TimeSeries) -> Result<PiecewiseCubic<'_>> {
    check_knots(train)?;
    let (x, y) = (&train.times, &train.values);
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    // Second derivatives m[1..n-1] from the tridiagonal system, m[0] = m[n-1] = 0.
    let mut m = vec![0.0; n];
    let inner = n - 2;
    let mut diag = vec![0.0; inner];
    let mut rhs = vec![0.0; inner];
    for k in 0..inner {
        let i = k + 1;
        diag[k] = 2.0 * (h[i - 1] + h[i]);
        rhs[k] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
    }
    // Thomas algorithm; the sub/super diagonal of row k is h[k+1].
    for k in 1..inner {
        let w = h[k] / diag[k - 1];
        diag[k] -= w * h[k];
        rhs[k] -= w * rhs[k - 1];
    }
    for k in (0..inner).rev() {
        let upper = if k + 1 < inner { h[k + 1] * m[k + 2] } else { 0.0 };
        m[k + 1] = (rhs[k] - upper) / diag[k];
    }
    let coeffs = (0..n - 1)
        .map(|i| {
            let b = (y[i + 1] - y[i]) / h[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0;
            [b, 0.5 * m[i], (m[i + 1] - m[i]) / (6.0 * h[i])]
        })
        .collect();
    Ok(PiecewiseCubic {
        knots: x,
        values: y,
        coeffs,
    })
}

fn fritsch_carlson(train: &TimeSeries) -> Result<PiecewiseCubic<'_>> {
    check_knots(train)?;
    let (x, y) = (&train.times, &train.values);
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut t = vec![0.0; n];
    t[0] = delta[0];
    t[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        t[i] = if delta[i - 1] * delta[i] > 0.0 {
            0.5 * (delta[i - 1] + delta[i])
        } else {
            0.0
        };
    }
    for i in 0..n - 1 {
        if delta[i] == 0.0 {
            t[i] = 0.0;
            t[i + 1] = 0.0;
            continue;
        }
        let a = t[i] / delta[i];
        let b = t[i + 1] / delta[i];
        let r = a * a + b * b;
        if r > 9.0 {
            let s = 3.0 / r.sqrt();
            t[i] = s * a * delta[i];
            t[i + 1] = s * b * delta[i];
        }
    }
    let coeffs = (0..n - 1)
        .map(|i| {
            let c = (3.0 * delta[i] - 2.0 * t[i] - t[i + 1]) / h[i];
            let d = (t[i] + t[i + 1] - 2.0 * delta[i]) / (h[i] * h[i]);
            [t[i], c, d]
        })
        .collect();
    Ok(PiecewiseCubic {
        knots: x,
        values: y,
        coeffs,
    })
}

/// Natural cubic spline (zero second derivative at both ends).
pub fn cubic_spline_interpolate(train: &TimeSeries, query_times: &[f64]) -> Result<Vec<f64>> {
    let spline = natural_spline(train)?;
    query_times.iter().map(|&q| spline.eval(q)).collect()
}

/// Monotone piecewise cubic Hermite interpolation with Fritsch-Carlson slopes.
pub fn cubic_hermite_interpolate(train: &TimeSeries, query_times: &[f64]) -> Result<Vec<f64>> {
    let spline = fritsch_carlson(train)?;
    query_times.iter().map(|&q| spline.eval(q)).collect()
}
