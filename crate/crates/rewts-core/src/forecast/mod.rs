//! Forecaster contract and the concrete model families: an elastic-net
//! autoregressive linear model plus naive baselines, all applied recursively
//! for multi-step forecasts.
//!
//! Every fitted model carries the scaler of its training chunk. At forecast
//! time the input history is scaled with the model's own scaler, one-step
//! predictions are fed back as lags, and outputs are inverse-scaled back to
//! original units.

pub mod elastic_net;

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RewtsError};
use crate::timeseries::{fit_scaler, ChunkIndex, Scaler, TimeSeriesFrame};
pub use elastic_net::{fit_elastic_net, ElasticNetFit, ElasticNetParams};

/// Lag embedding layout: which past values become features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagSpec {
    /// Number of lagged target values.
    pub input_length: usize,
    /// Per-covariate lag sets; lag `l` contributes `X[t - l, k]` to the row
    /// labeled `y[t]`.
    #[serde(default)]
    pub covariate_lags: Vec<Vec<usize>>,
    /// Also include the current values `X[t, k]` of future-known covariates.
    #[serde(default)]
    pub use_future_covariates: bool,
}

impl LagSpec {
    /// Pure autoregression on the target.
    pub fn autoregressive(input_length: usize) -> Self {
        Self {
            input_length,
            covariate_lags: vec![],
            use_future_covariates: false,
        }
    }

    pub fn validate(&self, n_covariates: usize) -> Result<()> {
        if self.input_length == 0 {
            return Err(RewtsError::Parameter("input_length must be >= 1".into()));
        }
        if !self.covariate_lags.is_empty() && self.covariate_lags.len() != n_covariates {
            return Err(RewtsError::Shape(format!(
                "covariate_lags has {} entries but the frame has {n_covariates} covariates",
                self.covariate_lags.len()
            )));
        }
        Ok(())
    }

    /// Ticks of history a row needs before its label.
    pub fn warmup(&self) -> usize {
        let max_cov_lag = self
            .covariate_lags
            .iter()
            .flat_map(|lags| lags.iter().copied())
            .max()
            .unwrap_or(0);
        self.input_length.max(max_cov_lag)
    }

    pub fn feature_count(&self, future_known: &[bool]) -> usize {
        let cov: usize = self.covariate_lags.iter().map(|l| l.len()).sum();
        let fut = if self.use_future_covariates {
            future_known.iter().filter(|&&f| f).count()
        } else {
            0
        };
        self.input_length + cov + fut
    }
}

/// Lag-embedded design matrix and one-step targets over `range` of `frame`.
///
/// Row for time `t` holds `[y[t-1..t-L], covariate lags, current
/// future-known covariates]` with label `y[t]`. Rows that would need data
/// from before `range.start` are dropped.
pub fn build_design(
    frame: &TimeSeriesFrame,
    range: ChunkIndex,
    lags: &LagSpec,
) -> Result<(Array2<f64>, Array1<f64>)> {
    lags.validate(frame.n_covariates())?;
    frame.check_range(range.start, range.end)?;
    let warmup = lags.warmup();
    let first = range.start + warmup;
    if first >= range.end {
        return Err(RewtsError::InsufficientData(format!(
            "range of length {} cannot produce design rows with warmup {warmup}",
            range.len()
        )));
    }
    let n_rows = range.end - first;
    let width = lags.feature_count(frame.future_known());
    let target = frame.target();
    let cov = frame.covariates();

    let mut x = Array2::zeros((n_rows, width));
    let mut y = Array1::zeros(n_rows);
    for (row, t) in (first..range.end).enumerate() {
        let mut slot = 0;
        for j in 1..=lags.input_length {
            x[[row, slot]] = target[t - j];
            slot += 1;
        }
        for (k, lag_set) in lags.covariate_lags.iter().enumerate() {
            for &lag in lag_set {
                x[[row, slot]] = cov[[t - lag, k]];
                slot += 1;
            }
        }
        if lags.use_future_covariates {
            for (k, &fut) in frame.future_known().iter().enumerate() {
                if fut {
                    x[[row, slot]] = cov[[t, k]];
                    slot += 1;
                }
            }
        }
        y[row] = target[t];
    }
    Ok((x, y))
}

/// Fitted one-step predictor state; the closed set of model families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForecasterState {
    Linear {
        coefficients: Vec<f64>,
        intercept: f64,
        converged: bool,
    },
    /// Next value equals the last observed target.
    Persistence,
    /// Next value equals the training-label mean, in scaled space.
    HistoricalMean { value: f64 },
}

impl ForecasterState {
    pub fn predict_next(&self, features: &[f64]) -> f64 {
        match self {
            ForecasterState::Linear { coefficients, intercept, .. } => {
                coefficients.iter().zip(features).map(|(c, f)| c * f).sum::<f64>() + intercept
            }
            ForecasterState::Persistence => features[0],
            ForecasterState::HistoricalMean { value } => *value,
        }
    }
}

/// Model family plus its fitting parameters; the extension point for new
/// forecaster families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum ForecasterSpec {
    ElasticNet(ElasticNetParams),
    Persistence,
    HistoricalMean,
}

impl ForecasterSpec {
    /// Fit on a scaled design; returns the state and its free-parameter count.
    pub fn fit(&self, x: ArrayView2<'_, f64>, y: ndarray::ArrayView1<'_, f64>) -> Result<(ForecasterState, usize)> {
        match self {
            ForecasterSpec::ElasticNet(params) => {
                let fit = fit_elastic_net(x, y, params)?;
                let count = fit.coefficients.len() + usize::from(params.fit_intercept);
                Ok((
                    ForecasterState::Linear {
                        coefficients: fit.coefficients.to_vec(),
                        intercept: fit.intercept,
                        converged: fit.converged,
                    },
                    count,
                ))
            }
            ForecasterSpec::Persistence => Ok((ForecasterState::Persistence, 0)),
            ForecasterSpec::HistoricalMean => {
                let value = y.mean().ok_or_else(|| RewtsError::Parameter("empty targets".into()))?;
                Ok((ForecasterState::HistoricalMean { value }, 1))
            }
        }
    }
}

/// A fitted forecaster bundled with its scaler and lag layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedForecaster {
    pub state: ForecasterState,
    pub scaler: Scaler,
    pub lags: LagSpec,
}

/// One forecaster bound to the chunk it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkModel {
    pub forecaster: FittedForecaster,
    pub chunk_id: usize,
    pub param_count: usize,
}

/// Fit scaler and forecaster on one complete chunk.
pub fn fit_chunk_model(
    frame: &TimeSeriesFrame,
    chunk: ChunkIndex,
    lags: &LagSpec,
    spec: &ForecasterSpec,
) -> Result<ChunkModel> {
    let scaler = fit_scaler(frame, chunk)?;
    let scaled = scaled_segment(frame, &scaler, chunk.start, chunk.end)?;
    let local = ChunkIndex { chunk_id: chunk.chunk_id, start: 0, end: scaled.len() };
    let (x, y) = build_design(&scaled, local, lags)?;
    let (state, param_count) = spec.fit(x.view(), y.view())?;
    Ok(ChunkModel {
        forecaster: FittedForecaster {
            state,
            scaler,
            lags: lags.clone(),
        },
        chunk_id: chunk.chunk_id,
        param_count,
    })
}

/// Copy of `frame[start..end)` with every feature scaled.
fn scaled_segment(
    frame: &TimeSeriesFrame,
    scaler: &Scaler,
    start: usize,
    end: usize,
) -> Result<TimeSeriesFrame> {
    let rows = frame.feature_rows(start, end)?;
    let scaled = scaler.apply(rows.view())?;
    let target = scaled.column(0).to_vec();
    let cov = scaled.slice(ndarray::s![.., 1..]).to_owned();
    TimeSeriesFrame::new(start, frame.step(), target, cov, frame.future_known().to_vec())
}

/// Rolling state for one model's recursive forecast from a fixed anchor.
///
/// `next_prediction` builds the feature vector for the next step;
/// `advance` appends a scaled value as the observed feedback. Feeding back
/// the model's own prediction gives the standard recursive forecast; the
/// ensemble driver instead feeds back the weighted combination.
pub(crate) struct Recursion<'a> {
    forecaster: &'a FittedForecaster,
    frame: &'a TimeSeriesFrame,
    anchor: usize,
    future_cov: Option<ArrayView2<'a, f64>>,
    /// Scaled target values for ticks `base..=anchor` plus appended feedback.
    tail: Vec<f64>,
    base: usize,
    steps_taken: usize,
    future_positions: Vec<usize>,
}

impl<'a> Recursion<'a> {
    pub fn new(
        forecaster: &'a FittedForecaster,
        frame: &'a TimeSeriesFrame,
        anchor: usize,
        future_cov: Option<ArrayView2<'a, f64>>,
        horizon: usize,
    ) -> Result<Self> {
        let lags = &forecaster.lags;
        lags.validate(frame.n_covariates())?;
        if anchor >= frame.len() {
            return Err(RewtsError::Index(format!(
                "anchor {anchor} out of bounds for frame of length {}",
                frame.len()
            )));
        }
        let warmup = lags.warmup();
        if anchor + 1 < warmup {
            return Err(RewtsError::InsufficientData(format!(
                "history of length {} is shorter than warmup {warmup}",
                anchor + 1
            )));
        }
        let n_future: Vec<usize> = frame
            .future_known()
            .iter()
            .enumerate()
            .filter_map(|(k, &f)| f.then_some(k))
            .collect();
        if let Some(fc) = &future_cov {
            if fc.nrows() != horizon || fc.ncols() != n_future.len() {
                return Err(RewtsError::Shape(format!(
                    "future covariates must be {horizon} x {}, got {} x {}",
                    n_future.len(),
                    fc.nrows(),
                    fc.ncols()
                )));
            }
        } else if !n_future.is_empty() && (lags.use_future_covariates || horizon > 1) {
            // Tolerated only when no feature ever reads a future covariate;
            // checked lazily in feature construction.
        }
        let base = anchor + 1 - warmup;
        let mut tail = Vec::with_capacity(warmup + horizon);
        for t in base..=anchor {
            tail.push(forecaster.scaler.scale_value(0, frame.target()[t]));
        }
        Ok(Self {
            forecaster,
            frame,
            anchor,
            future_cov,
            tail,
            base,
            steps_taken: 0,
            future_positions: n_future,
        })
    }

    pub fn scale_target(&self, raw: f64) -> f64 {
        self.forecaster.scaler.scale_value(0, raw)
    }

    fn scaled_target_at(&self, t: usize) -> f64 {
        self.tail[t - self.base]
    }

    fn scaled_covariate_at(&self, t: usize, k: usize) -> Result<f64> {
        let raw = if t <= self.anchor {
            self.frame.covariates()[[t, k]]
        } else {
            let pos = self
                .future_positions
                .iter()
                .position(|&fk| fk == k)
                .ok_or_else(|| {
                    RewtsError::InsufficientData(format!(
                        "covariate {k} is not future-known but tick {t} is past the anchor"
                    ))
                })?;
            let fc = self.future_cov.ok_or_else(|| {
                RewtsError::InsufficientData("future covariate values required but not provided".into())
            })?;
            fc[[t - self.anchor - 1, pos]]
        };
        Ok(self.forecaster.scaler.scale_value(1 + k, raw))
    }

    /// Predicted value for the next step, in raw and scaled units.
    pub fn next_prediction(&self) -> Result<(f64, f64)> {
        let lags = &self.forecaster.lags;
        let t = self.anchor + self.steps_taken + 1;
        let mut features = Vec::with_capacity(lags.feature_count(self.frame.future_known()));
        for j in 1..=lags.input_length {
            features.push(self.scaled_target_at(t - j));
        }
        for (k, lag_set) in lags.covariate_lags.iter().enumerate() {
            for &lag in lag_set {
                features.push(self.scaled_covariate_at(t - lag, k)?);
            }
        }
        if lags.use_future_covariates {
            for &k in &self.future_positions {
                features.push(self.scaled_covariate_at(t, k)?);
            }
        }
        let scaled = self.forecaster.state.predict_next(&features);
        if !scaled.is_finite() {
            return Err(RewtsError::Numeric(format!("non-finite prediction at tick {t}")));
        }
        Ok((self.forecaster.scaler.unscale_value(0, scaled), scaled))
    }

    pub fn advance(&mut self, scaled_value: f64) {
        self.tail.push(scaled_value);
        self.steps_taken += 1;
    }
}

/// Recursive `h`-step forecast from `anchor`, feeding each one-step
/// prediction back as a lag. Output is in original units.
///
/// `future_cov` holds the next `h` raw values of the future-known
/// covariates, one column per future-known covariate in frame order.
pub fn forecast_recursive(
    forecaster: &FittedForecaster,
    frame: &TimeSeriesFrame,
    anchor: usize,
    future_cov: Option<ArrayView2<'_, f64>>,
    horizon: usize,
) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(RewtsError::Parameter("horizon must be >= 1".into()));
    }
    let mut rec = Recursion::new(forecaster, frame, anchor, future_cov, horizon)?;
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let (raw, scaled) = rec.next_prediction()?;
        rec.advance(scaled);
        out.push(raw);
    }
    Ok(out)
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct SavedModel {
    version: u32,
    model: ChunkModel,
}

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleManifest {
    version: u32,
    model_count: usize,
}

pub fn save_model(path: &Path, model: &ChunkModel) -> Result<()> {
    let doc = SavedModel { version: MODEL_FORMAT_VERSION, model: model.clone() };
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &doc)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ChunkModel> {
    let file = std::fs::File::open(path)?;
    let doc: SavedModel = serde_json::from_reader(std::io::BufReader::new(file))?;
    if doc.version != MODEL_FORMAT_VERSION {
        return Err(RewtsError::Parse(format!(
            "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
            doc.version
        )));
    }
    Ok(doc.model)
}

/// Write an ensemble as `manifest.json` plus one file per model.
pub fn save_models(dir: &Path, models: &[ChunkModel]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = EnsembleManifest { version: MODEL_FORMAT_VERSION, model_count: models.len() };
    let f = std::fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), &manifest)?;
    for (i, m) in models.iter().enumerate() {
        save_model(&dir.join(format!("model_{i:04}.json")), m)?;
    }
    Ok(())
}

pub fn load_models(dir: &Path) -> Result<Vec<ChunkModel>> {
    let f = std::fs::File::open(dir.join("manifest.json"))?;
    let manifest: EnsembleManifest = serde_json::from_reader(std::io::BufReader::new(f))?;
    if manifest.version != MODEL_FORMAT_VERSION {
        return Err(RewtsError::Parse(format!(
            "unsupported ensemble format version {}",
            manifest.version
        )));
    }
    (0..manifest.model_count)
        .map(|i| load_model(&dir.join(format!("model_{i:04}.json"))))
        .collect()
}
