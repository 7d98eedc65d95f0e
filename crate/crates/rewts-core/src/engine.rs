//! Streaming ensemble driver: per-anchor forecast matrices over look-back
//! data, weight fitting, ensemble forecasting, and chunk-by-chunk model
//! accrual.
//!
//! Two drivers share one anchor schedule:
//!
//! * [`run_stream`]: the deployment loop. Forecasting starts once two chunks
//!   are trained; each completed chunk adds one model to the ensemble.
//! * [`run_fixed`]: replay of a frozen ensemble over a frame, every chunk
//!   evaluated with the full model set. This is the backtest used to study
//!   weight behaviour on data whose chunk models already exist.
//!
//! Within a live chunk, anchors advance by the forecast stride; weights are
//! refit at every anchor by default. The weight fit at time `t` only reads
//! frame data at indices `<= t`.

use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RewtsError};
use crate::forecast::{forecast_recursive, ChunkModel, ForecasterSpec, LagSpec, Recursion};
use crate::qp::{
    assemble_qp, assemble_qp_auto_ridge, solve_simplex_qp, ForecastMatrix, SolverSettings,
    WeightVector,
};
use crate::timeseries::{split_chunks, ChunkIndex, TimeSeriesFrame};

/// Parameters of a streaming or replay run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamParams {
    /// Chunk length `l_c` in ticks.
    pub chunk_len: usize,
    /// Look-back length `l_b` in ticks.
    pub lookback: usize,
    /// Delivered forecast horizon `h`.
    pub horizon: usize,
    /// Horizon used when fitting weights. Equal to `horizon` in the standard
    /// mode; `1` selects the recursive one-step weighting variant.
    pub fit_horizon: usize,
    /// Tick spacing `s` between successive forecast anchors.
    pub stride: usize,
    /// Anchor stride inside the look-back window.
    pub weight_fit_stride: usize,
    /// Refit weights every Nth forecast anchor; 1 refits at every anchor.
    pub refit_every: usize,
    /// Diagonal ridge added to the QP; `None` uses the trace-relative default.
    pub ridge_eps: Option<f64>,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for StreamParams {
    fn default() -> Self {
        Self {
            chunk_len: 500,
            lookback: 160,
            horizon: 30,
            fit_horizon: 30,
            stride: 30,
            weight_fit_stride: 1,
            refit_every: 1,
            ridge_eps: None,
            solver_tol: 1e-9,
            solver_max_iter: 200_000,
        }
    }
}

impl StreamParams {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_len == 0 || self.horizon == 0 || self.fit_horizon == 0 {
            return Err(RewtsError::Parameter("chunk_len, horizon and fit_horizon must be >= 1".into()));
        }
        if self.stride == 0 || self.weight_fit_stride == 0 || self.refit_every == 0 {
            return Err(RewtsError::Parameter("strides and refit_every must be >= 1".into()));
        }
        if self.lookback < self.fit_horizon {
            return Err(RewtsError::Parameter(format!(
                "lookback {} must be >= fit_horizon {}",
                self.lookback, self.fit_horizon
            )));
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverSettings {
        SolverSettings { tol: self.solver_tol, max_iter: self.solver_max_iter }
    }
}

/// The growing model set plus weight-fitting configuration.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    models: Vec<ChunkModel>,
    pub lookback: usize,
    pub fit_horizon: usize,
    pub weight_fit_stride: usize,
    pub ridge_eps: Option<f64>,
    pub solver: SolverSettings,
    pub last_weights: Option<WeightVector>,
}

impl EnsembleState {
    pub fn new(params: &StreamParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            models: Vec::new(),
            lookback: params.lookback,
            fit_horizon: params.fit_horizon,
            weight_fit_stride: params.weight_fit_stride,
            ridge_eps: params.ridge_eps,
            solver: params.solver(),
            last_weights: None,
        })
    }

    pub fn with_models(params: &StreamParams, models: Vec<ChunkModel>) -> Result<Self> {
        let mut state = Self::new(params)?;
        for m in models {
            state.push_model(m)?;
        }
        Ok(state)
    }

    /// Append a newly trained chunk model; chunk ids must strictly increase.
    pub fn push_model(&mut self, model: ChunkModel) -> Result<()> {
        if let Some(last) = self.models.last() {
            if model.chunk_id <= last.chunk_id {
                return Err(RewtsError::Parameter(format!(
                    "chunk ids must strictly increase: {} after {}",
                    model.chunk_id, last.chunk_id
                )));
            }
        }
        self.models.push(model);
        self.last_weights = None;
        Ok(())
    }

    pub fn models(&self) -> &[ChunkModel] {
        &self.models
    }

    pub fn model_count(&self) -> usize {
        self.models.len()
    }

    /// History every model needs before an anchor.
    pub fn warmup(&self) -> usize {
        self.models
            .iter()
            .map(|m| m.forecaster.lags.warmup())
            .max()
            .unwrap_or(0)
    }
}

/// Look-back anchor range for a weight fit at `now`: `k = now - lookback`
/// up to `now - fit_horizon`, truncated at the earliest anchor with enough
/// model history. A truncated window must still keep `fit_horizon + 1`
/// anchors.
fn weight_anchor_range(
    now: usize,
    lookback: usize,
    fit_horizon: usize,
    stride: usize,
    min_anchor: usize,
) -> Result<Vec<usize>> {
    let k_hi = now.checked_sub(fit_horizon).ok_or_else(|| {
        RewtsError::InsufficientData(format!("anchor {now} is before the first feasible window"))
    })?;
    if k_hi < min_anchor {
        return Err(RewtsError::InsufficientData(format!(
            "weight fit at {now} needs anchors up to {k_hi} but history starts at {min_anchor}"
        )));
    }
    let ideal_lo = now as i64 - lookback as i64;
    let k_lo = (ideal_lo.max(0) as usize).max(min_anchor);
    let truncated = (k_lo as i64) > ideal_lo;
    let anchors: Vec<usize> = (k_lo..=k_hi).step_by(stride).collect();
    if truncated && anchors.len() < fit_horizon + 1 {
        return Err(RewtsError::InsufficientData(format!(
            "truncated look-back at {now} keeps only {} anchors (need {})",
            anchors.len(),
            fit_horizon + 1
        )));
    }
    Ok(anchors)
}

/// Raw future-known covariate rows `anchor+1 ..= anchor+h`, or `None` when
/// the frame has no future-known covariates.
fn future_cov_window(frame: &TimeSeriesFrame, anchor: usize, horizon: usize) -> Result<Option<Array2<f64>>> {
    let cols: Vec<usize> = frame
        .future_known()
        .iter()
        .enumerate()
        .filter_map(|(k, &f)| f.then_some(k))
        .collect();
    if cols.is_empty() {
        return Ok(None);
    }
    if anchor + horizon >= frame.len() {
        return Err(RewtsError::InsufficientData(format!(
            "future covariates beyond the frame are required at anchor {anchor}"
        )));
    }
    let mut out = Array2::zeros((horizon, cols.len()));
    for i in 0..horizon {
        for (jj, &k) in cols.iter().enumerate() {
            out[[i, jj]] = frame.covariates()[[anchor + 1 + i, k]];
        }
    }
    Ok(Some(out))
}

/// Everything produced by one weight fit.
#[derive(Debug, Clone)]
pub struct WeightFitDetail {
    pub weights: WeightVector,
    /// Per-model summed squared error over the look-back anchors.
    pub per_model_sse: Vec<f64>,
    pub anchors: Vec<usize>,
}

fn fit_weights_detailed(
    state: &EnsembleState,
    frame: &TimeSeriesFrame,
    now: usize,
) -> Result<WeightFitDetail> {
    let m = state.model_count();
    if m == 0 {
        return Err(RewtsError::Parameter("ensemble has no models".into()));
    }
    if now >= frame.len() {
        return Err(RewtsError::Index(format!("anchor {now} outside frame of length {}", frame.len())));
    }
    let warmup = state.warmup();
    let min_anchor = warmup.saturating_sub(1);
    let anchors = weight_anchor_range(
        now,
        state.lookback,
        state.fit_horizon,
        state.weight_fit_stride,
        min_anchor,
    )?;

    let h = state.fit_horizon;
    let target = frame.target();
    let mut matrices = Vec::with_capacity(anchors.len());
    let mut targets = Vec::with_capacity(anchors.len());
    let mut per_model_sse = vec![0.0f64; m];
    for &k in &anchors {
        let future = future_cov_window(frame, k, h)?;
        let mut values = Array2::zeros((h, m));
        for (j, model) in state.models.iter().enumerate() {
            let fc = forecast_recursive(
                &model.forecaster,
                frame,
                k,
                future.as_ref().map(|f| f.view()),
                h,
            )?;
            for (i, &v) in fc.iter().enumerate() {
                values[[i, j]] = v;
            }
        }
        let window = Array1::from_iter((1..=h).map(|i| target[k + i]));
        for j in 0..m {
            let sse: f64 = (0..h).map(|i| (window[i] - values[[i, j]]).powi(2)).sum();
            per_model_sse[j] += sse;
        }
        matrices.push(ForecastMatrix { anchor: k, values });
        targets.push(window);
    }

    let qp = match state.ridge_eps {
        Some(eps) => assemble_qp(&matrices, &targets, eps)?,
        None => assemble_qp_auto_ridge(&matrices, &targets)?,
    };
    let weights = solve_simplex_qp(&qp, &state.solver)?;
    Ok(WeightFitDetail { weights, per_model_sse, anchors })
}

/// Fit ensemble weights from the look-back window ending at `now` and store
/// them on the state.
pub fn fit_weights(
    state: &mut EnsembleState,
    frame: &TimeSeriesFrame,
    now: usize,
) -> Result<WeightVector> {
    let detail = fit_weights_detailed(state, frame, now)?;
    state.last_weights = Some(detail.weights.clone());
    Ok(detail.weights)
}

/// Matrix-weight product in fixed model order, so logs can be re-verified
/// bit for bit.
fn combine_columns(matrix: &Array2<f64>, weights: &[f64]) -> Vec<f64> {
    let (h, m) = (matrix.nrows(), matrix.ncols());
    let mut out = vec![0.0; h];
    for (i, row) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..m {
            acc += weights[j] * matrix[[i, j]];
        }
        *row = acc;
    }
    out
}

/// The `h`-step ensemble forecast from `now` plus the per-model matrix it
/// was combined from.
pub fn ensemble_forecast_detailed(
    state: &EnsembleState,
    frame: &TimeSeriesFrame,
    now: usize,
    horizon: usize,
) -> Result<(Vec<f64>, ForecastMatrix)> {
    let weights = state
        .last_weights
        .as_ref()
        .ok_or_else(|| RewtsError::Parameter("weights have not been fitted".into()))?;
    let m = state.model_count();
    if weights.weights.len() != m {
        return Err(RewtsError::Shape(format!(
            "stored weights cover {} models but the ensemble has {m}",
            weights.weights.len()
        )));
    }
    let future = future_cov_window(frame, now, horizon)?;
    let mut values = Array2::zeros((horizon, m));
    for (j, model) in state.models.iter().enumerate() {
        let fc = forecast_recursive(
            &model.forecaster,
            frame,
            now,
            future.as_ref().map(|f| f.view()),
            horizon,
        )?;
        for (i, &v) in fc.iter().enumerate() {
            values[[i, j]] = v;
        }
    }
    let forecast = combine_columns(&values, &weights.weights);
    Ok((forecast, ForecastMatrix { anchor: now, values }))
}

/// Standard mode: the weighted combination of per-model recursive forecasts.
pub fn ensemble_forecast(
    state: &EnsembleState,
    frame: &TimeSeriesFrame,
    now: usize,
    horizon: usize,
) -> Result<Vec<f64>> {
    Ok(ensemble_forecast_detailed(state, frame, now, horizon)?.0)
}

/// One-step weighting variant: weights fitted with `fit_horizon == 1` are
/// reapplied recursively, feeding the combined prediction back into every
/// model's history.
pub fn ensemble_forecast_onestep_variant(
    state: &EnsembleState,
    frame: &TimeSeriesFrame,
    now: usize,
    horizon: usize,
) -> Result<Vec<f64>> {
    if state.fit_horizon != 1 {
        return Err(RewtsError::Parameter(format!(
            "one-step variant requires fit_horizon 1, state has {}",
            state.fit_horizon
        )));
    }
    let weights = state
        .last_weights
        .as_ref()
        .ok_or_else(|| RewtsError::Parameter("weights have not been fitted".into()))?;
    if weights.weights.len() != state.model_count() {
        return Err(RewtsError::Shape("stored weights do not match the ensemble".into()));
    }
    let future = future_cov_window(frame, now, horizon)?;
    let mut recursions: Vec<Recursion<'_>> = state
        .models
        .iter()
        .map(|m| {
            Recursion::new(
                &m.forecaster,
                frame,
                now,
                future.as_ref().map(|f| f.view()),
                horizon,
            )
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut combined = 0.0;
        for (rec, &w) in recursions.iter().zip(&weights.weights) {
            let (raw, _) = rec.next_prediction()?;
            combined += w * raw;
        }
        for rec in recursions.iter_mut() {
            let scaled = rec.scale_target(combined);
            rec.advance(scaled);
        }
        out.push(combined);
    }
    Ok(out)
}

/// One forecast event of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamLogRecord {
    pub anchor: usize,
    pub model_count: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub weights: Vec<f64>,
    pub forecast: Vec<f64>,
    /// Per-model forecast matrix behind the combination, row per step.
    /// Absent for the global baseline and for the one-step variant.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub forecast_matrix: Option<Vec<Vec<f64>>>,
    /// Per-model squared-error totals from the most recent weight fit.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_model_sse: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub qp_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub qp_kkt_residual: Option<f64>,
    pub weight_fit_nanos: u64,
    pub forecast_nanos: u64,
}

/// A finished streaming run.
#[derive(Debug, Clone)]
pub struct StreamRunOutput {
    pub records: Vec<StreamLogRecord>,
    pub models: Vec<ChunkModel>,
    /// Wall time of each chunk model's training, aligned with `chunks`.
    pub chunk_train_nanos: Vec<u64>,
    pub chunks: Vec<ChunkIndex>,
}

/// Forecast anchors inside one chunk: from its start, advancing by the
/// stride, while the forecast window stays inside the chunk and inside the
/// frame's data; anchors whose weight fit would be infeasible are skipped.
/// The same schedule drives the global baseline so both methods are scored
/// on identical anchors.
pub(crate) fn anchors_in_chunk(
    chunk: &ChunkIndex,
    params: &StreamParams,
    warmup: usize,
    frame_len: usize,
) -> Vec<usize> {
    let min_anchor = warmup.saturating_sub(1);
    let mut out = Vec::new();
    let mut v = chunk.start;
    while v + params.horizon <= chunk.end && v + params.horizon < frame_len {
        if weight_anchor_range(
            v,
            params.lookback,
            params.fit_horizon,
            params.weight_fit_stride,
            min_anchor,
        )
        .is_ok()
        {
            out.push(v);
        }
        v += params.stride;
    }
    out
}

/// Train a model per chunk as the stream advances, forecasting inside each
/// live chunk from the third chunk on.
pub fn run_stream(
    frame: &TimeSeriesFrame,
    params: &StreamParams,
    lags: &LagSpec,
    spec: &ForecasterSpec,
) -> Result<StreamRunOutput> {
    let mut trainer = |frame: &TimeSeriesFrame, chunk: ChunkIndex| {
        crate::forecast::fit_chunk_model(frame, chunk, lags, spec)
    };
    run_stream_with_trainer(frame, params, &mut trainer)
}

/// Streaming driver with an injectable chunk trainer, the hook used by
/// sweeps to reuse models across runs when chunk boundaries coincide.
pub fn run_stream_with_trainer(
    frame: &TimeSeriesFrame,
    params: &StreamParams,
    trainer: &mut dyn FnMut(&TimeSeriesFrame, ChunkIndex) -> Result<ChunkModel>,
) -> Result<StreamRunOutput> {
    params.validate()?;
    let partition = split_chunks(frame, params.chunk_len)?;
    let chunks = partition.chunks;
    if chunks.len() < 2 {
        return Err(RewtsError::InsufficientData(format!(
            "stream needs at least two complete chunks of length {}, frame has {} ticks",
            params.chunk_len,
            frame.len()
        )));
    }

    let mut state = EnsembleState::new(params)?;
    let mut chunk_train_nanos = Vec::with_capacity(chunks.len());
    for chunk in &chunks[..2] {
        let t0 = Instant::now();
        let model = trainer(frame, *chunk)?;
        chunk_train_nanos.push(t0.elapsed().as_nanos() as u64);
        state.push_model(model)?;
    }

    let mut records = Vec::new();
    for live in 2..chunks.len() {
        forecast_chunk(&mut state, frame, &chunks[live], params, &mut records)?;
        let t0 = Instant::now();
        let model = trainer(frame, chunks[live])?;
        chunk_train_nanos.push(t0.elapsed().as_nanos() as u64);
        state.push_model(model)?;
    }

    Ok(StreamRunOutput {
        records,
        models: state.models,
        chunk_train_nanos,
        chunks,
    })
}

/// Replay a frozen ensemble over a frame: every complete chunk is forecast
/// with the full model set, weights refit per anchor from the look-back.
pub fn run_fixed(
    models: &[ChunkModel],
    frame: &TimeSeriesFrame,
    params: &StreamParams,
) -> Result<Vec<StreamLogRecord>> {
    params.validate()?;
    if models.is_empty() {
        return Err(RewtsError::Parameter("replay needs at least one model".into()));
    }
    let partition = split_chunks(frame, params.chunk_len)?;
    let mut state = EnsembleState::with_models(params, models.to_vec())?;
    let mut records = Vec::new();
    for chunk in &partition.chunks {
        forecast_chunk(&mut state, frame, chunk, params, &mut records)?;
    }
    Ok(records)
}

fn forecast_chunk(
    state: &mut EnsembleState,
    frame: &TimeSeriesFrame,
    chunk: &ChunkIndex,
    params: &StreamParams,
    records: &mut Vec<StreamLogRecord>,
) -> Result<()> {
    let one_step_mode = params.fit_horizon == 1 && params.horizon > 1;
    let mut last_detail: Option<WeightFitDetail> = None;
    for (idx, v) in anchors_in_chunk(chunk, params, state.warmup(), frame.len()).into_iter().enumerate() {
        let refit = idx % params.refit_every == 0 || state.last_weights.is_none();
        let weight_fit_nanos = if refit {
            let t0 = Instant::now();
            let detail = fit_weights_detailed(state, frame, v)?;
            let nanos = t0.elapsed().as_nanos() as u64;
            state.last_weights = Some(detail.weights.clone());
            last_detail = Some(detail);
            nanos
        } else {
            0
        };
        let detail = last_detail.as_ref().expect("weights fitted at least once");

        let t0 = Instant::now();
        let (forecast, matrix) = if one_step_mode {
            let fc = ensemble_forecast_onestep_variant(state, frame, v, params.horizon)?;
            (fc, None)
        } else {
            let (fc, mat) = ensemble_forecast_detailed(state, frame, v, params.horizon)?;
            (fc, Some(mat))
        };
        let forecast_nanos = t0.elapsed().as_nanos() as u64;

        records.push(StreamLogRecord {
            anchor: v,
            model_count: state.model_count(),
            weights: detail.weights.weights.clone(),
            forecast,
            forecast_matrix: matrix.map(|m| m.values.rows().into_iter().map(|r| r.to_vec()).collect()),
            per_model_sse: detail.per_model_sse.clone(),
            qp_iterations: Some(detail.weights.iterations),
            qp_kkt_residual: Some(detail.weights.kkt_residual),
            weight_fit_nanos,
            forecast_nanos,
        });
    }
    Ok(())
}

/// One record per line, standard JSON.
pub fn write_jsonl(path: &Path, records: &[StreamLogRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<StreamLogRecord>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Compact per-anchor CSV: anchor, horizon values, argmax model, max weight,
/// timings.
pub fn write_compact_csv(path: &Path, records: &[StreamLogRecord]) -> Result<()> {
    let horizon = records.first().map(|r| r.forecast.len()).unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["anchor".to_string()];
    header.extend((1..=horizon).map(|i| format!("f{i}")));
    header.extend(
        ["argmax_model", "max_weight", "weight_fit_nanos", "forecast_nanos"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.anchor.to_string()];
        row.extend(r.forecast.iter().map(|v| format!("{v}")));
        let (argmax, max_w) = r
            .weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite weights"))
            .map(|(i, &v)| (i as i64, v))
            .unwrap_or((-1, 0.0));
        row.push(argmax.to_string());
        row.push(format!("{max_w}"));
        row.push(r.weight_fit_nanos.to_string());
        row.push(r.forecast_nanos.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
