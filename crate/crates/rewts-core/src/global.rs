//! The single-model baseline: one forecaster retrained from scratch on all
//! history at every chunk boundary, with a constant parameter count.
//!
//! The anchor schedule and log format match the ensemble driver so the two
//! methods are scored on identical forecasts events; the scaler is refit
//! over all seen history at every retraining.

use std::time::Instant;

use serde::Serialize;

use crate::engine::{anchors_in_chunk, StreamLogRecord, StreamParams};
use crate::error::{Result, RewtsError};
use crate::forecast::{build_design, forecast_recursive, FittedForecaster, ForecasterSpec, LagSpec};
use crate::timeseries::{fit_scaler, split_chunks, ChunkIndex, TimeSeriesFrame};

/// The fitted global model plus its retraining bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalState {
    pub forecaster: FittedForecaster,
    /// Exclusive end of the training window; always a chunk boundary.
    pub trained_through: usize,
    pub retrain_count: usize,
    pub param_count: usize,
}

/// Fit one forecaster on `[0, end)` with the scaler taken over the same span.
pub fn fit_global(
    frame: &TimeSeriesFrame,
    end: usize,
    lags: &LagSpec,
    spec: &ForecasterSpec,
) -> Result<FittedForecaster> {
    let range = ChunkIndex { chunk_id: 0, start: 0, end };
    let model = crate::forecast::fit_chunk_model(frame, range, lags, spec)?;
    Ok(model.forecaster)
}

#[derive(Debug, Clone)]
pub struct GlobalRunOutput {
    pub records: Vec<StreamLogRecord>,
    pub state: GlobalState,
    /// Wall time of the initial fit followed by each retraining.
    pub train_nanos: Vec<u64>,
    pub chunks: Vec<ChunkIndex>,
}

/// Forecast with a single model retrained on all history at every chunk
/// completion. Mirrors the ensemble stream: the initial fit covers the
/// first two chunks and forecasting starts in the third.
pub fn run_global_stream(
    frame: &TimeSeriesFrame,
    params: &StreamParams,
    lags: &LagSpec,
    spec: &ForecasterSpec,
) -> Result<GlobalRunOutput> {
    params.validate()?;
    let partition = split_chunks(frame, params.chunk_len)?;
    let chunks = partition.chunks;
    if chunks.len() < 2 {
        return Err(RewtsError::InsufficientData(format!(
            "global stream needs at least two complete chunks of length {}, frame has {} ticks",
            params.chunk_len,
            frame.len()
        )));
    }

    let mut train_nanos = Vec::new();
    let t0 = Instant::now();
    let mut forecaster = fit_global(frame, chunks[1].end, lags, spec)?;
    train_nanos.push(t0.elapsed().as_nanos() as u64);
    let param_count = param_count_of(&forecaster, frame, lags);
    let mut trained_through = chunks[1].end;
    let mut retrain_count = 0usize;

    let warmup = lags.warmup();
    let mut records = Vec::new();
    for live in 2..chunks.len() {
        for v in anchors_in_chunk(&chunks[live], params, warmup, frame.len()) {
            records.push(global_record(&forecaster, frame, v, params.horizon)?);
        }
        let t0 = Instant::now();
        forecaster = fit_global(frame, chunks[live].end, lags, spec)?;
        train_nanos.push(t0.elapsed().as_nanos() as u64);
        trained_through = chunks[live].end;
        retrain_count += 1;
    }

    Ok(GlobalRunOutput {
        records,
        state: GlobalState { forecaster, trained_through, retrain_count, param_count },
        train_nanos,
        chunks,
    })
}

/// Replay a frozen global model over every complete chunk of a frame, on
/// the same anchor schedule as the ensemble replay.
pub fn run_global_fixed(
    forecaster: &FittedForecaster,
    frame: &TimeSeriesFrame,
    params: &StreamParams,
) -> Result<Vec<StreamLogRecord>> {
    params.validate()?;
    let partition = split_chunks(frame, params.chunk_len)?;
    let warmup = forecaster.lags.warmup();
    let mut records = Vec::new();
    for chunk in &partition.chunks {
        for v in anchors_in_chunk(chunk, params, warmup, frame.len()) {
            records.push(global_record(forecaster, frame, v, params.horizon)?);
        }
    }
    Ok(records)
}

fn global_record(
    forecaster: &FittedForecaster,
    frame: &TimeSeriesFrame,
    anchor: usize,
    horizon: usize,
) -> Result<StreamLogRecord> {
    let future = future_cov(frame, anchor, horizon)?;
    let t0 = Instant::now();
    let forecast = forecast_recursive(
        forecaster,
        frame,
        anchor,
        future.as_ref().map(|f| f.view()),
        horizon,
    )?;
    let forecast_nanos = t0.elapsed().as_nanos() as u64;
    Ok(StreamLogRecord {
        anchor,
        model_count: 1,
        weights: vec![],
        forecast,
        forecast_matrix: None,
        per_model_sse: vec![],
        qp_iterations: None,
        qp_kkt_residual: None,
        weight_fit_nanos: 0,
        forecast_nanos,
    })
}

fn future_cov(
    frame: &TimeSeriesFrame,
    anchor: usize,
    horizon: usize,
) -> Result<Option<ndarray::Array2<f64>>> {
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
    let mut out = ndarray::Array2::zeros((horizon, cols.len()));
    for i in 0..horizon {
        for (jj, &k) in cols.iter().enumerate() {
            out[[i, jj]] = frame.covariates()[[anchor + 1 + i, k]];
        }
    }
    Ok(Some(out))
}

/// Free coefficients of the fitted state; constant across retrainings for
/// the linear family because the lag layout never changes.
fn param_count_of(forecaster: &FittedForecaster, frame: &TimeSeriesFrame, lags: &LagSpec) -> usize {
    match &forecaster.state {
        crate::forecast::ForecasterState::Linear { coefficients, .. } => coefficients.len() + 1,
        crate::forecast::ForecasterState::Persistence => 0,
        crate::forecast::ForecasterState::HistoricalMean { .. } => {
            let _ = (frame, lags);
            1
        }
    }
}

/// Design-rows sanity check used by tests: the retraining set at boundary
/// `end` strictly contains the one at any earlier boundary.
pub fn training_rows(frame: &TimeSeriesFrame, end: usize, lags: &LagSpec) -> Result<usize> {
    let range = ChunkIndex { chunk_id: 0, start: 0, end };
    let scaler = fit_scaler(frame, range)?;
    let _ = scaler;
    let (x, _) = build_design(frame, range, lags)?;
    Ok(x.nrows())
}
