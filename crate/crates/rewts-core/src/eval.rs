//! Strided multi-horizon loss, per-chunk aggregation, normalized reporting,
//! comparison tables and parameter sweeps.
//!
//! The strided loss averages `h`-step window MSEs over anchors
//! `f, f+s, ..., f + psi*s` with `psi = floor((e - h - f) / s)`. The
//! arithmetic mean divides by the number of anchors, `psi + 1`; the
//! sum-over-psi variant is reported alongside in [`StridedLoss`] for
//! debugging because it is undefined at `psi = 0`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{run_stream_with_trainer, StreamLogRecord, StreamParams};
use crate::error::{Result, RewtsError};
use crate::forecast::{fit_chunk_model, ChunkModel, ForecasterSpec, LagSpec};
use crate::global::run_global_stream;
use crate::timeseries::{ChunkIndex, TimeSeriesFrame};

/// How per-chunk squared errors are made comparable across chunks.
///
/// Amplitude normalizations divide by the squared amplitude so the metric
/// is scale-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    PerChunkAmplitude {
        amplitudes: Vec<f64>,
    },
    MaxAmplitude {
        amplitudes: Vec<f64>,
    },
}

impl Normalization {
    fn divisor(&self, chunk_id: usize) -> Result<f64> {
        match self {
            Normalization::None => Ok(1.0),
            Normalization::PerChunkAmplitude { amplitudes } => {
                let a = amplitudes.get(chunk_id).ok_or_else(|| {
                    RewtsError::Parameter(format!("no amplitude for chunk {chunk_id}"))
                })?;
                Ok(a * a)
            }
            Normalization::MaxAmplitude { amplitudes } => {
                let a = amplitudes.iter().cloned().fold(f64::NAN, f64::max);
                if !a.is_finite() || a <= 0.0 {
                    return Err(RewtsError::Parameter("max amplitude must be positive".into()));
                }
                Ok(a * a)
            }
        }
    }
}

/// Evaluation window and schedule of the strided loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub horizon: usize,
    pub stride: usize,
    /// First anchor of the window.
    pub start: usize,
    /// Window end; anchors satisfy `anchor + horizon <= end`.
    pub end: usize,
    #[serde(default)]
    pub normalization: Normalization,
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(RewtsError::Parameter("stride must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(RewtsError::Parameter("horizon must be >= 1".into()));
        }
        if self.end <= self.start + self.horizon {
            return Err(RewtsError::Parameter(format!(
                "window [{}, {}) is not longer than the horizon {}",
                self.start, self.end, self.horizon
            )));
        }
        Ok(())
    }
}

/// `(1/h) sum (y_i - yhat_i)^2`.
pub fn window_mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.is_empty() || y.len() != yhat.len() {
        return Err(RewtsError::Shape(format!(
            "window lengths differ: {} vs {}",
            y.len(),
            yhat.len()
        )));
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StridedLoss {
    /// Mean window MSE over the `psi + 1` anchors.
    pub value: f64,
    pub anchors: Vec<usize>,
    pub per_anchor: Vec<f64>,
    /// Same sum divided by `psi` instead; `None` when `psi = 0`.
    pub sum_over_psi: Option<f64>,
}

/// Average the window MSEs of the forecasts at every scheduled anchor.
pub fn strided_loss(
    frame: &TimeSeriesFrame,
    forecasts: &BTreeMap<usize, Vec<f64>>,
    cfg: &LossConfig,
) -> Result<StridedLoss> {
    cfg.validate()?;
    if cfg.end > frame.len() {
        return Err(RewtsError::Index(format!(
            "window end {} beyond frame length {}",
            cfg.end,
            frame.len()
        )));
    }
    let psi = (cfg.end - cfg.horizon - cfg.start) / cfg.stride;
    let target = frame.target();
    let mut anchors = Vec::with_capacity(psi + 1);
    let mut per_anchor = Vec::with_capacity(psi + 1);
    for k in 0..=psi {
        let anchor = cfg.start + k * cfg.stride;
        let yhat = forecasts.get(&anchor).ok_or_else(|| {
            RewtsError::Coverage(format!("no forecast at scheduled anchor {anchor}"))
        })?;
        if yhat.len() != cfg.horizon {
            return Err(RewtsError::Shape(format!(
                "forecast at {anchor} has {} steps, expected {}",
                yhat.len(),
                cfg.horizon
            )));
        }
        if anchor + cfg.horizon >= frame.len() {
            return Err(RewtsError::Index(format!(
                "window of anchor {anchor} runs past the end of the frame"
            )));
        }
        let truth: Vec<f64> = (1..=cfg.horizon).map(|i| target[anchor + i]).collect();
        anchors.push(anchor);
        per_anchor.push(window_mse(&truth, yhat)?);
    }
    let sum: f64 = per_anchor.iter().sum();
    Ok(StridedLoss {
        value: sum / per_anchor.len() as f64,
        sum_over_psi: (psi > 0).then(|| sum / psi as f64),
        anchors,
        per_anchor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChunkReport {
    pub chunk_id: usize,
    pub mse: f64,
    pub normalized_mse: f64,
    pub anchor_count: usize,
    pub per_anchor: Vec<(usize, f64)>,
}

/// Per-chunk strided loss over a run log.
///
/// A chunk's schedule starts at its first logged grid anchor (replay runs
/// cover the opening chunk only partially); chunks with no logged anchors
/// are excluded with a warning. Holes inside a chunk's coverage are a
/// coverage error.
pub fn per_chunk_report(
    records: &[StreamLogRecord],
    chunks: &[ChunkIndex],
    frame: &TimeSeriesFrame,
    params: &StreamParams,
    normalization: &Normalization,
) -> Result<Vec<ChunkReport>> {
    let forecasts: BTreeMap<usize, Vec<f64>> = records
        .iter()
        .map(|r| (r.anchor, r.forecast.clone()))
        .collect();
    let mut reports = Vec::new();
    for chunk in chunks {
        let grid: Vec<usize> = {
            let mut v = Vec::new();
            let mut a = chunk.start;
            while a + params.horizon <= chunk.end && a + params.horizon < frame.len() {
                v.push(a);
                a += params.stride;
            }
            v
        };
        let first_present = grid.iter().position(|a| forecasts.contains_key(a));
        let Some(first) = first_present else {
            log::warn!("chunk {} has no forecast anchors; excluded from the report", chunk.chunk_id);
            continue;
        };
        for &a in &grid[first..] {
            if !forecasts.contains_key(&a) {
                return Err(RewtsError::Coverage(format!(
                    "chunk {} is missing a forecast at anchor {a} inside its covered span",
                    chunk.chunk_id
                )));
            }
        }
        let cfg = LossConfig {
            horizon: params.horizon,
            stride: params.stride,
            start: grid[first],
            // pin the schedule to the covered grid so the last anchor's
            // window stays inside the data
            end: grid.last().expect("non-empty grid") + params.horizon,
            normalization: Normalization::None,
        };
        let loss = strided_loss(frame, &forecasts, &cfg)?;
        let divisor = normalization.divisor(chunk.chunk_id)?;
        reports.push(ChunkReport {
            chunk_id: chunk.chunk_id,
            mse: loss.value,
            normalized_mse: loss.value / divisor,
            anchor_count: loss.anchors.len(),
            per_anchor: loss.anchors.iter().copied().zip(loss.per_anchor).collect(),
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub chunk_id: usize,
    pub rewts: f64,
    pub global: f64,
}

/// Side-by-side chunk table with means and the percentage difference
/// `100 * (global - rewts) / global`. Positive when the ensemble wins.
///
/// `percent_difference_symmetric` uses the symmetric mean denominator
/// `(global + rewts) / 2`, which negates exactly under argument swap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub per_chunk: Vec<ComparisonRow>,
    pub rewts_mean: f64,
    pub global_mean: f64,
    pub percent_difference: f64,
    pub percent_difference_symmetric: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<(String, usize)>,
}

pub fn compare_runs(rewts: &[ChunkReport], global: &[ChunkReport]) -> Result<ComparisonReport> {
    let mut r_ids: Vec<usize> = rewts.iter().map(|c| c.chunk_id).collect();
    let mut g_ids: Vec<usize> = global.iter().map(|c| c.chunk_id).collect();
    r_ids.sort_unstable();
    g_ids.sort_unstable();
    if r_ids != g_ids {
        return Err(RewtsError::Comparison(format!(
            "chunk sets differ: {r_ids:?} vs {g_ids:?}"
        )));
    }
    if rewts.is_empty() {
        return Err(RewtsError::Comparison("no chunks to compare".into()));
    }
    let by_id: BTreeMap<usize, f64> = global.iter().map(|c| (c.chunk_id, c.normalized_mse)).collect();
    let mut per_chunk: Vec<ComparisonRow> = rewts
        .iter()
        .map(|c| ComparisonRow {
            chunk_id: c.chunk_id,
            rewts: c.normalized_mse,
            global: by_id[&c.chunk_id],
        })
        .collect();
    per_chunk.sort_by_key(|row| row.chunk_id);
    let rewts_mean = per_chunk.iter().map(|r| r.rewts).sum::<f64>() / per_chunk.len() as f64;
    let global_mean = per_chunk.iter().map(|r| r.global).sum::<f64>() / per_chunk.len() as f64;
    let percent_difference = if global_mean != 0.0 {
        100.0 * (global_mean - rewts_mean) / global_mean
    } else if rewts_mean == 0.0 {
        0.0
    } else {
        log::warn!("global mean is zero; percentage difference undefined");
        f64::NAN
    };
    let denom = global_mean + rewts_mean;
    let percent_difference_symmetric = if denom != 0.0 {
        200.0 * (global_mean - rewts_mean) / denom
    } else {
        0.0
    };
    Ok(ComparisonReport {
        per_chunk,
        rewts_mean,
        global_mean,
        percent_difference,
        percent_difference_symmetric,
        axis: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    ChunkLength,
    LookbackLength,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::ChunkLength => "chunk_length",
            SweepAxis::LookbackLength => "lookback_length",
        }
    }
}

/// One sweep value's result; infeasible values carry the error text and the
/// sweep continues.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: usize,
    pub report: Option<ComparisonReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Cache of chunk models keyed by their training bounds, reused across
/// sweep values whose chunk boundaries coincide.
#[derive(Default)]
pub struct ChunkModelCache {
    entries: std::collections::HashMap<(usize, usize), ChunkModel>,
}

impl ChunkModelCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn run_pair(
    frame: &TimeSeriesFrame,
    params: &StreamParams,
    lags: &LagSpec,
    spec: &ForecasterSpec,
    normalization: &Normalization,
    cache: Option<&mut ChunkModelCache>,
) -> Result<ComparisonReport> {
    let rewts_out = match cache {
        Some(cache) => {
            let mut trainer = |frame: &TimeSeriesFrame, chunk: ChunkIndex| {
                if let Some(hit) = cache.entries.get(&(chunk.start, chunk.end)) {
                    let mut model = hit.clone();
                    model.chunk_id = chunk.chunk_id;
                    return Ok(model);
                }
                let model = fit_chunk_model(frame, chunk, lags, spec)?;
                cache.entries.insert((chunk.start, chunk.end), model.clone());
                Ok(model)
            };
            run_stream_with_trainer(frame, params, &mut trainer)?
        }
        None => crate::engine::run_stream(frame, params, lags, spec)?,
    };
    let global_out = run_global_stream(frame, params, lags, spec)?;
    let rewts_rep = per_chunk_report(&rewts_out.records, &rewts_out.chunks, frame, params, normalization)?;
    let global_rep = per_chunk_report(&global_out.records, &global_out.chunks, frame, params, normalization)?;
    compare_runs(&rewts_rep, &global_rep)
}

/// Run the method comparison across a parameter axis. The chunk-length axis
/// reruns both methods per value; the look-back axis reruns the ensemble
/// against one fixed global run.
pub fn sweep(
    frame: &TimeSeriesFrame,
    axis: SweepAxis,
    values: &[usize],
    base: &StreamParams,
    lags: &LagSpec,
    spec: &ForecasterSpec,
    normalization: &Normalization,
) -> Vec<SweepPoint> {
    let mut cache = ChunkModelCache::default();
    let mut out = Vec::with_capacity(values.len());
    for &value in values {
        let mut params = base.clone();
        match axis {
            SweepAxis::ChunkLength => params.chunk_len = value,
            SweepAxis::LookbackLength => params.lookback = value,
        }
        let result = run_pair(frame, &params, lags, spec, normalization, Some(&mut cache));
        match result {
            Ok(mut report) => {
                report.axis = Some((axis.name().to_string(), value));
                out.push(SweepPoint { value, report: Some(report), error: None });
            }
            Err(e) => {
                log::warn!("sweep value {value} failed: {e}");
                out.push(SweepPoint { value, report: None, error: Some(e.to_string()) });
            }
        }
    }
    out
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "paired samples required");
    if xs.len() < 2 {
        return 0.0;
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("finite values"));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

pub fn write_chunk_reports_json(path: &Path, reports: &[ChunkReport]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), reports)?;
    Ok(())
}

pub fn write_chunk_reports_csv(path: &Path, reports: &[ChunkReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["chunk_id", "anchor_count", "mse", "normalized_mse"])?;
    for r in reports {
        w.write_record(&[
            r.chunk_id.to_string(),
            r.anchor_count.to_string(),
            format!("{}", r.mse),
            format!("{}", r.normalized_mse),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_comparison_json(path: &Path, report: &ComparisonReport) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), report)?;
    Ok(())
}

pub fn write_comparison_csv(path: &Path, report: &ComparisonReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["chunk_id", "rewts", "global"])?;
    for row in &report.per_chunk {
        w.write_record(&[
            row.chunk_id.to_string(),
            format!("{}", row.rewts),
            format!("{}", row.global),
        ])?;
    }
    w.write_record(["mean", &format!("{}", report.rewts_mean), &format!("{}", report.global_mean)])?;
    w.flush()?;
    Ok(())
}

pub fn write_sweep_json(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), points)?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, axis: SweepAxis, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([axis.name(), "rewts_mean", "global_mean", "percent_difference", "error"])?;
    for p in points {
        match &p.report {
            Some(r) => w.write_record(&[
                p.value.to_string(),
                format!("{}", r.rewts_mean),
                format!("{}", r.global_mean),
                format!("{}", r.percent_difference),
                String::new(),
            ])?,
            None => w.write_record(&[
                p.value.to_string(),
                String::new(),
                String::new(),
                String::new(),
                p.error.clone().unwrap_or_default(),
            ])?,
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn univariate(values: Vec<f64>) -> TimeSeriesFrame {
        TimeSeriesFrame::univariate(1.0, values).unwrap()
    }

    fn cfg(horizon: usize, stride: usize, start: usize, end: usize) -> LossConfig {
        LossConfig { horizon, stride, start, end, normalization: Normalization::None }
    }

    #[test]
    fn window_mse_examples() {
        assert_eq!(window_mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(window_mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(window_mse(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 2.0 / 3.0);
        assert!(window_mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn single_anchor_equals_window_mse() {
        let frame = univariate(vec![0.0, 1.0, 2.0, 3.0]);
        let mut forecasts = BTreeMap::new();
        forecasts.insert(0usize, vec![2.0, 2.0]);
        let loss = strided_loss(&frame, &forecasts, &cfg(2, 5, 0, 4)).unwrap();
        assert_abs_diff_eq!(loss.value, 0.5);
        assert!(loss.sum_over_psi.is_none());
    }

    #[test]
    fn two_anchor_mean() {
        // window MSEs 1 and 3 average to 2 over the psi + 1 = 2 anchors
        let frame = univariate(vec![0.0; 12]);
        let mut forecasts = BTreeMap::new();
        forecasts.insert(0usize, vec![1.0, 1.0]);
        forecasts.insert(4usize, vec![3.0_f64.sqrt(), 3.0_f64.sqrt()]);
        let loss = strided_loss(&frame, &forecasts, &cfg(2, 4, 0, 7)).unwrap();
        assert_eq!(loss.anchors, vec![0, 4]);
        assert_abs_diff_eq!(loss.value, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(loss.sum_over_psi.unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn persistence_on_ramp_matches_brute_force() {
        // y = t on [0, 10), h = 2, s = 3, persistence forecasts.
        let frame = univariate((0..10).map(|t| t as f64).collect());
        let mut forecasts = BTreeMap::new();
        for a in 0..8 {
            forecasts.insert(a, vec![a as f64, a as f64]);
        }
        let loss = strided_loss(&frame, &forecasts, &cfg(2, 3, 0, 10)).unwrap();

        // independent enumeration of the same schedule
        let mut expected = Vec::new();
        let (h, s, f, e) = (2usize, 3usize, 0usize, 10usize);
        let psi = (e - h - f) / s;
        for k in 0..=psi {
            let a = f + k * s;
            let mut sum = 0.0;
            for i in 1..=h {
                let truth = (a + i) as f64;
                let pred = a as f64;
                sum += (truth - pred) * (truth - pred);
            }
            expected.push(sum / h as f64);
        }
        let mean = expected.iter().sum::<f64>() / expected.len() as f64;
        assert_eq!(loss.anchors, vec![0, 3, 6]);
        assert_abs_diff_eq!(loss.value, mean, epsilon = 1e-12);
        assert_abs_diff_eq!(loss.value, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn missing_anchor_is_coverage_error() {
        let frame = univariate(vec![0.0; 10]);
        let mut forecasts = BTreeMap::new();
        forecasts.insert(0usize, vec![0.0, 0.0]);
        let err = strided_loss(&frame, &forecasts, &cfg(2, 3, 0, 10)).unwrap_err();
        assert_eq!(err.category(), "coverage");
    }

    fn mock_record(anchor: usize, forecast: Vec<f64>) -> StreamLogRecord {
        StreamLogRecord {
            anchor,
            model_count: 1,
            weights: vec![],
            forecast,
            forecast_matrix: None,
            per_model_sse: vec![],
            qp_iterations: None,
            qp_kkt_residual: None,
            weight_fit_nanos: 0,
            forecast_nanos: 0,
        }
    }

    fn params(horizon: usize, stride: usize, chunk_len: usize) -> StreamParams {
        StreamParams { horizon, stride, chunk_len, fit_horizon: horizon, lookback: horizon + 1, ..Default::default() }
    }

    #[test]
    fn perfect_forecasts_score_zero() {
        let frame = univariate((0..40).map(|t| (t as f64 * 0.4).sin()).collect());
        let p = params(2, 4, 20);
        let chunks = vec![
            ChunkIndex { chunk_id: 0, start: 0, end: 20 },
            ChunkIndex { chunk_id: 1, start: 20, end: 40 },
        ];
        let records: Vec<StreamLogRecord> = chunks
            .iter()
            .flat_map(|c| {
                let mut v = Vec::new();
                let mut a = c.start;
                while a + 2 <= c.end {
                    let truth: Vec<f64> = (1..=2).map(|i| frame.target()[a + i]).collect();
                    v.push(mock_record(a, truth));
                    a += 4;
                }
                v
            })
            .collect();
        let reports = per_chunk_report(&records, &chunks, &frame, &p, &Normalization::None).unwrap();
        assert_eq!(reports.len(), 2);
        for r in reports {
            assert_eq!(r.mse, 0.0);
            assert_eq!(r.normalized_mse, 0.0);
        }
    }

    #[test]
    fn zero_forecast_on_sine_is_half_amplitude_squared() {
        // whole periods: mean square of the sine is A^2 / 2
        let amplitude = 2.0;
        let n = 400;
        let omega = 8.0 * std::f64::consts::PI / n as f64;
        let frame = univariate((0..n).map(|t| amplitude * (omega * t as f64).sin()).collect());
        let p = params(4, 1, n);
        let chunks = vec![ChunkIndex { chunk_id: 0, start: 0, end: n }];
        let records: Vec<StreamLogRecord> =
            (0..=(n - 4)).map(|a| mock_record(a, vec![0.0; 4])).collect();
        let norm = Normalization::PerChunkAmplitude { amplitudes: vec![amplitude] };
        let reports = per_chunk_report(&records, &chunks, &frame, &p, &norm).unwrap();
        assert_abs_diff_eq!(reports[0].normalized_mse, 0.5, epsilon = 0.02);
    }

    #[test]
    fn chunks_without_anchors_are_excluded() {
        let frame = univariate(vec![0.0; 40]);
        let p = params(2, 4, 20);
        let chunks = vec![
            ChunkIndex { chunk_id: 0, start: 0, end: 20 },
            ChunkIndex { chunk_id: 1, start: 20, end: 40 },
        ];
        let records: Vec<StreamLogRecord> = (0..5).map(|k| mock_record(20 + 4 * k, vec![0.0, 0.0])).collect();
        let reports = per_chunk_report(&records, &chunks, &frame, &p, &Normalization::None).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].chunk_id, 1);
    }

    #[test]
    fn coverage_hole_is_an_error() {
        let frame = univariate(vec![0.0; 20]);
        let p = params(2, 4, 20);
        let chunks = vec![ChunkIndex { chunk_id: 0, start: 0, end: 20 }];
        let records = vec![
            mock_record(0, vec![0.0, 0.0]),
            mock_record(8, vec![0.0, 0.0]),
            mock_record(12, vec![0.0, 0.0]),
            mock_record(16, vec![0.0, 0.0]),
        ];
        let err = per_chunk_report(&records, &chunks, &frame, &p, &Normalization::None).unwrap_err();
        assert_eq!(err.category(), "coverage");
    }

    #[test]
    fn scaling_data_scales_mse_quadratically() {
        let gamma = 3.0;
        let base: Vec<f64> = (0..30).map(|t| (t as f64 * 0.5).sin()).collect();
        let scaled: Vec<f64> = base.iter().map(|v| v * gamma).collect();
        let p = params(2, 3, 30);
        let chunks = vec![ChunkIndex { chunk_id: 0, start: 0, end: 30 }];
        let recs_base: Vec<StreamLogRecord> =
            (0..10).map(|k| mock_record(3 * k, vec![0.1, 0.2])).collect();
        let recs_scaled: Vec<StreamLogRecord> =
            (0..10).map(|k| mock_record(3 * k, vec![0.1 * gamma, 0.2 * gamma])).collect();
        let rb = per_chunk_report(&recs_base, &chunks, &univariate(base), &p,
            &Normalization::PerChunkAmplitude { amplitudes: vec![1.0] }).unwrap();
        let rs = per_chunk_report(&recs_scaled, &chunks, &univariate(scaled), &p,
            &Normalization::PerChunkAmplitude { amplitudes: vec![gamma] }).unwrap();
        assert_abs_diff_eq!(rs[0].mse, gamma * gamma * rb[0].mse, epsilon = 1e-12);
        assert_abs_diff_eq!(rs[0].normalized_mse, rb[0].normalized_mse, epsilon = 1e-12);
    }

    fn report(chunk_id: usize, value: f64) -> ChunkReport {
        ChunkReport { chunk_id, mse: value, normalized_mse: value, anchor_count: 1, per_anchor: vec![] }
    }

    #[test]
    fn compare_identical_runs_is_zero() {
        let a = vec![report(0, 0.5), report(1, 0.7)];
        let cmp = compare_runs(&a, &a).unwrap();
        assert_eq!(cmp.percent_difference, 0.0);
        assert_eq!(cmp.percent_difference_symmetric, 0.0);
    }

    #[test]
    fn compare_known_means() {
        let rewts = vec![report(0, 0.73)];
        let global = vec![report(0, 0.81)];
        let cmp = compare_runs(&rewts, &global).unwrap();
        assert_abs_diff_eq!(cmp.percent_difference, 100.0 * 0.08 / 0.81, epsilon = 1e-12);
        assert_abs_diff_eq!((cmp.percent_difference * 100.0).round() / 100.0, 9.88);
        assert_abs_diff_eq!(cmp.percent_difference_symmetric, 200.0 * 0.08 / 1.54, epsilon = 1e-12);
        assert_abs_diff_eq!((cmp.percent_difference_symmetric * 100.0).round() / 100.0, 10.39);
    }

    #[test]
    fn compare_sign_flips_when_worse() {
        let rewts = vec![report(0, 0.9)];
        let global = vec![report(0, 0.5)];
        let cmp = compare_runs(&rewts, &global).unwrap();
        assert!(cmp.percent_difference < 0.0);
    }

    #[test]
    fn compare_swap_negates() {
        let a = vec![report(0, 0.4), report(1, 0.6)];
        let b = vec![report(0, 0.8), report(1, 0.5)];
        let ab = compare_runs(&a, &b).unwrap();
        let ba = compare_runs(&b, &a).unwrap();
        assert_abs_diff_eq!(ab.percent_difference_symmetric, -ba.percent_difference_symmetric, epsilon = 1e-12);
        assert_eq!(ab.percent_difference > 0.0, ba.percent_difference < 0.0);
    }

    #[test]
    fn compare_rejects_mismatched_chunks() {
        let a = vec![report(0, 0.4)];
        let b = vec![report(1, 0.4)];
        assert!(matches!(compare_runs(&a, &b), Err(RewtsError::Comparison(_))));
    }

    #[test]
    fn means_ignore_chunk_order() {
        let a = vec![report(0, 0.4), report(1, 0.6), report(2, 0.2)];
        let mut shuffled = a.clone();
        shuffled.rotate_left(1);
        let b = vec![report(0, 0.1), report(1, 0.2), report(2, 0.3)];
        let c1 = compare_runs(&a, &b).unwrap();
        let c2 = compare_runs(&shuffled, &b).unwrap();
        assert_eq!(c1.rewts_mean, c2.rewts_mean);
        assert_eq!(c1.per_chunk, c2.per_chunk);
    }

    #[test]
    fn spearman_basics() {
        assert_abs_diff_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_abs_diff_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        let with_ties = spearman_rho(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]);
        assert!(with_ties > 0.9);
        assert_eq!(spearman_rho(&[1.0, 1.0], &[2.0, 3.0]), 0.0);
    }

    fn sine_frame(n: usize) -> TimeSeriesFrame {
        univariate((0..n).map(|t| (t as f64 * 0.21).sin() * 2.0 + (t as f64 * 0.05).cos()).collect())
    }

    #[test]
    fn sweep_single_value_matches_direct_run() {
        let frame = sine_frame(200);
        let base = StreamParams {
            chunk_len: 40, lookback: 16, horizon: 4, fit_horizon: 4, stride: 4,
            ..Default::default()
        };
        let lags = LagSpec::autoregressive(4);
        let spec = ForecasterSpec::ElasticNet(Default::default());
        let points = sweep(&frame, SweepAxis::LookbackLength, &[16], &base, &lags, &spec, &Normalization::None);
        assert_eq!(points.len(), 1);
        let swept = points[0].report.as_ref().unwrap();
        let direct = run_pair(&frame, &base, &lags, &spec, &Normalization::None, None).unwrap();
        assert_eq!(swept.rewts_mean, direct.rewts_mean);
        assert_eq!(swept.global_mean, direct.global_mean);
    }

    #[test]
    fn sweep_continues_past_infeasible_values() {
        let frame = sine_frame(200);
        let base = StreamParams {
            chunk_len: 40, lookback: 16, horizon: 4, fit_horizon: 4, stride: 4,
            ..Default::default()
        };
        let lags = LagSpec::autoregressive(4);
        let spec = ForecasterSpec::ElasticNet(Default::default());
        // lookback 2 < fit_horizon 4 is infeasible
        let points = sweep(&frame, SweepAxis::LookbackLength, &[2, 16], &base, &lags, &spec, &Normalization::None);
        assert!(points[0].report.is_none());
        assert!(points[0].error.is_some());
        assert!(points[1].report.is_some());
    }

    #[test]
    fn cached_sweep_matches_uncached() {
        let frame = sine_frame(200);
        let base = StreamParams {
            chunk_len: 40, lookback: 16, horizon: 4, fit_horizon: 4, stride: 4,
            ..Default::default()
        };
        let lags = LagSpec::autoregressive(4);
        let spec = ForecasterSpec::ElasticNet(Default::default());
        // repeated value guarantees cache hits on every chunk
        let points = sweep(&frame, SweepAxis::ChunkLength, &[40, 40], &base, &lags, &spec, &Normalization::None);
        let a = points[0].report.as_ref().unwrap();
        let b = points[1].report.as_ref().unwrap();
        assert_eq!(a.rewts_mean, b.rewts_mean);
        let direct = run_pair(&frame, &base, &lags, &spec, &Normalization::None, None).unwrap();
        assert_eq!(a.rewts_mean, direct.rewts_mean);
        assert_eq!(a.global_mean, direct.global_mean);
    }
}
