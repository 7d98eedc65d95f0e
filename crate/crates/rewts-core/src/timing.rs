//! Wall-clock benchmark of training and forecasting for both methods.
//!
//! One warm-up fit runs untimed before the measured streams. All
//! measurement is sequential; per-anchor forecast time for the ensemble
//! includes the weight fit, which is the dominant inference cost.

use std::path::Path;

use serde::Serialize;

use crate::engine::{run_stream, StreamParams};
use crate::error::Result;
use crate::forecast::{fit_chunk_model, ForecasterSpec, LagSpec};
use crate::global::run_global_stream;
use crate::timeseries::{split_chunks, ChunkIndex, TimeSeriesFrame};

#[derive(Debug, Clone, Serialize)]
pub struct ChunkTiming {
    pub chunk_id: usize,
    pub model_count: usize,
    pub anchor_count: usize,
    pub mean_anchor_nanos: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingBench {
    /// Chunks consumed, from the two-chunk start to the full stream.
    pub chunk_counts: Vec<usize>,
    /// Cumulative training time after consuming each chunk count.
    pub rewts_cumulative_train_nanos: Vec<u64>,
    pub global_cumulative_train_nanos: Vec<u64>,
    /// Per live chunk: mean per-anchor forecast cost (ensemble cost includes
    /// the weight fit).
    pub rewts_per_chunk: Vec<ChunkTiming>,
    pub global_per_chunk: Vec<ChunkTiming>,
}

pub fn timing_bench(
    frame: &TimeSeriesFrame,
    params: &StreamParams,
    lags: &LagSpec,
    spec: &ForecasterSpec,
) -> Result<TimingBench> {
    params.validate()?;
    // warm-up fit, excluded from all measurements
    let warmup_chunk = ChunkIndex { chunk_id: 0, start: 0, end: params.chunk_len.min(frame.len()) };
    let _ = fit_chunk_model(frame, warmup_chunk, lags, spec)?;

    let rewts = run_stream(frame, params, lags, spec)?;
    let global = run_global_stream(frame, params, lags, spec)?;

    let chunks = split_chunks(frame, params.chunk_len)?.chunks;
    let total = chunks.len();

    // Training-time series indexed by chunks consumed c = 2..=total.
    // The ensemble has trained one model per chunk; the global baseline has
    // done its initial fit plus one retraining per later chunk.
    let mut chunk_counts = Vec::new();
    let mut rewts_cum = Vec::new();
    let mut global_cum = Vec::new();
    for consumed in 2..=total {
        chunk_counts.push(consumed);
        rewts_cum.push(rewts.chunk_train_nanos[..consumed].iter().sum());
        global_cum.push(global.train_nanos[..=(consumed - 2)].iter().sum());
    }

    let per_chunk = |records: &[crate::engine::StreamLogRecord], with_fit: bool| -> Vec<ChunkTiming> {
        chunks
            .iter()
            .filter_map(|chunk| {
                let in_chunk: Vec<_> = records
                    .iter()
                    .filter(|r| r.anchor >= chunk.start && r.anchor < chunk.end)
                    .collect();
                if in_chunk.is_empty() {
                    return None;
                }
                let total_nanos: u64 = in_chunk
                    .iter()
                    .map(|r| r.forecast_nanos + if with_fit { r.weight_fit_nanos } else { 0 })
                    .sum();
                Some(ChunkTiming {
                    chunk_id: chunk.chunk_id,
                    model_count: in_chunk[0].model_count,
                    anchor_count: in_chunk.len(),
                    mean_anchor_nanos: total_nanos as f64 / in_chunk.len() as f64,
                })
            })
            .collect()
    };

    Ok(TimingBench {
        chunk_counts,
        rewts_cumulative_train_nanos: rewts_cum,
        global_cumulative_train_nanos: global_cum,
        rewts_per_chunk: per_chunk(&rewts.records, true),
        global_per_chunk: per_chunk(&global.records, false),
    })
}

pub fn write_timing_json(path: &Path, bench: &TimingBench) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), bench)?;
    Ok(())
}

pub fn write_timing_csv(path: &Path, bench: &TimingBench) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "chunk_count",
        "rewts_cumulative_train_nanos",
        "global_cumulative_train_nanos",
        "rewts_mean_anchor_nanos",
        "global_mean_anchor_nanos",
        "rewts_model_count",
    ])?;
    for (i, &count) in bench.chunk_counts.iter().enumerate() {
        // when `count` chunks are consumed the live chunk is chunk `count`
        let rw = bench.rewts_per_chunk.iter().find(|t| t.chunk_id == count);
        let gl = bench.global_per_chunk.iter().find(|t| t.chunk_id == count);
        w.write_record(&[
            count.to_string(),
            bench.rewts_cumulative_train_nanos[i].to_string(),
            bench.global_cumulative_train_nanos[i].to_string(),
            rw.map(|t| format!("{}", t.mean_anchor_nanos)).unwrap_or_default(),
            gl.map(|t| format!("{}", t.mean_anchor_nanos)).unwrap_or_default(),
            rw.map(|t| t.model_count.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
