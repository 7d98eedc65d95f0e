//! Data model for equidistant multivariate series, chunk segmentation and
//! per-chunk feature scaling.
//!
//! Time is modeled as integer tick indices with an abstract step `dt`.
//! Wall-clock concerns (resampling, timezones) are handled at ingestion.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Result, RewtsError};

/// Floor applied to fitted standard deviations so constant features stay finite.
pub const EPS_STD: f64 = 1e-8;

/// An equidistant series: one target plus zero or more covariate columns.
///
/// All values are finite; missing values must be repaired during ingestion.
/// Immutable after construction, safe to share between workers.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    start_index: usize,
    step: f64,
    target: Array1<f64>,
    covariates: Array2<f64>,
    future_known: Vec<bool>,
}

impl TimeSeriesFrame {
    pub fn new(
        start_index: usize,
        step: f64,
        target: Vec<f64>,
        covariates: Array2<f64>,
        future_known: Vec<bool>,
    ) -> Result<Self> {
        if target.is_empty() {
            return Err(RewtsError::EmptyInput("frame has no rows".into()));
        }
        if covariates.nrows() != target.len() {
            return Err(RewtsError::Shape(format!(
                "target length {} does not match covariate row count {}",
                target.len(),
                covariates.nrows()
            )));
        }
        if future_known.len() != covariates.ncols() {
            return Err(RewtsError::Shape(format!(
                "future_known length {} does not match covariate count {}",
                future_known.len(),
                covariates.ncols()
            )));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(RewtsError::Parameter(format!("step must be positive, got {step}")));
        }
        if target.iter().any(|v| !v.is_finite()) || covariates.iter().any(|v| !v.is_finite()) {
            return Err(RewtsError::Numeric("frame contains non-finite values".into()));
        }
        Ok(Self {
            start_index,
            step,
            target: Array1::from(target),
            covariates,
            future_known,
        })
    }

    /// Univariate frame (K = 0) starting at tick 0.
    pub fn univariate(step: f64, target: Vec<f64>) -> Result<Self> {
        let n = target.len();
        Self::new(0, step, target, Array2::zeros((n, 0)), vec![])
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn target(&self) -> &Array1<f64> {
        &self.target
    }

    pub fn covariates(&self) -> &Array2<f64> {
        &self.covariates
    }

    pub fn future_known(&self) -> &[bool] {
        &self.future_known
    }

    /// Feature matrix `(target, covariates...)` over `[start, end)`, one row
    /// per tick. This is the ordering scalers are fitted against.
    pub fn feature_rows(&self, start: usize, end: usize) -> Result<Array2<f64>> {
        self.check_range(start, end)?;
        let mut rows = Array2::zeros((end - start, 1 + self.n_covariates()));
        for (i, t) in (start..end).enumerate() {
            rows[[i, 0]] = self.target[t];
            for k in 0..self.n_covariates() {
                rows[[i, 1 + k]] = self.covariates[[t, k]];
            }
        }
        Ok(rows)
    }

    pub(crate) fn check_range(&self, start: usize, end: usize) -> Result<()> {
        if start >= end || end > self.len() {
            return Err(RewtsError::Index(format!(
                "range [{start}, {end}) out of bounds for frame of length {}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// A contiguous `[start, end)` segment of the timeline holding one chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ChunkIndex {
    pub chunk_id: usize,
    pub start: usize,
    pub end: usize,
}

impl ChunkIndex {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Complete chunks plus the trailing partial segment, if any.
///
/// The partial segment never produces a chunk model; it is buffered until it
/// fills.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPartition {
    pub chunks: Vec<ChunkIndex>,
    pub incomplete: Option<ChunkIndex>,
}

/// Split `[0, len)` into disjoint consecutive chunks of length `chunk_len`.
pub fn split_chunks(frame: &TimeSeriesFrame, chunk_len: usize) -> Result<ChunkPartition> {
    if chunk_len == 0 {
        return Err(RewtsError::Parameter("chunk length must be >= 1".into()));
    }
    let n = frame.len();
    let complete = n / chunk_len;
    let chunks = (0..complete)
        .map(|i| ChunkIndex {
            chunk_id: i,
            start: i * chunk_len,
            end: (i + 1) * chunk_len,
        })
        .collect::<Vec<_>>();
    let incomplete = if n % chunk_len != 0 {
        Some(ChunkIndex {
            chunk_id: complete,
            start: complete * chunk_len,
            end: n,
        })
    } else {
        None
    };
    Ok(ChunkPartition { chunks, incomplete })
}

/// Per-feature standardization parameters, fitted on a single chunk.
///
/// Feature order matches [`TimeSeriesFrame::feature_rows`]: target first,
/// then covariates. Standard deviations are population deviations floored
/// at [`EPS_STD`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    /// `(x - mean) / std`, column per feature.
    pub fn apply(&self, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_width(rows.ncols())?;
        let mut out = rows.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.means[j]) / self.stds[j]);
        }
        Ok(out)
    }

    /// Exact inverse of [`Scaler::apply`].
    pub fn invert(&self, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_width(rows.ncols())?;
        let mut out = rows.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| v * self.stds[j] + self.means[j]);
        }
        Ok(out)
    }

    pub fn scale_value(&self, feature: usize, v: f64) -> f64 {
        (v - self.means[feature]) / self.stds[feature]
    }

    pub fn unscale_value(&self, feature: usize, v: f64) -> f64 {
        v * self.stds[feature] + self.means[feature]
    }

    fn check_width(&self, ncols: usize) -> Result<()> {
        if ncols != self.n_features() {
            return Err(RewtsError::Shape(format!(
                "expected {} feature columns, got {ncols}",
                self.n_features()
            )));
        }
        Ok(())
    }
}

/// Fit per-feature mean and population std over `range` only.
pub fn fit_scaler(frame: &TimeSeriesFrame, range: ChunkIndex) -> Result<Scaler> {
    frame.check_range(range.start, range.end)?;
    if range.len() < 2 {
        return Err(RewtsError::Parameter(format!(
            "scaler range must have at least 2 rows, got {}",
            range.len()
        )));
    }
    let rows = frame.feature_rows(range.start, range.end)?;
    let means = rows.mean_axis(Axis(0)).expect("non-empty rows");
    let n = rows.nrows() as f64;
    let stds = rows
        .columns()
        .into_iter()
        .zip(means.iter())
        .map(|(col, &m)| {
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            var.sqrt().max(EPS_STD)
        })
        .collect::<Vec<_>>();
    Ok(Scaler {
        means: means.to_vec(),
        stds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn frame_from(values: Vec<f64>) -> TimeSeriesFrame {
        TimeSeriesFrame::univariate(1.0, values).unwrap()
    }

    #[test]
    fn split_paper_dimensions() {
        let frame = frame_from(vec![0.0; 8000]);
        let part = split_chunks(&frame, 500).unwrap();
        assert_eq!(part.chunks.len(), 16);
        assert!(part.incomplete.is_none());
    }

    #[test]
    fn split_exact_fit() {
        let frame = frame_from(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let part = split_chunks(&frame, 5).unwrap();
        assert_eq!(part.chunks, vec![ChunkIndex { chunk_id: 0, start: 0, end: 5 }]);
        assert!(part.incomplete.is_none());
    }

    #[test]
    fn split_with_remainder() {
        let frame = frame_from(vec![0.0; 7]);
        let part = split_chunks(&frame, 3).unwrap();
        assert_eq!(part.chunks.len(), 2);
        assert_eq!(part.incomplete, Some(ChunkIndex { chunk_id: 2, start: 6, end: 7 }));
    }

    #[test]
    fn split_rejects_zero_length() {
        let frame = frame_from(vec![0.0; 4]);
        assert!(matches!(split_chunks(&frame, 0), Err(RewtsError::Parameter(_))));
    }

    #[test]
    fn scaler_two_point_case() {
        let frame = frame_from(vec![0.0, 2.0]);
        let s = fit_scaler(&frame, ChunkIndex { chunk_id: 0, start: 0, end: 2 }).unwrap();
        assert_abs_diff_eq!(s.means[0], 1.0);
        assert_abs_diff_eq!(s.stds[0], 1.0);
    }

    #[test]
    fn scaler_floors_constant_chunk() {
        let frame = frame_from(vec![5.0, 5.0, 5.0]);
        let s = fit_scaler(&frame, ChunkIndex { chunk_id: 0, start: 0, end: 3 }).unwrap();
        assert_abs_diff_eq!(s.means[0], 5.0);
        assert_eq!(s.stds[0], EPS_STD);
    }

    #[test]
    fn scaler_sine_moments() {
        // A = 20 over full periods: mean ~ 0, std ~ 20 / sqrt(2) within 5%.
        let n = 1000;
        let periods = 5.0;
        let values = (0..n)
            .map(|k| 20.0 * (2.0 * std::f64::consts::PI * periods * k as f64 / n as f64).sin())
            .collect::<Vec<_>>();
        let frame = frame_from(values);
        let s = fit_scaler(&frame, ChunkIndex { chunk_id: 0, start: 0, end: n }).unwrap();
        let expected = 20.0 / 2f64.sqrt();
        assert!(s.means[0].abs() < 0.05 * expected);
        assert!((s.stds[0] - expected).abs() < 0.05 * expected);
    }

    #[test]
    fn scaler_out_of_bounds_range() {
        let frame = frame_from(vec![1.0, 2.0, 3.0]);
        let err = fit_scaler(&frame, ChunkIndex { chunk_id: 0, start: 1, end: 9 });
        assert!(matches!(err, Err(RewtsError::Index(_))));
    }

    #[test]
    fn apply_matches_hand_arithmetic() {
        let s = Scaler { means: vec![1.0], stds: vec![2.0] };
        let out = s.apply(array![[5.0]].view()).unwrap();
        assert_abs_diff_eq!(out[[0, 0]], 2.0);
        let at_mean = s.apply(array![[1.0]].view()).unwrap();
        assert_abs_diff_eq!(at_mean[[0, 0]], 0.0);
    }

    #[test]
    fn apply_rejects_width_mismatch() {
        let s = Scaler { means: vec![0.0, 0.0], stds: vec![1.0, 1.0] };
        assert!(matches!(s.apply(array![[1.0]].view()), Err(RewtsError::Shape(_))));
    }

    #[test]
    fn frame_rejects_nan() {
        assert!(TimeSeriesFrame::univariate(1.0, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn frame_rejects_covariate_row_mismatch() {
        let cov = Array2::zeros((3, 1));
        assert!(TimeSeriesFrame::new(0, 1.0, vec![1.0, 2.0], cov, vec![false]).is_err());
    }

    proptest! {
        #[test]
        fn chunk_partition_covers_without_overlap(len in 1usize..400, lc in 1usize..50) {
            let frame = frame_from(vec![0.0; len]);
            let part = split_chunks(&frame, lc).unwrap();
            let mut cursor = 0usize;
            for c in &part.chunks {
                prop_assert_eq!(c.start, cursor);
                prop_assert_eq!(c.len(), lc);
                cursor = c.end;
            }
            if let Some(rem) = part.incomplete {
                prop_assert_eq!(rem.start, cursor);
                prop_assert!(rem.len() < lc);
                cursor = rem.end;
            }
            prop_assert_eq!(cursor, len);
        }

        #[test]
        fn scaler_round_trip(values in proptest::collection::vec(-1e6f64..1e6, 2..60)) {
            let frame = frame_from(values.clone());
            let range = ChunkIndex { chunk_id: 0, start: 0, end: values.len() };
            let s = fit_scaler(&frame, range).unwrap();
            let rows = frame.feature_rows(0, values.len()).unwrap();
            let back = s.invert(s.apply(rows.view()).unwrap().view()).unwrap();
            for (a, b) in rows.iter().zip(back.iter()) {
                let tol = 1e-12 * a.abs().max(1.0);
                prop_assert!((a - b).abs() <= tol);
            }
        }

        #[test]
        fn scaling_data_scales_std(values in proptest::collection::vec(-100f64..100.0, 4..40),
                                   c in prop_oneof![-50f64..-0.5, 0.5f64..50.0]) {
            let range = ChunkIndex { chunk_id: 0, start: 0, end: values.len() };
            let base = fit_scaler(&frame_from(values.clone()), range).unwrap();
            // only meaningful above the floor
            prop_assume!(base.stds[0] > 1e-6);
            let scaled = fit_scaler(
                &frame_from(values.iter().map(|v| v * c).collect()),
                range,
            ).unwrap();
            let tol = 1e-9 * base.stds[0].abs().max(1.0) * c.abs();
            prop_assert!((scaled.stds[0] - base.stds[0] * c.abs()).abs() <= tol.max(1e-9));
            let mtol = 1e-9 * (base.means[0].abs().max(1.0)) * c.abs();
            prop_assert!((scaled.means[0] - base.means[0] * c).abs() <= mtol.max(1e-9));
        }
    }
}
