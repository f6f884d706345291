//! Fusion of prediction error and class relevance into a per-frame corner
//! case score, its normalization over time, patch localization and
//! thresholding into events.
//!
//! Per frame the pipeline is
//!
//! 1. predict the frame from its `n` predecessors,
//! 2. low-pass both prediction and frame and square their difference,
//! 3. zero every pixel whose class is not relevant,
//! 4. sum the remaining errors weighted by `1 - h / (H - 1)` where `h` is the
//!    row counted from the bottom (bottom row weight 1, top row weight 0).
//!
//! Raw scores are then min-max normalized over a set of frames, either the
//! whole run (offline) or every frame seen so far (online), and runs of
//! frames at or above the threshold become events.

use std::collections::VecDeque;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{ensure_same_shape, gaussian_blur, BlurConfig, Frame, RealImage, Shape};
use crate::metrics::mse_real;
use crate::prediction::{FrameWindow, Predictor, PredictorKind};
use crate::segmentation::{relevance_mask, ClassMask, ClassTable, RelevanceMap};

/// Per-pixel squared prediction error, channel-averaged for color input.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ErrorMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ZeroDimension { height, width });
        }
        if values.len() != height * width {
            return Err(Error::InvalidFrame(format!(
                "error map length {} does not match {height}x{width}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidFrame(format!(
                "error map values must be non-negative, found {v}"
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Squared difference of the (optionally blurred) prediction and frame.
pub fn error_map(pred: &RealImage, actual: &Frame, blur: Option<&BlurConfig>) -> Result<ErrorMap> {
    ensure_same_shape(pred.shape(), actual.shape())?;
    let actual = actual.to_real();
    let (pred, actual) = match blur {
        Some(cfg) => {
            cfg.validate()?;
            (gaussian_blur(pred, cfg), gaussian_blur(&actual, cfg))
        }
        None => (pred.clone(), actual),
    };
    let ch = pred.channels();
    let values = pred
        .data()
        .chunks_exact(ch)
        .zip(actual.data().chunks_exact(ch))
        .map(|(p, a)| {
            if ch == 1 {
                let d = p[0] - a[0];
                d * d
            } else {
                p.iter()
                    .zip(a)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    / ch as f64
            }
        })
        .collect();
    Ok(ErrorMap {
        height: pred.height(),
        width: pred.width(),
        values,
    })
}

/// Keeps errors of relevant pixels and zeroes the rest.
pub fn mask_relevant_errors(errors: &ErrorMap, relevance: &RelevanceMap) -> Result<ErrorMap> {
    if (errors.height, errors.width) != (relevance.height(), relevance.width()) {
        return Err(Error::ShapeMismatch {
            left: format!("{}x{}", errors.height, errors.width),
            right: format!("{}x{}", relevance.height(), relevance.width()),
        });
    }
    let values = errors
        .values
        .iter()
        .zip(relevance.values())
        .map(|(&e, &keep)| if keep { e } else { 0.0 })
        .collect();
    Ok(ErrorMap {
        height: errors.height,
        width: errors.width,
        values,
    })
}

/// Location weight per row, indexed top-down.
pub fn row_weights(height: usize) -> Result<Vec<f64>> {
    if height < 2 {
        return Err(Error::DegenerateGeometry);
    }
    let span = (height - 1) as f64;
    Ok((0..height)
        .map(|row| {
            let from_bottom = (height - 1 - row) as f64;
            1.0 - from_bottom / span
        })
        .collect())
}

/// Location-weighted error sum, accumulated in row-major order.
pub fn weighted_error_score(errors: &ErrorMap) -> Result<f64> {
    let weights = row_weights(errors.height)?;
    let mut total = 0.0;
    for (row, w) in errors.values.chunks_exact(errors.width).zip(&weights) {
        for &e in row {
            total += e * w;
        }
    }
    Ok(total)
}

/// Patch-wise scores on a grid of `patch_size` tiles; the last row and
/// column of tiles may be smaller.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub rows: usize,
    pub cols: usize,
    pub raw: Vec<f64>,
    pub normalized: Option<Vec<f64>>,
}

impl PatchGrid {
    pub fn raw_at(&self, row: usize, col: usize) -> f64 {
        self.raw[row * self.cols + col]
    }
}

pub fn patch_scores(errors: &ErrorMap, patch_size: usize) -> Result<PatchGrid> {
    if patch_size == 0 {
        return Err(Error::InvalidParameter("patch size must be >= 1".into()));
    }
    let weights = row_weights(errors.height)?;
    let rows = errors.height.div_ceil(patch_size);
    let cols = errors.width.div_ceil(patch_size);
    let mut raw = vec![0.0; rows * cols];
    for (y, (row, w)) in errors.values.chunks_exact(errors.width).zip(&weights).enumerate() {
        let base = (y / patch_size) * cols;
        for (x, &e) in row.iter().enumerate() {
            raw[base + x / patch_size] += e * w;
        }
    }
    Ok(PatchGrid {
        patch_size,
        rows,
        cols,
        raw,
        normalized: None,
    })
}

/// Which frames form the min/max reference set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NormalizationMode {
    /// Every frame of the run.
    #[default]
    OfflineGlobal,
    /// Every frame up to and including the current one.
    OnlineRunning,
}

impl FromStr for NormalizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "offline" | "offline_global" => Ok(Self::OfflineGlobal),
            "online" | "online_running" => Ok(Self::OnlineRunning),
            other => Err(Error::InvalidParameter(format!(
                "unknown normalization mode '{other}' (expected offline or online)"
            ))),
        }
    }
}

/// Reference set for patch normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PatchNormalization {
    /// Each patch position over its own time series.
    #[default]
    PerPosition,
    /// All patches of all frames in the reference set.
    Global,
}

impl FromStr for PatchNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_position" | "position" => Ok(Self::PerPosition),
            "global" => Ok(Self::Global),
            other => Err(Error::InvalidParameter(format!(
                "unknown patch normalization '{other}' (expected per_position or global)"
            ))),
        }
    }
}

/// Running min/max.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreRange {
    min: f64,
    max: f64,
}

impl Default for ScoreRange {
    fn default() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl ScoreRange {
    pub fn of(values: &[f64]) -> Self {
        let mut r = Self::default();
        values.iter().for_each(|&v| r.update(v));
        r
    }

    pub fn update(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    /// `(v - min) / (max - min)`, or 0 when the range is degenerate.
    pub fn normalize(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }
}

pub fn normalize_series(raw: &[f64], mode: NormalizationMode) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(match mode {
        NormalizationMode::OfflineGlobal => {
            let range = ScoreRange::of(raw);
            raw.iter().map(|&v| range.normalize(v)).collect()
        }
        NormalizationMode::OnlineRunning => {
            let mut range = ScoreRange::default();
            raw.iter()
                .map(|&v| {
                    range.update(v);
                    range.normalize(v)
                })
                .collect()
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRecord {
    pub frame_index: u64,
    /// No prediction was possible; both scores are 0.
    pub warmup: bool,
    pub raw: f64,
    pub normalized: f64,
    /// MSE of the error map the score was computed from.
    pub mse: f64,
    /// MSE of the prediction without low-pass filtering.
    pub mse_unblurred: f64,
    pub patches: Option<PatchGrid>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ScoreSeries {
    pub records: Vec<ScoreRecord>,
}

impl ScoreSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn raw(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.raw).collect()
    }

    pub fn normalized(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.normalized).collect()
    }

    /// First frame with the highest normalized score.
    pub fn argmax(&self) -> Option<&ScoreRecord> {
        self.records
            .iter()
            .reduce(|best, r| if r.normalized > best.normalized { r } else { best })
    }

    /// Fills `normalized` for the whole series in place. Warm-up frames are
    /// excluded from the reference set and stay at 0.
    pub fn normalize(&mut self, mode: NormalizationMode, patch_mode: PatchNormalization) -> Result<()> {
        let active: Vec<usize> = (0..self.records.len())
            .filter(|&i| !self.records[i].warmup)
            .collect();
        let raw: Vec<f64> = active.iter().map(|&i| self.records[i].raw).collect();
        let normalized = normalize_series(&raw, mode)?;
        for r in &mut self.records {
            r.normalized = 0.0;
        }
        for (&i, v) in active.iter().zip(normalized) {
            self.records[i].normalized = v;
        }

        let Some(cells) = active
            .first()
            .and_then(|&i| self.records[i].patches.as_ref())
            .map(|g| g.raw.len())
        else {
            return Ok(());
        };
        let mut norm: Vec<Vec<f64>> = vec![Vec::with_capacity(cells); active.len()];
        match patch_mode {
            PatchNormalization::PerPosition => {
                for cell in 0..cells {
                    let series: Vec<f64> = active
                        .iter()
                        .map(|&i| patch_raw(&self.records[i], cell))
                        .collect();
                    for (k, v) in normalize_series(&series, mode)?.into_iter().enumerate() {
                        norm[k].push(v);
                    }
                }
            }
            PatchNormalization::Global => {
                let mut range = ScoreRange::default();
                if mode == NormalizationMode::OfflineGlobal {
                    for &i in &active {
                        (0..cells).for_each(|c| range.update(patch_raw(&self.records[i], c)));
                    }
                }
                for (k, &i) in active.iter().enumerate() {
                    if mode == NormalizationMode::OnlineRunning {
                        (0..cells).for_each(|c| range.update(patch_raw(&self.records[i], c)));
                    }
                    norm[k] = (0..cells)
                        .map(|c| range.normalize(patch_raw(&self.records[i], c)))
                        .collect();
                }
            }
        }
        for (k, &i) in active.iter().enumerate() {
            if let Some(grid) = self.records[i].patches.as_mut() {
                grid.normalized = Some(std::mem::take(&mut norm[k]));
            }
        }
        for r in self.records.iter_mut().filter(|r| r.warmup) {
            if let Some(grid) = r.patches.as_mut() {
                grid.normalized = Some(vec![0.0; grid.raw.len()]);
            }
        }
        Ok(())
    }
}

fn patch_raw(record: &ScoreRecord, cell: usize) -> f64 {
    record.patches.as_ref().map_or(0.0, |g| g.raw[cell])
}

/// A maximal run of frames scoring at or above the threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub id: u32,
    pub start: u64,
    pub end: u64,
    pub peak_frame: u64,
    pub peak_score: f64,
}

pub fn validate_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(threshold))
    }
}

/// Incremental run-length grouping; feeds one frame at a time so the online
/// detector can label rows as they are produced.
#[derive(Clone, Debug)]
pub struct EventTracker {
    threshold: f64,
    open: Option<Event>,
    closed: Vec<Event>,
    next_id: u32,
}

impl EventTracker {
    pub fn new(threshold: f64) -> Result<Self> {
        validate_threshold(threshold)?;
        Ok(Self {
            threshold,
            open: None,
            closed: Vec::new(),
            next_id: 1,
        })
    }

    /// Returns the id of the event the frame belongs to, if any.
    pub fn push(&mut self, frame_index: u64, score: f64) -> Option<u32> {
        if score >= self.threshold {
            let ev = self.open.get_or_insert_with(|| {
                let id = self.next_id;
                self.next_id += 1;
                Event {
                    id,
                    start: frame_index,
                    end: frame_index,
                    peak_frame: frame_index,
                    peak_score: score,
                }
            });
            ev.end = frame_index;
            if score > ev.peak_score {
                ev.peak_score = score;
                ev.peak_frame = frame_index;
            }
            Some(ev.id)
        } else {
            if let Some(ev) = self.open.take() {
                self.closed.push(ev);
            }
            None
        }
    }

    pub fn finish(mut self) -> Vec<Event> {
        if let Some(ev) = self.open.take() {
            self.closed.push(ev);
        }
        self.closed
    }
}

pub fn threshold_events(series: &ScoreSeries, threshold: f64) -> Result<Vec<Event>> {
    let mut tracker = EventTracker::new(threshold)?;
    for r in &series.records {
        tracker.push(r.frame_index, r.normalized);
    }
    Ok(tracker.finish())
}

/// Event id per record, aligned with `series.records`.
pub fn event_ids(series: &ScoreSeries, events: &[Event]) -> Vec<Option<u32>> {
    series
        .records
        .iter()
        .map(|r| {
            events
                .iter()
                .find(|e| (e.start..=e.end).contains(&r.frame_index))
                .map(|e| e.id)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct DetectorConfig {
    /// `None` scores unfiltered errors.
    pub blur: Option<BlurConfig>,
    pub class_table: ClassTable,
    /// `None` disables patch localization.
    pub patch_size: Option<usize>,
    pub normalization: NormalizationMode,
    pub patch_normalization: PatchNormalization,
    pub threshold: f64,
    pub predictor: Predictor,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            blur: Some(BlurConfig::default()),
            class_table: ClassTable::default(),
            patch_size: Some(32),
            normalization: NormalizationMode::OfflineGlobal,
            patch_normalization: PatchNormalization::PerPosition,
            threshold: 0.5,
            predictor: Predictor::new(PredictorKind::LinearExtrapolation, 2)
                .expect("default predictor is valid"),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        validate_threshold(self.threshold)?;
        if let Some(b) = &self.blur {
            b.validate()?;
        }
        if self.patch_size == Some(0) {
            return Err(Error::InvalidParameter("patch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Raw, un-normalized outcome of scoring one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameScore {
    pub raw: f64,
    pub mse: f64,
    pub mse_unblurred: f64,
    pub patches: Option<PatchGrid>,
}

/// Scores one frame from its history; every step is a pure function of
/// the arguments.
pub fn score_frame(
    history: &[Frame],
    frame_index: u64,
    actual: &Frame,
    mask: &ClassMask,
    cfg: &DetectorConfig,
) -> Result<FrameScore> {
    let window = FrameWindow::new(history)?;
    let pred = cfg.predictor.predict(&window, frame_index)?;
    ensure_same_shape(pred.shape(), actual.shape())?;
    let errors = error_map(&pred, actual, cfg.blur.as_ref())?;
    let mse = errors.mean();
    let mse_unblurred = if cfg.blur.is_some() {
        mse_real(&pred, &actual.to_real())?
    } else {
        mse
    };
    let relevant = mask_relevant_errors(&errors, &relevance_mask(mask, &cfg.class_table))?;
    let raw = weighted_error_score(&relevant)?;
    let patches = cfg
        .patch_size
        .map(|p| patch_scores(&relevant, p))
        .transpose()?;
    Ok(FrameScore {
        raw,
        mse,
        mse_unblurred,
        patches,
    })
}

fn warmup_record(frame_index: u64) -> ScoreRecord {
    ScoreRecord {
        frame_index,
        warmup: true,
        raw: 0.0,
        normalized: 0.0,
        mse: 0.0,
        mse_unblurred: 0.0,
        patches: None,
    }
}

fn record_from(frame_index: u64, score: FrameScore) -> ScoreRecord {
    ScoreRecord {
        frame_index,
        warmup: false,
        raw: score.raw,
        normalized: 0.0,
        mse: score.mse,
        mse_unblurred: score.mse_unblurred,
        patches: score.patches,
    }
}

fn mask_shape(mask: &ClassMask) -> String {
    format!("{}x{}", mask.height(), mask.width())
}

fn check_alignment(reference: Shape, index: u64, frame: &Frame, mask: Option<&ClassMask>) -> Result<()> {
    if frame.shape() != reference {
        return Err(Error::ShapeDrift {
            index,
            expected: reference.to_string(),
            got: frame.shape().to_string(),
        });
    }
    let mask = mask.ok_or(Error::MissingMask(index))?;
    if (mask.height(), mask.width()) != (frame.height(), frame.width()) {
        return Err(Error::ShapeDrift {
            index,
            expected: format!("{}x{}", frame.height(), frame.width()),
            got: mask_shape(mask),
        });
    }
    Ok(())
}

/// Frames and masks of one sequence, aligned by position.
#[derive(Clone, Debug, Default)]
pub struct DetectorInput {
    pub indices: Vec<u64>,
    pub frames: Vec<Frame>,
    pub masks: Vec<ClassMask>,
}

impl DetectorInput {
    /// Numbers the frames `1..=len`.
    pub fn from_frames(frames: Vec<Frame>, masks: Vec<ClassMask>) -> Self {
        Self {
            indices: (1..=frames.len() as u64).collect(),
            frames,
            masks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.frames.first().ok_or(Error::EmptySeries)?;
        if self.indices.len() != self.frames.len() {
            return Err(Error::InvalidParameter(format!(
                "{} indices for {} frames",
                self.indices.len(),
                self.frames.len()
            )));
        }
        for (k, (&index, frame)) in self.indices.iter().zip(&self.frames).enumerate() {
            check_alignment(first.shape(), index, frame, self.masks.get(k))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DetectorOutput {
    pub series: ScoreSeries,
    pub events: Vec<Event>,
}

impl DetectorOutput {
    pub fn event_ids(&self) -> Vec<Option<u32>> {
        event_ids(&self.series, &self.events)
    }
}

/// Raw scores of a whole sequence. Frames are scored on `workers` threads
/// and merged back in index order, so the result does not depend on the
/// worker count.
pub fn score_sequence(input: &DetectorInput, cfg: &DetectorConfig, workers: usize) -> Result<ScoreSeries> {
    cfg.validate()?;
    input.validate()?;
    let n = cfg.predictor.window();
    let len = input.frames.len();
    let score = |t: usize| -> Result<ScoreRecord> {
        let index = input.indices[t];
        if t < n {
            return Ok(warmup_record(index));
        }
        let s = score_frame(&input.frames[t - n..t], index, &input.frames[t], &input.masks[t], cfg)?;
        Ok(record_from(index, s))
    };
    let records = if workers <= 1 {
        (0..len).map(score).collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..len).into_par_iter().map(score).collect::<Result<Vec<_>>>())?
    };
    Ok(ScoreSeries { records })
}

/// Full pipeline: score, normalize with the configured mode, threshold.
pub fn run_detector(input: &DetectorInput, cfg: &DetectorConfig, workers: usize) -> Result<DetectorOutput> {
    let mut series = score_sequence(input, cfg, workers)?;
    if series.records.iter().all(|r| r.warmup) {
        return Err(Error::SequenceTooShort {
            got: series.len(),
            window: cfg.predictor.window(),
        });
    }
    series.normalize(cfg.normalization, cfg.patch_normalization)?;
    let events = threshold_events(&series, cfg.threshold)?;
    Ok(DetectorOutput { series, events })
}

/// One processed frame of the streaming detector.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamRow {
    pub record: ScoreRecord,
    pub event_id: Option<u32>,
}

/// Causal detector: each frame is scored and normalized against the frames
/// seen so far and never revised afterwards.
#[derive(Debug)]
pub struct OnlineDetector {
    cfg: DetectorConfig,
    history: VecDeque<Frame>,
    shape: Option<Shape>,
    range: ScoreRange,
    patch_ranges: Vec<ScoreRange>,
    events: EventTracker,
}

impl OnlineDetector {
    pub fn new(cfg: DetectorConfig) -> Result<Self> {
        cfg.validate()?;
        let events = EventTracker::new(cfg.threshold)?;
        Ok(Self {
            history: VecDeque::with_capacity(cfg.predictor.window() + 1),
            cfg,
            shape: None,
            range: ScoreRange::default(),
            patch_ranges: Vec::new(),
            events,
        })
    }

    pub fn push(&mut self, frame_index: u64, frame: Frame, mask: &ClassMask) -> Result<StreamRow> {
        let shape = *self.shape.get_or_insert(frame.shape());
        check_alignment(shape, frame_index, &frame, Some(mask))?;
        let n = self.cfg.predictor.window();

        let mut record = if self.history.len() < n {
            warmup_record(frame_index)
        } else {
            let history: Vec<Frame> = self.history.iter().cloned().collect();
            let s = score_frame(&history, frame_index, &frame, mask, &self.cfg)?;
            record_from(frame_index, s)
        };

        if !record.warmup {
            self.range.update(record.raw);
            record.normalized = self.range.normalize(record.raw);
            if let Some(grid) = record.patches.as_mut() {
                grid.normalized = Some(self.normalize_patches(&grid.raw));
            }
        }
        let event_id = self.events.push(frame_index, record.normalized);

        self.history.push_back(frame);
        if self.history.len() > n {
            self.history.pop_front();
        }
        Ok(StreamRow { record, event_id })
    }

    fn normalize_patches(&mut self, raw: &[f64]) -> Vec<f64> {
        match self.cfg.patch_normalization {
            PatchNormalization::PerPosition => {
                if self.patch_ranges.len() != raw.len() {
                    self.patch_ranges = vec![ScoreRange::default(); raw.len()];
                }
                raw.iter()
                    .zip(self.patch_ranges.iter_mut())
                    .map(|(&v, r)| {
                        r.update(v);
                        r.normalize(v)
                    })
                    .collect()
            }
            PatchNormalization::Global => {
                if self.patch_ranges.is_empty() {
                    self.patch_ranges.push(ScoreRange::default());
                }
                let r = &mut self.patch_ranges[0];
                raw.iter().for_each(|&v| r.update(v));
                raw.iter().map(|&v| r.normalize(v)).collect()
            }
        }
    }

    /// Closes any open event and returns all events.
    pub fn finish(self) -> Vec<Event> {
        self.events.finish()
    }
}

/// Nearest-neighbor upsampling of normalized patch scores to an 8-bit
/// grayscale image of the frame size.
pub fn patch_heatmap(grid: &PatchGrid, height: usize, width: usize) -> Result<Frame> {
    let values = grid.normalized.as_deref().unwrap_or(&grid.raw);
    let mut data = Vec::with_capacity(height * width);
    for y in 0..height {
        let pr = (y / grid.patch_size).min(grid.rows - 1);
        for x in 0..width {
            let pc = (x / grid.patch_size).min(grid.cols - 1);
            let v = values[pr * grid.cols + pc];
            data.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    Frame::new(height, width, 1, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::{PERSON, ROAD};

    fn emap(h: usize, w: usize, v: Vec<f64>) -> ErrorMap {
        ErrorMap::new(h, w, v).unwrap()
    }

    #[test]
    fn error_map_examples() {
        let a = Frame::new(2, 2, 1, vec![1, 2, 3, 4]).unwrap();
        let e = error_map(&a.to_real(), &a, Some(&BlurConfig::default())).unwrap();
        assert!(e.values().iter().all(|&v| v == 0.0));

        let pred = RealImage::filled(12, 9, 1, 40.0).unwrap();
        let actual = Frame::filled(12, 9, 1, 43).unwrap();
        for blur in [None, Some(BlurConfig::default())] {
            let e = error_map(&pred, &actual, blur.as_ref()).unwrap();
            assert!(e.values().iter().all(|&v| (v - 9.0).abs() < 1e-9));
        }
        let other = Frame::filled(12, 8, 1, 0).unwrap();
        assert!(error_map(&pred, &other, None).is_err());
    }

    #[test]
    fn error_map_color_averages_channels() {
        let pred = RealImage::new(1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let actual = Frame::new(1, 1, 3, vec![0, 0, 0]).unwrap();
        let e = error_map(&pred, &actual, None).unwrap();
        assert_eq!(e.values(), &[14.0 / 3.0]);
    }

    #[test]
    fn relevance_masking() {
        let e = emap(2, 2, vec![1.0, 4.0, 9.0, 16.0]);
        let none = RelevanceMap::new(2, 2, vec![false; 4]).unwrap();
        assert_eq!(mask_relevant_errors(&e, &none).unwrap().values(), &[0.0; 4]);
        let all = RelevanceMap::new(2, 2, vec![true; 4]).unwrap();
        assert_eq!(mask_relevant_errors(&e, &all).unwrap(), e);
        let one = RelevanceMap::new(2, 2, vec![false, true, false, false]).unwrap();
        assert_eq!(
            mask_relevant_errors(&e, &one).unwrap().values(),
            &[0.0, 4.0, 0.0, 0.0]
        );
        let wrong = RelevanceMap::new(1, 4, vec![true; 4]).unwrap();
        assert!(mask_relevant_errors(&e, &wrong).is_err());
    }

    #[test]
    fn weighted_score_examples() {
        assert_eq!(weighted_error_score(&emap(3, 1, vec![2.0, 2.0, 2.0])).unwrap(), 3.0);
        let top_only = emap(4, 3, vec![5.0, 5.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(weighted_error_score(&top_only).unwrap(), 0.0);
        assert!(matches!(
            weighted_error_score(&emap(1, 4, vec![1.0; 4])),
            Err(Error::DegenerateGeometry)
        ));

        let mut bottom = vec![0.0; 5 * 4];
        let mut higher = vec![0.0; 5 * 4];
        bottom[4 * 4 + 1] = 7.0;
        higher[3 * 4 + 1] = 7.0;
        assert!(
            weighted_error_score(&emap(5, 4, bottom)).unwrap()
                > weighted_error_score(&emap(5, 4, higher)).unwrap()
        );
    }

    #[test]
    fn patch_examples() {
        let e = emap(4, 6, (0..24).map(|v| v as f64).collect());
        let whole = patch_scores(&e, 8).unwrap();
        assert_eq!((whole.rows, whole.cols), (1, 1));
        assert_eq!(whole.raw[0], weighted_error_score(&e).unwrap());

        let ones = emap(4, 6, vec![1.0; 24]);
        let g = patch_scores(&ones, 2).unwrap();
        assert_eq!((g.rows, g.cols), (2, 3));
        assert_eq!(g.raw.iter().sum::<f64>(), weighted_error_score(&ones).unwrap());

        let mut blob = vec![0.0; 24];
        blob[2 * 6 + 4] = 3.0;
        blob[3 * 6 + 5] = 1.0;
        let g = patch_scores(&emap(4, 6, blob), 2).unwrap();
        assert_eq!(g.raw.iter().filter(|&&v| v != 0.0).count(), 1);
        assert!(g.raw_at(1, 2) > 0.0);

        let ragged = patch_scores(&emap(5, 7, vec![1.0; 35]), 3).unwrap();
        assert_eq!((ragged.rows, ragged.cols), (2, 3));
        assert!(patch_scores(&ones, 0).is_err());
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(
            normalize_series(&[2.0, 4.0, 6.0], NormalizationMode::OfflineGlobal).unwrap(),
            vec![0.0, 0.5, 1.0]
        );
        assert_eq!(
            normalize_series(&[2.0, 4.0, 6.0], NormalizationMode::OnlineRunning).unwrap(),
            vec![0.0, 1.0, 1.0]
        );
        for mode in [NormalizationMode::OfflineGlobal, NormalizationMode::OnlineRunning] {
            assert_eq!(normalize_series(&[3.0; 4], mode).unwrap(), vec![0.0; 4]);
            assert!(matches!(normalize_series(&[], mode), Err(Error::EmptySeries)));
        }
    }

    fn series_of(scores: &[f64]) -> ScoreSeries {
        ScoreSeries {
            records: scores
                .iter()
                .enumerate()
                .map(|(i, &s)| ScoreRecord {
                    frame_index: i as u64 + 1,
                    warmup: false,
                    raw: s,
                    normalized: s,
                    mse: 0.0,
                    mse_unblurred: 0.0,
                    patches: None,
                })
                .collect(),
        }
    }

    #[test]
    fn threshold_examples() {
        let s = series_of(&[0.0, 0.6, 0.7, 0.2, 0.9]);
        let ev = threshold_events(&s, 0.5).unwrap();
        assert_eq!(ev.len(), 2);
        assert_eq!((ev[0].start, ev[0].end, ev[0].peak_frame), (2, 3, 3));
        assert_eq!((ev[1].start, ev[1].end, ev[1].peak_frame), (5, 5, 5));
        assert_eq!(ev[1].peak_score, 0.9);
        assert_eq!(event_ids(&s, &ev), vec![None, Some(1), Some(1), None, Some(2)]);

        assert!(threshold_events(&series_of(&[0.1, 0.2]), 0.5).unwrap().is_empty());
        let top = threshold_events(&series_of(&[0.3, 1.0, 0.99, 1.0]), 0.999_999).unwrap();
        assert_eq!(top.iter().map(|e| e.peak_frame).collect::<Vec<_>>(), vec![2, 4]);

        for bad in [0.0, 1.0, -0.2, f64::NAN] {
            assert!(threshold_events(&s, bad).is_err());
        }
    }

    #[test]
    fn series_normalization_skips_warmup() {
        let mut s = series_of(&[0.0, 0.0, 2.0, 4.0, 6.0]);
        s.records[0].warmup = true;
        s.records[1].warmup = true;
        s.normalize(NormalizationMode::OfflineGlobal, PatchNormalization::PerPosition)
            .unwrap();
        assert_eq!(s.normalized(), vec![0.0, 0.0, 0.0, 0.5, 1.0]);
    }

    fn grid(raw: Vec<f64>) -> Option<PatchGrid> {
        Some(PatchGrid {
            patch_size: 1,
            rows: 1,
            cols: raw.len(),
            raw,
            normalized: None,
        })
    }

    #[test]
    fn patch_normalization_modes() {
        let mut s = series_of(&[1.0, 2.0, 3.0]);
        s.records[0].patches = grid(vec![0.0, 10.0]);
        s.records[1].patches = grid(vec![1.0, 20.0]);
        s.records[2].patches = grid(vec![2.0, 10.0]);
        let mut per = s.clone();
        per.normalize(NormalizationMode::OfflineGlobal, PatchNormalization::PerPosition)
            .unwrap();
        let got: Vec<Vec<f64>> = per
            .records
            .iter()
            .map(|r| r.patches.as_ref().unwrap().normalized.clone().unwrap())
            .collect();
        assert_eq!(got, vec![vec![0.0, 0.0], vec![0.5, 1.0], vec![1.0, 0.0]]);

        s.normalize(NormalizationMode::OfflineGlobal, PatchNormalization::Global)
            .unwrap();
        let got = s.records[1].patches.as_ref().unwrap().normalized.clone().unwrap();
        assert_eq!(got, vec![0.05, 1.0]);
    }

    #[test]
    fn heatmap_upsamples_nearest() {
        let g = PatchGrid {
            patch_size: 2,
            rows: 2,
            cols: 2,
            raw: vec![0.0; 4],
            normalized: Some(vec![0.0, 1.0, 0.5, 0.0]),
        };
        let h = patch_heatmap(&g, 3, 4).unwrap();
        assert_eq!(
            h.data(),
            &[0, 0, 255, 255, 0, 0, 255, 255, 128, 128, 0, 0]
        );
    }

    fn static_input(len: usize, label: u8) -> DetectorInput {
        let frame = Frame::new(16, 16, 1, (0..256).map(|v| (v % 251) as u8).collect()).unwrap();
        let mask = ClassMask::filled(16, 16, label).unwrap();
        DetectorInput::from_frames(vec![frame; len], vec![mask; len])
    }

    #[test]
    fn static_scene_has_no_events() {
        let out = run_detector(&static_input(8, PERSON), &DetectorConfig::default(), 1).unwrap();
        assert!(out.series.records.iter().all(|r| r.raw == 0.0 && r.normalized == 0.0));
        assert!(out.events.is_empty());
        assert!(out.series.records[0].warmup && out.series.records[1].warmup);
        assert!(!out.series.records[2].warmup);
    }

    #[test]
    fn misaligned_inputs() {
        let mut input = static_input(4, ROAD);
        input.masks.pop();
        assert!(matches!(
            run_detector(&input, &DetectorConfig::default(), 1),
            Err(Error::MissingMask(4))
        ));

        let mut input = static_input(4, ROAD);
        input.frames[2] = Frame::filled(16, 15, 1, 0).unwrap();
        assert!(matches!(
            run_detector(&input, &DetectorConfig::default(), 1),
            Err(Error::ShapeDrift { index: 3, .. })
        ));

        let short = static_input(2, ROAD);
        assert!(run_detector(&short, &DetectorConfig::default(), 1).is_err());
        assert!(run_detector(&DetectorInput::default(), &DetectorConfig::default(), 1).is_err());
    }

    #[test]
    fn online_detector_matches_online_normalization() {
        let base = static_input(6, PERSON);
        let mut frames = base.frames.clone();
        // inject changes so raw scores differ between frames
        for (t, f) in frames.iter_mut().enumerate() {
            let mut d = f.clone().into_data();
            d[200 + t] = 255;
            *f = Frame::new(16, 16, 1, d).unwrap();
        }
        let input = DetectorInput::from_frames(frames, base.masks.clone());
        let cfg = DetectorConfig {
            normalization: NormalizationMode::OnlineRunning,
            ..DetectorConfig::default()
        };
        let offline = run_detector(&input, &cfg, 1).unwrap();
        let mut online = OnlineDetector::new(cfg).unwrap();
        for (k, f) in input.frames.iter().enumerate() {
            let row = online.push(input.indices[k], f.clone(), &input.masks[k]).unwrap();
            assert_eq!(row.record, offline.series.records[k]);
        }
        assert_eq!(online.finish(), offline.events);
    }
}
