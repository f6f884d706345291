//! Next-frame predictors: persistence, per-pixel linear extrapolation, and
//! predictions computed elsewhere and stored on disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imaging::{ensure_same_shape, list_sequence, load_frame, Frame, RealImage};
use crate::metrics::{prediction_metrics, Psnr, DEFAULT_MAX_VALUE};

/// The `n` frames preceding the target, oldest first.
#[derive(Clone, Copy, Debug)]
pub struct FrameWindow<'a> {
    frames: &'a [Frame],
}

impl<'a> FrameWindow<'a> {
    pub fn new(frames: &'a [Frame]) -> Result<Self> {
        let first = frames.first().ok_or(Error::WindowTooShort {
            kind: "any predictor",
            needed: 1,
            got: 0,
        })?;
        for f in &frames[1..] {
            ensure_same_shape(first.shape(), f.shape())?;
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &'a [Frame] {
        self.frames
    }

    pub fn last(&self) -> &'a Frame {
        &self.frames[self.frames.len() - 1]
    }
}

/// Index of prediction files keyed by the frame index they predict.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternalPredictions {
    dir: PathBuf,
    files: BTreeMap<u64, PathBuf>,
}

impl ExternalPredictions {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let files = list_sequence(dir)?.into_iter().collect();
        Ok(Self {
            dir: dir.to_path_buf(),
            files,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn load(&self, index: u64, like: &Frame) -> Result<Frame> {
        let path = self.files.get(&index).ok_or(Error::MissingPrediction(index))?;
        let frame = load_frame(path, like.channels() == 1)?;
        ensure_same_shape(like.shape(), frame.shape())?;
        Ok(frame)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PredictorKind {
    Persistence,
    LinearExtrapolation,
    External(ExternalPredictions),
}

impl PredictorKind {
    pub fn name(&self) -> &'static str {
        match self {
            PredictorKind::Persistence => "persistence",
            PredictorKind::LinearExtrapolation => "linear",
            PredictorKind::External(_) => "external",
        }
    }

    pub fn min_window(&self) -> usize {
        match self {
            PredictorKind::LinearExtrapolation => 2,
            _ => 1,
        }
    }
}

/// Predictor name as used on the command line; `external` needs a directory
/// and is resolved separately.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictorName {
    Persistence,
    Linear,
    External,
}

impl FromStr for PredictorName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "persistence" => Ok(Self::Persistence),
            "linear" => Ok(Self::Linear),
            "external" => Ok(Self::External),
            other => Err(Error::InvalidParameter(format!(
                "unknown predictor '{other}' (expected persistence, linear or external)"
            ))),
        }
    }
}

/// A predictor together with its history length `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Predictor {
    kind: PredictorKind,
    window: usize,
}

impl Predictor {
    pub fn new(kind: PredictorKind, window: usize) -> Result<Self> {
        if window < kind.min_window() {
            return Err(Error::WindowTooShort {
                kind: kind.name(),
                needed: kind.min_window(),
                got: window,
            });
        }
        Ok(Self { kind, window })
    }

    pub fn kind(&self) -> &PredictorKind {
        &self.kind
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Predicts frame `target_index` from the frames that precede it.
    pub fn predict(&self, window: &FrameWindow<'_>, target_index: u64) -> Result<RealImage> {
        predict_next(window, &self.kind, target_index)
    }
}

pub fn predict_next(
    window: &FrameWindow<'_>,
    kind: &PredictorKind,
    target_index: u64,
) -> Result<RealImage> {
    if window.len() < kind.min_window() {
        return Err(Error::WindowTooShort {
            kind: kind.name(),
            needed: kind.min_window(),
            got: window.len(),
        });
    }
    match kind {
        PredictorKind::Persistence => Ok(window.last().to_real()),
        PredictorKind::LinearExtrapolation => {
            let frames = window.frames();
            let prev = &frames[frames.len() - 2];
            let last = window.last();
            let data = last
                .data()
                .iter()
                .zip(prev.data())
                .map(|(&a, &b)| (2.0 * f64::from(a) - f64::from(b)).clamp(0.0, 255.0))
                .collect();
            RealImage::new(last.height(), last.width(), last.channels(), data)
        }
        PredictorKind::External(source) => Ok(source.load(target_index, window.last())?.to_real()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRow {
    pub frame_index: u64,
    pub mse: f64,
    pub psnr: Psnr,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionReport {
    pub rows: Vec<PredictionRow>,
    pub mean_mse: f64,
    /// Mean of per-frame PSNR; infinite as soon as one frame is perfect.
    pub mean_psnr: Psnr,
    /// PSNR evaluated on the mean MSE.
    pub psnr_of_mean_mse: Psnr,
    pub mean_ssim: f64,
}

/// Scores every frame after the first `n` against its prediction.
///
/// `indices` carries the frame numbers used to look up external predictions
/// and to label the report rows.
pub fn evaluate_predictor(
    frames: &[Frame],
    indices: &[u64],
    predictor: &Predictor,
) -> Result<PredictionReport> {
    let n = predictor.window();
    if frames.len() < n + 1 {
        return Err(Error::SequenceTooShort {
            got: frames.len(),
            window: n,
        });
    }
    if indices.len() != frames.len() {
        return Err(Error::InvalidParameter(format!(
            "{} indices for {} frames",
            indices.len(),
            frames.len()
        )));
    }
    let rows = (n..frames.len())
        .map(|t| {
            let window = FrameWindow::new(&frames[t - n..t])?;
            ensure_same_shape(window.last().shape(), frames[t].shape())?;
            let pred = predictor.predict(&window, indices[t])?;
            let m = prediction_metrics(&pred, &frames[t])?;
            Ok(PredictionRow {
                frame_index: indices[t],
                mse: m.mse,
                psnr: m.psnr,
                ssim: m.ssim,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let count = rows.len() as f64;
    let mean_mse = rows.iter().map(|r| r.mse).sum::<f64>() / count;
    let mean_psnr = if rows.iter().any(|r| r.psnr == Psnr::Infinite) {
        Psnr::Infinite
    } else {
        Psnr::Db(rows.iter().map(|r| r.psnr.as_f64()).sum::<f64>() / count)
    };
    let mean_ssim = rows.iter().map(|r| r.ssim).sum::<f64>() / count;
    Ok(PredictionReport {
        rows,
        mean_mse,
        mean_psnr,
        psnr_of_mean_mse: Psnr::from_mse(mean_mse, DEFAULT_MAX_VALUE),
        mean_ssim,
    })
}

/// `1..=len`, the indices used for in-memory sequences.
pub fn default_indices(len: usize) -> Vec<u64> {
    (1..=len as u64).collect()
}
