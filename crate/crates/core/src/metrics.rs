//! Prediction quality (MSE, PSNR, SSIM) and segmentation quality (IoU).

use std::fmt;

use crate::error::{Error, Result};
use crate::imaging::{ensure_same_shape, BlurConfig, Frame, RealImage};
use crate::segmentation::{ClassMask, NUM_LABELS};

/// Mean squared error. Color images are scored per channel and the channel
/// results averaged. Pixels are visited in row-major order.
pub fn mse_real(a: &RealImage, b: &RealImage) -> Result<f64> {
    ensure_same_shape(a.shape(), b.shape())?;
    let ch = a.channels();
    let mut sums = [0.0f64; 3];
    for (pa, pb) in a.data().chunks_exact(ch).zip(b.data().chunks_exact(ch)) {
        for c in 0..ch {
            let d = pa[c] - pb[c];
            sums[c] += d * d;
        }
    }
    let n = (a.height() * a.width()) as f64;
    let per_channel = sums[..ch].iter().map(|s| s / n);
    Ok(per_channel.sum::<f64>() / ch as f64)
}

pub fn mse(pred: &RealImage, actual: &Frame) -> Result<f64> {
    mse_real(pred, &actual.to_real())
}

/// PSNR in decibels, or `Infinite` for a perfect prediction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Db(f64),
    Infinite,
}

impl Psnr {
    pub fn from_mse(mse: f64, max_value: f64) -> Self {
        if mse == 0.0 {
            Psnr::Infinite
        } else {
            Psnr::Db(10.0 * (max_value * max_value / mse).log10())
        }
    }

    pub fn db(self) -> Option<f64> {
        match self {
            Psnr::Db(v) => Some(v),
            Psnr::Infinite => None,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Psnr::Db(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

pub const DEFAULT_MAX_VALUE: f64 = 255.0;

pub fn psnr_real(a: &RealImage, b: &RealImage, max_value: f64) -> Result<Psnr> {
    if !(max_value > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "PSNR peak value must be positive, got {max_value}"
        )));
    }
    Ok(Psnr::from_mse(mse_real(a, b)?, max_value))
}

pub fn psnr(pred: &RealImage, actual: &Frame, max_value: f64) -> Result<Psnr> {
    psnr_real(pred, &actual.to_real(), max_value)
}

/// SSIM window and stabilizers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Gaussian-weighted local means over every full window position.
fn window_means(plane: &[f64], height: usize, width: usize, weights: &[f64]) -> Vec<f64> {
    let k = weights.len();
    let (oh, ow) = (height - k + 1, width - k + 1);
    let mut horiz = vec![0.0; height * ow];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..ow {
            horiz[y * ow + x] = weights
                .iter()
                .zip(&row[x..x + k])
                .map(|(w, v)| w * v)
                .sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (j, &w) in weights.iter().enumerate() {
            let src = &horiz[(y + j) * ow..(y + j + 1) * ow];
            for (o, &s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += w * s;
            }
        }
    }
    out
}

/// Mean local SSIM with a Gaussian window; windows never leave the image.
/// Color inputs are reduced to (unrounded) luma first.
pub fn ssim_real(a: &RealImage, b: &RealImage, params: &SsimParams) -> Result<f64> {
    ensure_same_shape(a.shape(), b.shape())?;
    let (h, w) = (a.height(), a.width());
    if h < params.window || w < params.window {
        return Err(Error::WindowTooLarge {
            height: h,
            width: w,
            window: params.window,
        });
    }
    let x = a.to_grayscale();
    let y = b.to_grayscale();
    let x = x.data();
    let y = y.data();
    let weights = BlurConfig {
        kernel_size: params.window,
        sigma: params.sigma,
    }
    .kernel_1d();

    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = window_means(x, h, w, &weights);
    let mu_y = window_means(y, h, w, &weights);
    let m_xx = window_means(&xx, h, w, &weights);
    let m_yy = window_means(&yy, h, w, &weights);
    let m_xy = window_means(&xy, h, w, &weights);

    let (c1, c2) = (params.c1(), params.c2());
    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = m_xx[i] - mx * mx;
        let var_y = m_yy[i] - my * my;
        let cov = m_xy[i] - mx * my;
        let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
        let den = (mx * mx + my * my + c1) * (var_x + var_y + c2);
        total += num / den;
    }
    Ok(total / mu_x.len() as f64)
}

pub fn ssim(pred: &RealImage, actual: &Frame, params: &SsimParams) -> Result<f64> {
    ssim_real(pred, &actual.to_real(), params)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionMetrics {
    pub mse: f64,
    pub psnr: Psnr,
    pub ssim: f64,
}

pub fn prediction_metrics(pred: &RealImage, actual: &Frame) -> Result<PredictionMetrics> {
    let actual = actual.to_real();
    let mse = mse_real(pred, &actual)?;
    Ok(PredictionMetrics {
        mse,
        psnr: Psnr::from_mse(mse, DEFAULT_MAX_VALUE),
        ssim: ssim_real(pred, &actual, &SsimParams::default())?,
    })
}

/// Pixel tally, rows = ground truth, columns = prediction, indexed by
/// internal label id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
    void_label: u8,
    ignored_pixels: u64,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self::new(crate::segmentation::VOID_LABEL)
    }
}

impl ConfusionMatrix {
    pub fn new(void_label: u8) -> Self {
        Self {
            counts: vec![0; NUM_LABELS * NUM_LABELS],
            void_label,
            ignored_pixels: 0,
        }
    }

    #[inline]
    pub fn count(&self, truth: u8, predicted: u8) -> u64 {
        self.counts[truth as usize * NUM_LABELS + predicted as usize]
    }

    pub fn ignored_pixels(&self) -> u64 {
        self.ignored_pixels
    }

    pub fn counted_pixels(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn void_label(&self) -> u8 {
        self.void_label
    }

    pub fn accumulate(&mut self, predicted: &ClassMask, truth: &ClassMask) -> Result<()> {
        if (predicted.height(), predicted.width()) != (truth.height(), truth.width()) {
            return Err(Error::ShapeMismatch {
                left: format!("{}x{}", predicted.height(), predicted.width()),
                right: format!("{}x{}", truth.height(), truth.width()),
            });
        }
        for (&p, &t) in predicted.labels().iter().zip(truth.labels()) {
            if t == self.void_label {
                self.ignored_pixels += 1;
            } else {
                self.counts[t as usize * NUM_LABELS + p as usize] += 1;
            }
        }
        Ok(())
    }

    /// Element-wise sum; both matrices must share the void label.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        debug_assert_eq!(self.void_label, other.void_label);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.ignored_pixels += other.ignored_pixels;
    }

    fn row_sum(&self, class: usize) -> u64 {
        self.counts[class * NUM_LABELS..(class + 1) * NUM_LABELS].iter().sum()
    }

    fn col_sum(&self, class: usize) -> u64 {
        (0..NUM_LABELS).map(|r| self.counts[r * NUM_LABELS + class]).sum()
    }
}

pub fn confusion_matrix(
    predicted: &ClassMask,
    truth: &ClassMask,
    void_label: u8,
) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix::new(void_label);
    m.accumulate(predicted, truth)?;
    Ok(m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassIou {
    pub class_id: u8,
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    /// `None` when the class occurs in neither truth nor prediction.
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IouReport {
    pub per_class: Vec<ClassIou>,
    pub mean: f64,
}

impl IouReport {
    pub fn class(&self, id: u8) -> Option<&ClassIou> {
        self.per_class.iter().find(|c| c.class_id == id)
    }
}

/// Per-class IoU and the mean over every class that occurs in truth or
/// prediction.
pub fn iou(matrix: &ConfusionMatrix) -> Result<IouReport> {
    if matrix.counted_pixels() == 0 {
        return Err(Error::NoMeasurablePixels);
    }
    let per_class: Vec<ClassIou> = (0..NUM_LABELS)
        .filter(|&c| c != matrix.void_label as usize)
        .map(|c| {
            let tp = matrix.counts[c * NUM_LABELS + c];
            let fp = matrix.col_sum(c) - tp;
            let fn_ = matrix.row_sum(c) - tp;
            let union = tp + fp + fn_;
            ClassIou {
                class_id: c as u8,
                true_positive: tp,
                false_positive: fp,
                false_negative: fn_,
                iou: (union > 0).then(|| tp as f64 / union as f64),
            }
        })
        .collect();
    let present: Vec<f64> = per_class.iter().filter_map(|c| c.iou).collect();
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    Ok(IouReport { per_class, mean })
}

/// Class-agnostic IoU of one frame: TP, FP and FN pooled over classes.
pub fn frame_iou(matrix: &ConfusionMatrix) -> Result<f64> {
    let report = iou(matrix)?;
    let (tp, rest) = report.per_class.iter().fold((0u64, 0u64), |(tp, rest), c| {
        (tp + c.true_positive, rest + c.false_positive + c.false_negative)
    });
    Ok(tp as f64 / (tp + rest) as f64)
}
