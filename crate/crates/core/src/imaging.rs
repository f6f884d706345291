//! Frames, still-image I/O, grayscale conversion, bilinear resizing and the
//! Gaussian low-pass filter applied before prediction errors are computed.

use std::fmt;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// An 8-bit image with 1 (gray) or 3 (RGB) interleaved channels, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

/// A real-valued image with the same layout as [`Frame`].
///
/// Predictions and blurred frames live here so that no re-quantization
/// happens between filtering and subtraction.
#[derive(Clone, Debug, PartialEq)]
pub struct RealImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

fn check_layout(height: usize, width: usize, channels: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::ZeroDimension { height, width });
    }
    if channels != 1 && channels != 3 {
        return Err(Error::InvalidFrame(format!(
            "channel count must be 1 or 3, got {channels}"
        )));
    }
    if len != height * width * channels {
        return Err(Error::InvalidFrame(format!(
            "data length {len} does not match {height}x{width}x{channels}"
        )));
    }
    Ok(())
}

impl Frame {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        check_layout(height, width, channels, data.len())?;
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> Shape {
        Shape {
            height: self.height,
            width: self.width,
            channels: self.channels,
        }
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> u8 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    pub fn to_real(&self) -> RealImage {
        RealImage {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    /// Luma conversion `round(0.299 R + 0.587 G + 0.114 B)`.
    /// Single-channel frames are returned unchanged.
    pub fn to_grayscale(&self) -> Frame {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| luma_u8(px[0], px[1], px[2]))
            .collect();
        Frame {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }
}

/// Integer evaluation of the fixed luma weights with round-half-up.
#[inline]
pub fn luma_u8(r: u8, g: u8, b: u8) -> u8 {
    let acc = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
    ((acc + 500) / 1000) as u8
}

impl RealImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_layout(height, width, channels, data.len())?;
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> Shape {
        Shape {
            height: self.height,
            width: self.width,
            channels: self.channels,
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// Unrounded luma; single-channel images are returned unchanged.
    pub fn to_grayscale(&self) -> RealImage {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2])
            .collect();
        RealImage {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    /// Rounds to nearest and clamps into `[0, 255]`.
    pub fn quantize(&self) -> Frame {
        Frame {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .map(|&v| v.round().clamp(0.0, 255.0) as u8)
                .collect(),
        }
    }

    pub(crate) fn plane(&self, channel: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub(crate) fn from_planes(height: usize, width: usize, planes: &[Vec<f64>]) -> RealImage {
        let channels = planes.len();
        let mut data = vec![0.0; height * width * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, &v) in plane.iter().enumerate() {
                data[i * channels + c] = v;
            }
        }
        RealImage {
            height,
            width,
            channels,
            data,
        }
    }
}

pub(crate) fn ensure_same_shape(left: Shape, right: Shape) -> Result<()> {
    if left != right {
        return Err(Error::ShapeMismatch {
            left: left.to_string(),
            right: right.to_string(),
        });
    }
    Ok(())
}

fn is_supported_extension(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("png" | "pgm" | "ppm" | "pnm")
    )
}

pub(crate) fn open_image(path: &Path) -> Result<DynamicImage> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)?.with_guessed_format()?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Pnm) => {}
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("detected format {other:?}"),
            })
        }
    }
    Ok(reader.decode()?)
}

/// Reads an 8-bit gray or RGB PNG / PGM / PPM file.
pub fn load_frame(path: impl AsRef<Path>, force_grayscale: bool) -> Result<Frame> {
    let path = path.as_ref();
    let img = open_image(path)?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension { height, width });
    }
    let frame = match img {
        DynamicImage::ImageLuma8(buf) => Frame::new(height, width, 1, buf.into_raw())?,
        DynamicImage::ImageRgb8(buf) => Frame::new(height, width, 3, buf.into_raw())?,
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("pixel type {:?} is not 8-bit gray or RGB", other.color()),
            })
        }
    };
    Ok(if force_grayscale {
        frame.to_grayscale()
    } else {
        frame
    })
}

/// Writes a frame as PNG or binary PGM/PPM, chosen by file extension.
pub fn save_frame(path: impl AsRef<Path>, frame: &Frame) -> Result<()> {
    let path = path.as_ref();
    if !is_supported_extension(path) {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "expected .png, .pgm, .ppm or .pnm".into(),
        });
    }
    let color = if frame.channels == 1 {
        ColorType::L8
    } else {
        ColorType::Rgb8
    };
    image::save_buffer(
        path,
        &frame.data,
        frame.width as u32,
        frame.height as u32,
        color,
    )?;
    Ok(())
}

/// Trailing decimal digits of the file stem, e.g. `frame_000042.png` -> 42.
pub fn file_index(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// Numbered image files of a directory, in lexicographic filename order.
///
/// Files without a trailing number or with an unsupported extension are
/// skipped.
pub fn list_sequence(dir: impl AsRef<Path>) -> Result<Vec<(u64, PathBuf)>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && is_supported_extension(&path) {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(paths
        .into_iter()
        .filter_map(|p| file_index(&p).map(|i| (i, p)))
        .collect())
}

/// Bilinear resampling with half-pixel centers; results are rounded and
/// clamped into `[0, 255]`.
pub fn resize_bilinear(frame: &Frame, out_h: usize, out_w: usize) -> Result<Frame> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::ZeroDimension {
            height: out_h,
            width: out_w,
        });
    }
    let (in_h, in_w, ch) = (frame.height, frame.width, frame.channels);
    let taps = |out: usize, in_len: usize| -> Vec<(usize, usize, f64)> {
        let scale = in_len as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(in_len - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let rows = taps(out_h, in_h);
    let cols = taps(out_w, in_w);
    let mut data = Vec::with_capacity(out_h * out_w * ch);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            for c in 0..ch {
                let p = |y: usize, x: usize| f64::from(frame.get(y, x, c));
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Frame::new(out_h, out_w, ch, data)
}

/// Gaussian low-pass settings. Borders are always replicated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlurConfig {
    pub kernel_size: usize,
    pub sigma: f64,
}

impl Default for BlurConfig {
    fn default() -> Self {
        Self {
            kernel_size: 10,
            sigma: 2.0,
        }
    }
}

impl BlurConfig {
    pub fn new(kernel_size: usize, sigma: f64) -> Result<Self> {
        let cfg = Self { kernel_size, sigma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 {
            return Err(Error::InvalidParameter("blur kernel size must be >= 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "blur sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Index of the output-aligned tap. For even sizes this is the
    /// top-left element of the central 2x2 block.
    pub fn anchor(&self) -> usize {
        (self.kernel_size - 1) / 2
    }

    /// Normalized 1-D weights, sampled symmetrically about the kernel's
    /// geometric center.
    pub fn kernel_1d(&self) -> Vec<f64> {
        let center = (self.kernel_size as f64 - 1.0) / 2.0;
        let denom = 2.0 * self.sigma * self.sigma;
        let raw: Vec<f64> = (0..self.kernel_size)
            .map(|j| {
                let d = j as f64 - center;
                (-d * d / denom).exp()
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / sum).collect()
    }

    /// Row-major `kernel_size x kernel_size` weights (outer product of the
    /// 1-D kernel).
    pub fn kernel_2d(&self) -> Vec<f64> {
        let k = self.kernel_1d();
        k.iter()
            .flat_map(|&a| k.iter().map(move |&b| a * b))
            .collect()
    }
}

fn blur_plane(plane: &[f64], height: usize, width: usize, weights: &[f64], anchor: usize) -> Vec<f64> {
    let k = weights.len();
    let lead = k - 1 - anchor;

    // out(x) = sum_j w[j] * in(clamp(x - j + anchor))
    let mut horizontal = vec![0.0; height * width];
    let mut padded = vec![0.0; width + k - 1];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for (p, slot) in padded.iter_mut().enumerate() {
            let src = p as isize - lead as isize;
            *slot = row[src.clamp(0, width as isize - 1) as usize];
        }
        let out = &mut horizontal[y * width..(y + 1) * width];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &w) in weights.iter().enumerate() {
                acc += w * padded[x + k - 1 - j];
            }
            *o = acc;
        }
    }

    let mut out = vec![0.0; height * width];
    for y in 0..height {
        let dst = &mut out[y * width..(y + 1) * width];
        for (j, &w) in weights.iter().enumerate() {
            let src = (y as isize - j as isize + anchor as isize).clamp(0, height as isize - 1) as usize;
            let src_row = &horizontal[src * width..(src + 1) * width];
            for (d, &s) in dst.iter_mut().zip(src_row) {
                *d += w * s;
            }
        }
    }
    out
}

/// Separable Gaussian convolution with replicated borders. The output stays
/// in real precision.
pub fn gaussian_blur(image: &RealImage, cfg: &BlurConfig) -> RealImage {
    let weights = cfg.kernel_1d();
    let anchor = cfg.anchor();
    let planes: Vec<Vec<f64>> = (0..image.channels)
        .map(|c| blur_plane(&image.plane(c), image.height, image.width, &weights, anchor))
        .collect();
    RealImage::from_planes(image.height, image.width, &planes)
}
