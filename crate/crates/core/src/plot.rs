//! Static two-panel score plot: normalized corner case score on top, MSE
//! with and without low-pass filtering below.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::detector::ScoreSeries;
use crate::error::Result;

const WIDTH: u32 = 1000;
const PANEL: u32 = 220;
const MARGIN: u32 = 20;

const RED: Rgb<u8> = Rgb([200, 30, 30]);
const GREEN: Rgb<u8> = Rgb([30, 150, 30]);
const BLUE: Rgb<u8> = Rgb([40, 70, 210]);
const AXIS: Rgb<u8> = Rgb([90, 90, 90]);

fn draw_line(img: &mut RgbImage, from: (f64, f64), to: (f64, f64), color: Rgb<u8>, dashed: bool) {
    let steps = ((to.0 - from.0).abs().max((to.1 - from.1).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        if dashed && (s / 4) % 2 == 1 {
            continue;
        }
        let f = s as f64 / steps as f64;
        let x = (from.0 + (to.0 - from.0) * f).round();
        let y = (from.1 + (to.1 - from.1) * f).round();
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

struct Panel {
    top: u32,
    max: f64,
}

impl Panel {
    fn frame(&self, img: &mut RgbImage) {
        let (l, r) = (MARGIN as f64, (WIDTH - MARGIN) as f64);
        let (t, b) = (self.top as f64, (self.top + PANEL) as f64);
        draw_line(img, (l, t), (l, b), AXIS, false);
        draw_line(img, (l, b), (r, b), AXIS, false);
    }

    fn trace(&self, img: &mut RgbImage, values: &[f64], color: Rgb<u8>, dashed: bool) {
        let n = values.len();
        let span = (WIDTH - 2 * MARGIN) as f64;
        let x = |i: usize| MARGIN as f64 + if n > 1 { span * i as f64 / (n - 1) as f64 } else { 0.0 };
        let y = |v: f64| {
            let frac = if self.max > 0.0 { (v / self.max).clamp(0.0, 1.0) } else { 0.0 };
            (self.top + PANEL) as f64 - frac * PANEL as f64
        };
        for i in 1..n {
            draw_line(img, (x(i - 1), y(values[i - 1])), (x(i), y(values[i])), color, dashed);
        }
    }
}

pub fn render_score_plot(series: &ScoreSeries) -> RgbImage {
    let height = 2 * PANEL + 3 * MARGIN;
    let mut img = RgbImage::from_pixel(WIDTH, height, Rgb([255, 255, 255]));

    let score = Panel { top: MARGIN, max: 1.0 };
    score.frame(&mut img);
    score.trace(&mut img, &series.normalized(), RED, false);

    let blurred: Vec<f64> = series.records.iter().map(|r| r.mse).collect();
    let unblurred: Vec<f64> = series.records.iter().map(|r| r.mse_unblurred).collect();
    let max = blurred.iter().chain(&unblurred).fold(0.0f64, |m, &v| m.max(v));
    let mse = Panel {
        top: 2 * MARGIN + PANEL,
        max,
    };
    mse.frame(&mut img);
    mse.trace(&mut img, &unblurred, BLUE, true);
    mse.trace(&mut img, &blurred, GREEN, false);
    img
}

pub fn save_score_plot(path: impl AsRef<Path>, series: &ScoreSeries) -> Result<()> {
    render_score_plot(series).save(path.as_ref())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::ScoreRecord;

    #[test]
    fn plot_has_expected_size_and_traces() {
        let series = ScoreSeries {
            records: (0..10)
                .map(|i| ScoreRecord {
                    frame_index: i + 1,
                    warmup: false,
                    raw: i as f64,
                    normalized: i as f64 / 9.0,
                    mse: 1.0,
                    mse_unblurred: 2.0 * i as f64,
                    patches: None,
                })
                .collect(),
        };
        let img = render_score_plot(&series);
        assert_eq!(img.dimensions(), (WIDTH, 2 * PANEL + 3 * MARGIN));
        assert!(img.pixels().any(|p| *p == RED));
        assert!(img.pixels().any(|p| *p == GREEN));
        assert!(img.pixels().any(|p| *p == BLUE));
    }
}
