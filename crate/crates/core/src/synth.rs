//! Deterministic synthetic driving scenes with ground-truth masks and
//! scripted velocity discontinuities.
//!
//! Scenario files are plain `key = value` lines; `#` starts a comment.
//!
//! ```text
//! height = 256
//! width = 512
//! frames = 100
//! seed = 7
//! event_span = 4
//! background.class = 1
//! background.level = 100
//! background.amplitude = 30
//! background.tile = 4x4        # 0x0 tiles the whole canvas
//! background.jitter = 0        # max per-frame sub-pixel offset
//! sprite = class=14 size=40x64 pos=120,16 vel=0,4 intensity=220 ramp=3
//! event = sprite=2 frame=60 vel=0,-3
//! ```
//!
//! `sprite` lines may repeat; `event` lines refer to sprites by their
//! 1-based position. Positions are `row,col` of the top-left corner and
//! velocities `drow,dcol` in pixels per frame. Later sprites are drawn over
//! earlier ones and win in the mask.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{save_frame, Frame};
use crate::segmentation::{save_mask, ClassMask, IdConvention, NUM_CLASSES, ROAD};

#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundSpec {
    pub class_id: u8,
    pub level: f64,
    pub amplitude: f64,
    /// Noise tile size `(rows, cols)`; 0 means the full canvas dimension.
    pub tile: (usize, usize),
    pub jitter: f64,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self {
            class_id: ROAD,
            level: 100.0,
            amplitude: 0.0,
            tile: (0, 0),
            jitter: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpriteSpec {
    pub class_id: u8,
    pub height: usize,
    pub width: usize,
    pub row: f64,
    pub col: f64,
    pub velocity: (f64, f64),
    pub intensity: u8,
    /// Width in pixels of the linear fade from the border to full intensity;
    /// 0 draws a hard-edged rectangle.
    pub edge_ramp: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScriptedEvent {
    /// 0-based sprite position in [`ScenarioSpec::sprites`].
    pub sprite: usize,
    /// 1-based frame from which the new velocity applies.
    pub frame: usize,
    pub velocity: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub seed: u64,
    /// Length in frames of the logged interval that starts at each event.
    pub event_span: usize,
    pub background: BackgroundSpec,
    pub sprites: Vec<SpriteSpec>,
    pub events: Vec<ScriptedEvent>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            height: 256,
            width: 512,
            frames: 100,
            seed: 0,
            event_span: 4,
            background: BackgroundSpec::default(),
            sprites: Vec::new(),
            events: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoggedEvent {
    pub frame_start: usize,
    pub frame_end: usize,
    pub class_id: u8,
    /// Row of the sprite's lowest pixel at event time, counted from the
    /// image bottom.
    pub base_row: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct EventLog {
    pub events: Vec<LoggedEvent>,
}

impl EventLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame_start,frame_end,class_id,base_row\n");
        for e in &self.events {
            let _ = writeln!(out, "{},{},{},{}", e.frame_start, e.frame_end, e.class_id, e.base_row);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub frames: Vec<Frame>,
    pub masks: Vec<ClassMask>,
    pub events: EventLog,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidScenario(msg.into())
}

fn valid_class(id: u8) -> bool {
    id as usize <= NUM_CLASSES
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(invalid("canvas must be non-empty"));
        }
        if self.frames == 0 {
            return Err(invalid("scenario needs at least one frame"));
        }
        if self.event_span == 0 {
            return Err(invalid("event_span must be >= 1"));
        }
        let bg = &self.background;
        if !valid_class(bg.class_id) {
            return Err(invalid(format!("background class {} out of range", bg.class_id)));
        }
        if bg.tile.0 > self.height || bg.tile.1 > self.width {
            return Err(invalid("background tile larger than canvas"));
        }
        if !(bg.amplitude >= 0.0 && bg.jitter >= 0.0 && bg.level.is_finite()) {
            return Err(invalid("background level, amplitude and jitter must be finite and non-negative"));
        }
        for (k, s) in self.sprites.iter().enumerate() {
            if !valid_class(s.class_id) {
                return Err(invalid(format!("sprite {} class {} out of range", k + 1, s.class_id)));
            }
            if s.height == 0 || s.width == 0 || s.height > self.height || s.width > self.width {
                return Err(invalid(format!("sprite {} size does not fit the canvas", k + 1)));
            }
            if !(s.row.is_finite() && s.col.is_finite() && s.velocity.0.is_finite() && s.velocity.1.is_finite()) {
                return Err(invalid(format!("sprite {} has non-finite motion", k + 1)));
            }
        }
        for e in &self.events {
            if e.sprite >= self.sprites.len() {
                return Err(invalid(format!("event refers to missing sprite {}", e.sprite + 1)));
            }
            if e.frame == 0 || e.frame > self.frames {
                return Err(invalid(format!("event frame {} outside 1..={}", e.frame, self.frames)));
            }
        }
        Ok(())
    }

    /// Top-left corner of every sprite at every frame, clamped to the canvas.
    pub fn trajectories(&self) -> Vec<Vec<(f64, f64)>> {
        self.sprites
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let max_row = (self.height - s.height) as f64;
                let max_col = (self.width - s.width) as f64;
                let mut pos = (s.row.clamp(0.0, max_row), s.col.clamp(0.0, max_col));
                let mut path = Vec::with_capacity(self.frames);
                path.push(pos);
                for t in 2..=self.frames {
                    let v = self
                        .events
                        .iter()
                        .filter(|e| e.sprite == k && e.frame <= t)
                        .max_by_key(|e| e.frame)
                        .map_or(s.velocity, |e| e.velocity);
                    pos = (
                        (pos.0 + v.0).clamp(0.0, max_row),
                        (pos.1 + v.1).clamp(0.0, max_col),
                    );
                    path.push(pos);
                }
                path
            })
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = ScenarioSpec::default();
        for (line_no, key, value) in crate::config::key_values(text)? {
            let err = |m: String| Error::Config { line: line_no, message: m };
            match key.as_str() {
                "height" => spec.height = parse_num(&value).map_err(err)?,
                "width" => spec.width = parse_num(&value).map_err(err)?,
                "frames" => spec.frames = parse_num(&value).map_err(err)?,
                "seed" => spec.seed = parse_num(&value).map_err(err)?,
                "event_span" => spec.event_span = parse_num(&value).map_err(err)?,
                "background.class" => spec.background.class_id = parse_num(&value).map_err(err)?,
                "background.level" => spec.background.level = parse_num(&value).map_err(err)?,
                "background.amplitude" => spec.background.amplitude = parse_num(&value).map_err(err)?,
                "background.tile" => spec.background.tile = parse_size(&value).map_err(err)?,
                "background.jitter" => spec.background.jitter = parse_num(&value).map_err(err)?,
                "sprite" => spec.sprites.push(parse_sprite(&value).map_err(err)?),
                "event" => spec.events.push(parse_event(&value).map_err(err)?),
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let bg = &self.background;
        let mut out = String::new();
        let _ = writeln!(out, "height = {}", self.height);
        let _ = writeln!(out, "width = {}", self.width);
        let _ = writeln!(out, "frames = {}", self.frames);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "event_span = {}", self.event_span);
        let _ = writeln!(out, "background.class = {}", bg.class_id);
        let _ = writeln!(out, "background.level = {}", bg.level);
        let _ = writeln!(out, "background.amplitude = {}", bg.amplitude);
        let _ = writeln!(out, "background.tile = {}x{}", bg.tile.0, bg.tile.1);
        let _ = writeln!(out, "background.jitter = {}", bg.jitter);
        for s in &self.sprites {
            let _ = writeln!(
                out,
                "sprite = class={} size={}x{} pos={},{} vel={},{} intensity={} ramp={}",
                s.class_id, s.height, s.width, s.row, s.col, s.velocity.0, s.velocity.1, s.intensity, s.edge_ramp
            );
        }
        for e in &self.events {
            let _ = writeln!(
                out,
                "event = sprite={} frame={} vel={},{}",
                e.sprite + 1,
                e.frame,
                e.velocity.0,
                e.velocity.1
            );
        }
        out
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.trim().parse().map_err(|_| format!("cannot parse '{s}' as a number"))
}

fn parse_pair<T: std::str::FromStr>(s: &str, sep: char) -> std::result::Result<(T, T), String> {
    let (a, b) = s
        .split_once(sep)
        .ok_or_else(|| format!("expected two values separated by '{sep}', got '{s}'"))?;
    Ok((parse_num(a)?, parse_num(b)?))
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    parse_pair(s, 'x')
}

fn fields(s: &str) -> std::result::Result<Vec<(&str, &str)>, String> {
    s.split_whitespace()
        .map(|tok| tok.split_once('=').ok_or_else(|| format!("expected key=value, got '{tok}'")))
        .collect()
}

fn parse_sprite(s: &str) -> std::result::Result<SpriteSpec, String> {
    let mut sprite = SpriteSpec {
        class_id: ROAD,
        height: 1,
        width: 1,
        row: 0.0,
        col: 0.0,
        velocity: (0.0, 0.0),
        intensity: 255,
        edge_ramp: 0,
    };
    let mut have_class = false;
    for (k, v) in fields(s)? {
        match k {
            "class" => {
                sprite.class_id = parse_num(v)?;
                have_class = true;
            }
            "size" => (sprite.height, sprite.width) = parse_size(v)?,
            "pos" => (sprite.row, sprite.col) = parse_pair(v, ',')?,
            "vel" => sprite.velocity = parse_pair(v, ',')?,
            "intensity" => sprite.intensity = parse_num(v)?,
            "ramp" => sprite.edge_ramp = parse_num(v)?,
            other => return Err(format!("unknown sprite field '{other}'")),
        }
    }
    if !have_class {
        return Err("sprite needs a class".into());
    }
    Ok(sprite)
}

fn parse_event(s: &str) -> std::result::Result<ScriptedEvent, String> {
    let (mut sprite, mut frame, mut velocity) = (None, None, None);
    for (k, v) in fields(s)? {
        match k {
            "sprite" => sprite = Some(parse_num::<usize>(v)?),
            "frame" => frame = Some(parse_num(v)?),
            "vel" => velocity = Some(parse_pair(v, ',')?),
            other => return Err(format!("unknown event field '{other}'")),
        }
    }
    match (sprite, frame, velocity) {
        (Some(s), Some(frame), Some(velocity)) if s >= 1 => Ok(ScriptedEvent {
            sprite: s - 1,
            frame,
            velocity,
        }),
        _ => Err("event needs sprite (>= 1), frame and vel".into()),
    }
}

struct Texture {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Texture {
    fn new(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Self {
        let bg = &spec.background;
        let rows = if bg.tile.0 == 0 { spec.height } else { bg.tile.0 };
        let cols = if bg.tile.1 == 0 { spec.width } else { bg.tile.1 };
        let values = (0..rows * cols)
            .map(|_| {
                let u: f64 = if bg.amplitude > 0.0 {
                    rng.random_range(-1.0..=1.0)
                } else {
                    0.0
                };
                (bg.level + bg.amplitude * u).round().clamp(0.0, 255.0)
            })
            .collect();
        Self { rows, cols, values }
    }

    fn at(&self, row: isize, col: isize) -> f64 {
        let r = row.rem_euclid(self.rows as isize) as usize;
        let c = col.rem_euclid(self.cols as isize) as usize;
        self.values[r * self.cols + c]
    }

    /// Periodic bilinear sample at a real-valued position.
    fn sample(&self, y: f64, x: f64) -> f64 {
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let (y0, x0) = (y0 as isize, x0 as isize);
        let top = self.at(y0, x0) * (1.0 - fx) + self.at(y0, x0 + 1) * fx;
        let bottom = self.at(y0 + 1, x0) * (1.0 - fx) + self.at(y0 + 1, x0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Per-frame background offsets; all zero without jitter.
fn jitter_offsets(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let j = spec.background.jitter;
    (0..spec.frames)
        .map(|_| {
            if j > 0.0 {
                (rng.random_range(-j..=j), rng.random_range(-j..=j))
            } else {
                (0.0, 0.0)
            }
        })
        .collect()
}

fn render_background(spec: &ScenarioSpec, texture: &Texture, offset: (f64, f64)) -> Vec<f64> {
    let (h, w) = (spec.height, spec.width);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            out.push(if offset == (0.0, 0.0) {
                texture.at(y as isize, x as isize)
            } else {
                texture.sample(y as f64 + offset.0, x as f64 + offset.1)
            });
        }
    }
    out
}

/// Opacity of a sprite pixel given its distances to the nearest vertical
/// and horizontal border (0 on the border itself).
fn sprite_alpha(edge_ramp: usize, from_top_bottom: usize, from_sides: usize) -> f64 {
    let steps = edge_ramp + 1;
    let d = (from_top_bottom + 1).min(from_sides + 1).min(steps);
    d as f64 / steps as f64
}

/// Pure background of frame `t` (1-based) before sprites are drawn, in the
/// same rounding as the rendered frames.
pub fn background_frame(spec: &ScenarioSpec, t: usize) -> Result<Frame> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let texture = Texture::new(spec, &mut rng);
    let offsets = jitter_offsets(spec, &mut rng);
    let bg = render_background(spec, &texture, offsets[t - 1]);
    Frame::new(
        spec.height,
        spec.width,
        1,
        bg.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect(),
    )
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let texture = Texture::new(spec, &mut rng);
    let offsets = jitter_offsets(spec, &mut rng);
    let paths = spec.trajectories();

    let mut frames = Vec::with_capacity(spec.frames);
    let mut masks = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let mut pixels = render_background(spec, &texture, offsets[t]);
        let mut labels = vec![spec.background.class_id; h * w];
        for (sprite, path) in spec.sprites.iter().zip(&paths) {
            let top = path[t].0.round() as usize;
            let left = path[t].1.round() as usize;
            let s = f64::from(sprite.intensity);
            for dy in 0..sprite.height {
                let vy = dy.min(sprite.height - 1 - dy);
                let row = (top + dy) * w;
                for dx in 0..sprite.width {
                    let vx = dx.min(sprite.width - 1 - dx);
                    let a = sprite_alpha(sprite.edge_ramp, vy, vx);
                    let i = row + left + dx;
                    pixels[i] = pixels[i] * (1.0 - a) + s * a;
                    labels[i] = sprite.class_id;
                }
            }
        }
        frames.push(Frame::new(
            h,
            w,
            1,
            pixels.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect(),
        )?);
        masks.push(ClassMask::new(h, w, labels)?);
    }

    let events = spec
        .events
        .iter()
        .map(|e| {
            let sprite = &spec.sprites[e.sprite];
            let top = paths[e.sprite][e.frame - 1].0.round() as usize;
            LoggedEvent {
                frame_start: e.frame,
                frame_end: (e.frame + spec.event_span - 1).min(spec.frames),
                class_id: sprite.class_id,
                base_row: h - top - sprite.height,
            }
        })
        .collect();
    Ok(Scenario {
        frames,
        masks,
        events: EventLog { events },
    })
}

/// Writes `frames/NNNNNN.png`, `masks/NNNNNN.png`, `events.csv` and
/// `scenario.txt` under `dir`.
pub fn write_scenario(
    dir: impl AsRef<Path>,
    spec: &ScenarioSpec,
    scenario: &Scenario,
    convention: IdConvention,
) -> Result<()> {
    let dir = dir.as_ref();
    let frames_dir = dir.join("frames");
    let masks_dir = dir.join("masks");
    fs::create_dir_all(&frames_dir)?;
    fs::create_dir_all(&masks_dir)?;
    for (t, (frame, mask)) in scenario.frames.iter().zip(&scenario.masks).enumerate() {
        let name = format!("{:06}.png", t + 1);
        save_frame(frames_dir.join(&name), frame)?;
        save_mask(masks_dir.join(&name), mask, convention)?;
    }
    fs::write(dir.join("events.csv"), scenario.events.to_csv())?;
    fs::write(dir.join("scenario.txt"), spec.to_text())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::{CAR, PERSON};

    fn car_spec() -> ScenarioSpec {
        ScenarioSpec {
            height: 32,
            width: 64,
            frames: 10,
            seed: 3,
            background: BackgroundSpec {
                amplitude: 20.0,
                ..BackgroundSpec::default()
            },
            sprites: vec![SpriteSpec {
                class_id: CAR,
                height: 6,
                width: 9,
                row: 20.0,
                col: 2.0,
                velocity: (0.0, 2.0),
                intensity: 230,
                edge_ramp: 0,
            }],
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn static_scene_without_sprites() {
        let spec = ScenarioSpec {
            height: 8,
            width: 8,
            frames: 5,
            background: BackgroundSpec {
                amplitude: 30.0,
                ..BackgroundSpec::default()
            },
            ..ScenarioSpec::default()
        };
        let s = generate_scenario(&spec).unwrap();
        assert_eq!(s.frames.len(), 5);
        assert!(s.frames.iter().all(|f| f == &s.frames[0]));
        assert!(s.masks.iter().all(|m| m.labels().iter().all(|&l| l == ROAD)));
    }

    #[test]
    fn car_mask_area_is_sprite_area() {
        let s = generate_scenario(&car_spec()).unwrap();
        for m in &s.masks {
            assert_eq!(m.class_counts()[CAR as usize], 6 * 9);
        }
        assert_eq!(s.masks[3].get(20, 2 + 6), CAR);
        assert_eq!(s.masks[3].get(20, 2 + 5), ROAD);
    }

    #[test]
    fn generation_is_deterministic() {
        let mut spec = car_spec();
        spec.background.jitter = 0.4;
        assert_eq!(generate_scenario(&spec).unwrap(), generate_scenario(&spec).unwrap());
    }

    #[test]
    fn clamps_at_canvas_border() {
        let mut spec = car_spec();
        spec.sprites[0].velocity = (0.0, 20.0);
        let paths = spec.trajectories();
        assert_eq!(paths[0].last().unwrap().1, (64 - 9) as f64);
        assert!(generate_scenario(&spec).is_ok());
    }

    #[test]
    fn events_switch_velocity_and_log() {
        let mut spec = car_spec();
        spec.events.push(ScriptedEvent {
            sprite: 0,
            frame: 5,
            velocity: (0.0, -1.0),
        });
        let path = &spec.trajectories()[0];
        let cols: Vec<f64> = path.iter().map(|p| p.1).collect();
        assert_eq!(cols, vec![2.0, 4.0, 6.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0]);
        let s = generate_scenario(&spec).unwrap();
        assert_eq!(
            s.events.events,
            vec![LoggedEvent {
                frame_start: 5,
                frame_end: 8,
                class_id: CAR,
                base_row: 32 - 20 - 6,
            }]
        );
        assert_eq!(
            s.events.to_csv(),
            "frame_start,frame_end,class_id,base_row\n5,8,14,6\n"
        );
    }

    #[test]
    fn later_sprite_wins() {
        let mut spec = car_spec();
        spec.sprites.push(SpriteSpec {
            class_id: PERSON,
            ..spec.sprites[0].clone()
        });
        let s = generate_scenario(&spec).unwrap();
        assert_eq!(s.masks[0].class_counts()[CAR as usize], 0);
        assert_eq!(s.masks[0].class_counts()[PERSON as usize], 54);
    }

    #[test]
    fn ramp_alpha_levels() {
        assert_eq!(sprite_alpha(0, 0, 0), 1.0);
        assert_eq!(sprite_alpha(3, 0, 5), 0.25);
        assert_eq!(sprite_alpha(3, 1, 5), 0.5);
        assert_eq!(sprite_alpha(3, 9, 9), 1.0);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = car_spec();
        spec.events.push(ScriptedEvent {
            sprite: 3,
            frame: 2,
            velocity: (0.0, 0.0),
        });
        assert!(generate_scenario(&spec).is_err());
        let mut spec = car_spec();
        spec.events.push(ScriptedEvent {
            sprite: 0,
            frame: 11,
            velocity: (0.0, 0.0),
        });
        assert!(spec.validate().is_err());
        let mut spec = car_spec();
        spec.sprites[0].width = 100;
        assert!(spec.validate().is_err());
        let mut spec = car_spec();
        spec.sprites[0].class_id = 20;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn text_format_round_trip() {
        let mut spec = car_spec();
        spec.background.tile = (4, 4);
        spec.background.jitter = 0.25;
        spec.sprites[0].edge_ramp = 2;
        spec.events.push(ScriptedEvent {
            sprite: 0,
            frame: 5,
            velocity: (1.5, -2.0),
        });
        let text = spec.to_text();
        assert_eq!(ScenarioSpec::parse(&text).unwrap(), spec);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = ScenarioSpec::parse("height = 4\nwidth = x\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }));
        let err = ScenarioSpec::parse("colour = red\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
        assert!(ScenarioSpec::parse("sprite = size=2x2\n").is_err());
    }
}
