//! Command-line surface: `score`, `stream`, `synth`, `eval-pred` and
//! `eval-seg`.
//!
//! Detector settings come from built-in defaults, then an optional config
//! file (`--config`, flat `key = value`), then flags; later sources win.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::config::{key_values, parse_bool};
use crate::detector::{
    patch_heatmap, run_detector, DetectorConfig, DetectorInput, DetectorOutput, Event,
    NormalizationMode, OnlineDetector, PatchNormalization, ScoreRecord, ScoreSeries,
};
use crate::imaging::{list_sequence, load_frame, BlurConfig, Frame};
use crate::metrics::{frame_iou, iou, ConfusionMatrix};
use crate::plot::save_score_plot;
use crate::prediction::{
    evaluate_predictor, ExternalPredictions, Predictor, PredictorKind, PredictorName,
};
use crate::segmentation::{class_name, load_mask, ClassMask, ClassTable, IdConvention, VOID_LABEL};
use crate::synth::{generate_scenario, write_scenario, ScenarioSpec};

#[derive(Debug, Parser)]
#[command(name = "cornercase", version, about = "Corner case scoring for driving video")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a frame sequence offline (whole-run normalization).
    Score(DetectArgs),
    /// Score frame by frame with causal normalization, appending CSV rows.
    Stream(DetectArgs),
    /// Render a synthetic scenario to frames, masks and an event log.
    Synth(SynthArgs),
    /// Evaluate a predictor with MSE, PSNR and SSIM.
    EvalPred(EvalPredArgs),
    /// Evaluate predicted label masks against ground truth (IoU).
    EvalSeg(EvalSegArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct DetectArgs {
    /// Flat key = value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Patch edge length in pixels; 0 disables patch localization.
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub blur_size: Option<usize>,
    #[arg(long)]
    pub blur_sigma: Option<f64>,
    /// Score unfiltered errors.
    #[arg(long)]
    pub no_blur: bool,
    /// persistence, linear or external.
    #[arg(long)]
    pub predictor: Option<String>,
    /// Directory of precomputed predictions for --predictor external.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub window_n: Option<usize>,
    /// offline or online (score only; stream is always online).
    #[arg(long)]
    pub mode: Option<String>,
    /// per_position or global.
    #[arg(long)]
    pub patch_normalization: Option<String>,
    /// Comma-separated relevant class ids.
    #[arg(long)]
    pub relevant: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Write one heatmap PNG per frame.
    #[arg(long)]
    pub heatmaps: bool,
    /// Write plot.png with score and MSE traces.
    #[arg(long)]
    pub plot: bool,
    /// native or trainid.
    #[arg(long)]
    pub id_convention: Option<String>,
    /// Convert color frames to grayscale on load.
    #[arg(long)]
    pub grayscale: bool,
    /// Stop after this many frames.
    #[arg(long)]
    pub max_frames: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "native")]
    pub id_convention: String,
}

#[derive(Debug, Clone, Args)]
pub struct EvalPredArgs {
    #[arg(long)]
    pub frames: PathBuf,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "linear")]
    pub predictor: String,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub window_n: usize,
    #[arg(long)]
    pub grayscale: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalSegArgs {
    /// Predicted masks.
    #[arg(long)]
    pub masks: PathBuf,
    /// Ground-truth masks.
    #[arg(long)]
    pub truth: PathBuf,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "native")]
    pub id_convention: String,
    /// Convention of the ground truth files if it differs.
    #[arg(long)]
    pub truth_id_convention: Option<String>,
}

/// Fully resolved settings of a `score` or `stream` run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub frames: PathBuf,
    pub masks: PathBuf,
    pub out: PathBuf,
    pub detector: DetectorConfig,
    pub id_convention: IdConvention,
    pub workers: usize,
    pub heatmaps: bool,
    pub plot: bool,
    pub grayscale: bool,
    pub max_frames: Option<usize>,
}

#[derive(Default)]
struct Settings {
    frames: Option<PathBuf>,
    masks: Option<PathBuf>,
    out: Option<PathBuf>,
    threshold: Option<f64>,
    patch_size: Option<usize>,
    blur_size: Option<usize>,
    blur_sigma: Option<f64>,
    blur: Option<bool>,
    predictor: Option<String>,
    predictions: Option<PathBuf>,
    window_n: Option<usize>,
    mode: Option<String>,
    patch_normalization: Option<String>,
    relevant: Option<String>,
    workers: Option<usize>,
    heatmaps: Option<bool>,
    plot: Option<bool>,
    id_convention: Option<String>,
    grayscale: Option<bool>,
    max_frames: Option<usize>,
}

fn parse_value<T: std::str::FromStr>(key: &str, line: usize, value: &str) -> anyhow::Result<T> {
    value
        .parse()
        .map_err(|_| anyhow::anyhow!("config line {line}: invalid value '{value}' for {key}"))
}

fn flag_value(key: &str, line: usize, value: &str) -> anyhow::Result<bool> {
    parse_bool(value)
        .ok_or_else(|| anyhow::anyhow!("config line {line}: invalid boolean '{value}' for {key}"))
}

impl Settings {
    fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |v: &str| base.join(v);
        let mut s = Settings::default();
        for (line, key, value) in key_values(&text)? {
            let v = value.as_str();
            match key.as_str() {
                "frames" => s.frames = Some(resolve(v)),
                "masks" => s.masks = Some(resolve(v)),
                "out" => s.out = Some(resolve(v)),
                "predictions" => s.predictions = Some(resolve(v)),
                "threshold" => s.threshold = Some(parse_value(&key, line, v)?),
                "patch_size" => s.patch_size = Some(parse_value(&key, line, v)?),
                "blur_size" => s.blur_size = Some(parse_value(&key, line, v)?),
                "blur_sigma" => s.blur_sigma = Some(parse_value(&key, line, v)?),
                "blur" => s.blur = Some(flag_value(&key, line, v)?),
                "predictor" => s.predictor = Some(value),
                "window_n" => s.window_n = Some(parse_value(&key, line, v)?),
                "mode" => s.mode = Some(value),
                "patch_normalization" => s.patch_normalization = Some(value),
                "relevant_classes" => s.relevant = Some(value),
                "workers" => s.workers = Some(parse_value(&key, line, v)?),
                "heatmaps" => s.heatmaps = Some(flag_value(&key, line, v)?),
                "plot" => s.plot = Some(flag_value(&key, line, v)?),
                "id_convention" => s.id_convention = Some(value),
                "grayscale" => s.grayscale = Some(flag_value(&key, line, v)?),
                "max_frames" => s.max_frames = Some(parse_value(&key, line, v)?),
                other => bail!("config line {line}: unknown key '{other}'"),
            }
        }
        Ok(s)
    }

    fn apply_flags(&mut self, a: &DetectArgs) {
        fn over<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                *slot = v.clone();
            }
        }
        over(&mut self.frames, &a.frames);
        over(&mut self.masks, &a.masks);
        over(&mut self.out, &a.out);
        over(&mut self.threshold, &a.threshold);
        over(&mut self.patch_size, &a.patch_size);
        over(&mut self.blur_size, &a.blur_size);
        over(&mut self.blur_sigma, &a.blur_sigma);
        over(&mut self.predictor, &a.predictor);
        over(&mut self.predictions, &a.predictions);
        over(&mut self.window_n, &a.window_n);
        over(&mut self.mode, &a.mode);
        over(&mut self.patch_normalization, &a.patch_normalization);
        over(&mut self.relevant, &a.relevant);
        over(&mut self.workers, &a.workers);
        over(&mut self.id_convention, &a.id_convention);
        over(&mut self.max_frames, &a.max_frames);
        if a.no_blur {
            self.blur = Some(false);
        }
        if a.heatmaps {
            self.heatmaps = Some(true);
        }
        if a.plot {
            self.plot = Some(true);
        }
        if a.grayscale {
            self.grayscale = Some(true);
        }
    }
}

fn build_predictor(name: &str, predictions: Option<&Path>, window_n: usize) -> anyhow::Result<Predictor> {
    let kind = match name.parse::<PredictorName>()? {
        PredictorName::Persistence => PredictorKind::Persistence,
        PredictorName::Linear => PredictorKind::LinearExtrapolation,
        PredictorName::External => {
            let dir = predictions.context("--predictor external needs --predictions <dir>")?;
            PredictorKind::External(ExternalPredictions::open(dir)?)
        }
    };
    Ok(Predictor::new(kind, window_n)?)
}

fn parse_relevant(list: &str) -> anyhow::Result<ClassTable> {
    let ids = list
        .split(',')
        .map(|t| t.trim().parse::<u8>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("invalid relevant class list '{list}'"))?;
    Ok(ClassTable::with_relevant(&ids)?)
}

impl RunConfig {
    pub fn resolve(args: &DetectArgs) -> anyhow::Result<Self> {
        let mut s = match &args.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        s.apply_flags(args);

        let defaults = DetectorConfig::default();
        let blur = if s.blur.unwrap_or(true) {
            Some(BlurConfig::new(
                s.blur_size.unwrap_or(BlurConfig::default().kernel_size),
                s.blur_sigma.unwrap_or(BlurConfig::default().sigma),
            )?)
        } else {
            None
        };
        let patch_size = match s.patch_size {
            Some(0) => None,
            Some(p) => Some(p),
            None => defaults.patch_size,
        };
        let predictor = build_predictor(
            s.predictor.as_deref().unwrap_or("linear"),
            s.predictions.as_deref(),
            s.window_n.unwrap_or(defaults.predictor.window()),
        )?;
        let detector = DetectorConfig {
            blur,
            class_table: match &s.relevant {
                Some(list) => parse_relevant(list)?,
                None => defaults.class_table,
            },
            patch_size,
            normalization: match &s.mode {
                Some(m) => m.parse()?,
                None => NormalizationMode::OfflineGlobal,
            },
            patch_normalization: match &s.patch_normalization {
                Some(m) => m.parse()?,
                None => PatchNormalization::PerPosition,
            },
            threshold: s.threshold.unwrap_or(defaults.threshold),
            predictor,
        };
        detector.validate()?;

        let frames = s.frames.context("missing --frames")?;
        let masks = s.masks.context("missing --masks")?;
        let out = s.out.context("missing --out")?;
        for (what, dir) in [("frames", &frames), ("masks", &masks)] {
            if !dir.is_dir() {
                bail!("{what} directory {} does not exist", dir.display());
            }
        }
        let workers = s.workers.unwrap_or(1);
        if workers == 0 {
            bail!("--workers must be at least 1");
        }
        Ok(Self {
            frames,
            masks,
            out,
            detector,
            id_convention: match &s.id_convention {
                Some(c) => c.parse()?,
                None => IdConvention::Native,
            },
            workers,
            heatmaps: s.heatmaps.unwrap_or(false),
            plot: s.plot.unwrap_or(false),
            grayscale: s.grayscale.unwrap_or(false),
            max_frames: s.max_frames,
        })
    }
}

/// Frame files paired with their mask files by index.
fn paired_inputs(cfg: &RunConfig) -> anyhow::Result<Vec<(u64, PathBuf, PathBuf)>> {
    let mut frames = list_sequence(&cfg.frames)?;
    if frames.is_empty() {
        bail!("no frames found in {}", cfg.frames.display());
    }
    if let Some(k) = cfg.max_frames {
        frames.truncate(k);
    }
    let masks: std::collections::BTreeMap<u64, PathBuf> = list_sequence(&cfg.masks)?.into_iter().collect();
    frames
        .into_iter()
        .map(|(index, path)| match masks.get(&index) {
            Some(mask) => Ok((index, path, mask.clone())),
            None => bail!("missing mask for frame index {index} in {}", cfg.masks.display()),
        })
        .collect()
}

fn fmt_event(id: Option<u32>) -> String {
    id.map(|i| i.to_string()).unwrap_or_default()
}

pub const SCORE_HEADER: &str = "frame_index,raw_score,normalized_score,warmup_flag,event_id";

pub fn score_row(r: &ScoreRecord, event: Option<u32>) -> String {
    format!(
        "{},{},{},{},{}",
        r.frame_index,
        r.raw,
        r.normalized,
        u8::from(r.warmup),
        fmt_event(event)
    )
}

pub fn events_csv(events: &[Event]) -> String {
    let mut out = String::from("event_id,frame_start,frame_end,peak_frame,peak_score\n");
    for e in events {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.id, e.start, e.end, e.peak_frame, e.peak_score
        ));
    }
    out
}

pub fn scores_csv(output: &DetectorOutput) -> String {
    let mut out = String::from(SCORE_HEADER);
    out.push('\n');
    for (r, id) in output.series.records.iter().zip(output.event_ids()) {
        out.push_str(&score_row(r, id));
        out.push('\n');
    }
    out
}

fn write_heatmap(dir: &Path, record: &ScoreRecord, height: usize, width: usize) -> anyhow::Result<()> {
    let map = match &record.patches {
        Some(grid) => patch_heatmap(grid, height, width)?,
        None => Frame::filled(height, width, 1, 0)?,
    };
    crate::imaging::save_frame(dir.join(format!("{:06}.png", record.frame_index)), &map)?;
    Ok(())
}

pub fn load_run_input(cfg: &RunConfig) -> anyhow::Result<DetectorInput> {
    let pairs = paired_inputs(cfg)?;
    let mut input = DetectorInput::default();
    for (index, frame, mask) in pairs {
        input.indices.push(index);
        input.frames.push(
            load_frame(&frame, cfg.grayscale)
                .with_context(|| format!("loading frame {}", frame.display()))?,
        );
        input.masks.push(
            load_mask(&mask, cfg.id_convention)
                .with_context(|| format!("loading mask {}", mask.display()))?,
        );
    }
    Ok(input)
}

/// Offline scoring. Nothing is written unless the whole run succeeds.
pub fn cmd_score(cfg: &RunConfig) -> anyhow::Result<DetectorOutput> {
    let input = load_run_input(cfg)?;
    let output = run_detector(&input, &cfg.detector, cfg.workers)?;

    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("scores.csv"), scores_csv(&output))?;
    fs::write(cfg.out.join("events.csv"), events_csv(&output.events))?;
    if cfg.heatmaps {
        let dir = cfg.out.join("heatmaps");
        fs::create_dir_all(&dir)?;
        let (h, w) = (input.frames[0].height(), input.frames[0].width());
        for r in &output.series.records {
            write_heatmap(&dir, r, h, w)?;
        }
    }
    if cfg.plot {
        save_score_plot(cfg.out.join("plot.png"), &output.series)?;
    }
    Ok(output)
}

/// Streaming scoring: one flushed CSV row per processed frame.
pub fn cmd_stream(cfg: &RunConfig) -> anyhow::Result<(ScoreSeries, Vec<Event>)> {
    let pairs = paired_inputs(cfg)?;
    let mut detector_cfg = cfg.detector.clone();
    detector_cfg.normalization = NormalizationMode::OnlineRunning;
    let mut detector = OnlineDetector::new(detector_cfg)?;

    fs::create_dir_all(&cfg.out)?;
    let heatmap_dir = cfg.out.join("heatmaps");
    if cfg.heatmaps {
        fs::create_dir_all(&heatmap_dir)?;
    }
    let mut csv = BufWriter::new(File::create(cfg.out.join("scores.csv"))?);
    writeln!(csv, "{SCORE_HEADER}")?;
    csv.flush()?;

    let mut series = ScoreSeries::default();
    for (index, frame_path, mask_path) in pairs {
        let frame = load_frame(&frame_path, cfg.grayscale)
            .with_context(|| format!("loading frame {}", frame_path.display()))?;
        let mask = load_mask(&mask_path, cfg.id_convention)
            .with_context(|| format!("loading mask {}", mask_path.display()))?;
        let (h, w) = (frame.height(), frame.width());
        let row = detector.push(index, frame, &mask)?;
        writeln!(csv, "{}", score_row(&row.record, row.event_id))?;
        csv.flush()?;
        if cfg.heatmaps {
            write_heatmap(&heatmap_dir, &row.record, h, w)?;
        }
        series.records.push(row.record);
    }
    let events = detector.finish();
    fs::write(cfg.out.join("events.csv"), events_csv(&events))?;
    if cfg.plot {
        save_score_plot(cfg.out.join("plot.png"), &series)?;
    }
    Ok((series, events))
}

pub fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.spec)
        .with_context(|| format!("cannot read scenario {}", args.spec.display()))?;
    let spec = ScenarioSpec::parse(&text)?;
    let scenario = generate_scenario(&spec)?;
    write_scenario(&args.out, &spec, &scenario, args.id_convention.parse()?)?;
    Ok(())
}

pub fn cmd_eval_pred(args: &EvalPredArgs) -> anyhow::Result<()> {
    let seq = list_sequence(&args.frames)?;
    if seq.is_empty() {
        bail!("no frames found in {}", args.frames.display());
    }
    let predictor = build_predictor(&args.predictor, args.predictions.as_deref(), args.window_n)?;
    let indices: Vec<u64> = seq.iter().map(|(i, _)| *i).collect();
    let frames = seq
        .iter()
        .map(|(_, p)| load_frame(p, args.grayscale))
        .collect::<Result<Vec<_>, _>>()?;
    let report = evaluate_predictor(&frames, &indices, &predictor)?;

    let mut out = String::from("frame_index,mse,psnr,ssim,psnr_of_mean_mse\n");
    for r in &report.rows {
        out.push_str(&format!("{},{},{},{},\n", r.frame_index, r.mse, r.psnr, r.ssim));
    }
    out.push_str(&format!(
        "mean,{},{},{},{}\n",
        report.mean_mse, report.mean_psnr, report.mean_ssim, report.psnr_of_mean_mse
    ));
    write_file(&args.out, &out)
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

pub fn cmd_eval_seg(args: &EvalSegArgs) -> anyhow::Result<()> {
    let pred_conv: IdConvention = args.id_convention.parse()?;
    let truth_conv: IdConvention = match &args.truth_id_convention {
        Some(c) => c.parse()?,
        None => pred_conv,
    };
    let preds = list_sequence(&args.masks)?;
    if preds.is_empty() {
        bail!("no masks found in {}", args.masks.display());
    }
    let truths: std::collections::BTreeMap<u64, PathBuf> = list_sequence(&args.truth)?.into_iter().collect();

    let mut total = ConfusionMatrix::new(VOID_LABEL);
    let mut frame_scores = Vec::new();
    for (index, path) in &preds {
        let truth_path = truths
            .get(index)
            .with_context(|| format!("missing ground truth for mask index {index}"))?;
        let pred: ClassMask = load_mask(path, pred_conv)?;
        let truth = load_mask(truth_path, truth_conv)?;
        let mut m = ConfusionMatrix::new(VOID_LABEL);
        m.accumulate(&pred, &truth)?;
        if let Ok(v) = frame_iou(&m) {
            frame_scores.push(v);
        }
        total.merge(&m);
    }
    let report = iou(&total)?;

    let mut out = String::from("class_id,class_name,true_positive,false_positive,false_negative,iou\n");
    for c in &report.per_class {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.class_id,
            class_name(c.class_id).unwrap_or("?"),
            c.true_positive,
            c.false_positive,
            c.false_negative,
            c.iou.map(|v| v.to_string()).unwrap_or_default()
        ));
    }
    out.push_str(&format!("mean,mean_iou,,,,{}\n", report.mean));
    let frame_mean = frame_scores.iter().sum::<f64>() / frame_scores.len().max(1) as f64;
    out.push_str(&format!("frame_mean,frame_wise_iou,,,,{frame_mean}\n"));
    write_file(&args.out, &out)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Score(args) => cmd_score(&RunConfig::resolve(&args)?).map(|_| ()),
        Command::Stream(args) => cmd_stream(&RunConfig::resolve(&args)?).map(|_| ()),
        Command::Synth(args) => cmd_synth(&args),
        Command::EvalPred(args) => cmd_eval_pred(&args),
        Command::EvalSeg(args) => cmd_eval_seg(&args),
    }
}
