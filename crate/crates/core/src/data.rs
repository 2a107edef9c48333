//! File formats: VOT annotation lines, netpbm frames, sequence
//! directories, configuration and tracker results.

use std::fmt::Write as _;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{parse_matches, Point2, PointMatch, RansacConfig};
use crate::image::Image;
use crate::matcher::{MatcherConfig, RotatedBox};
use crate::motion::KalmanConfig;
use crate::pipeline::{TrackOutput, TrackRecord, TrackStatus, TrackerConfig, TrackerMode};
use crate::region::RegionConfig;

pub const GROUNDTRUTH_FILE: &str = "groundtruth.txt";
pub const RESULTS_FILE: &str = "results.txt";
pub const PREDICTIONS_FILE: &str = "predictions.txt";

pub fn matches_file_name(frame: usize) -> String {
    format!("matches_{frame:06}.txt")
}

pub fn frame_file_name(frame: usize) -> String {
    format!("{frame:06}.pgm")
}

fn parse_numbers(line: &str) -> Result<Vec<f64>> {
    line.trim()
        .split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("bad number `{}` in `{}`", f.trim(), line.trim())))
        })
        .collect()
}

/// Eight numbers are four corners in order; four are `x,y,w,h`.
pub fn parse_vot_line(line: &str) -> Result<RotatedBox> {
    let v = parse_numbers(line)?;
    match v.len() {
        8 => Ok(RotatedBox::new([
            Point2::new(v[0], v[1]),
            Point2::new(v[2], v[3]),
            Point2::new(v[4], v[5]),
            Point2::new(v[6], v[7]),
        ])),
        4 => Ok(RotatedBox::axis_aligned(v[0], v[1], v[2], v[3])),
        n => Err(Error::Parse(format!("expected 4 or 8 values, found {n}"))),
    }
}

pub fn format_vot_line(b: &RotatedBox) -> String {
    b.corners
        .iter()
        .map(|p| format!("{:.4},{:.4}", p.x, p.y))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_groundtruth(text: &str) -> Result<Vec<RotatedBox>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_vot_line(l).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn format_groundtruth(boxes: &[RotatedBox]) -> String {
    boxes.iter().map(|b| format_vot_line(b) + "\n").collect()
}

/// Reads a P2/P3/P5/P6 file into `[0, 1]` intensities; color is averaged
/// over channels.
pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    decode_netpbm(&bytes)
}

pub fn decode_netpbm(bytes: &[u8]) -> Result<Image> {
    match bytes.get(..2) {
        Some(b"P2" | b"P3" | b"P5" | b"P6") => {}
        _ => return Err(Error::UnsupportedFormat("expected a P2, P3, P5 or P6 netpbm file".into())),
    }
    let decoded = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Pnm)
        .decode()
        .map_err(|e| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let data: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb8(b) => b
            .into_raw()
            .chunks_exact(3)
            .map(|c| (c[0] as f64 + c[1] as f64 + c[2] as f64) / (3.0 * 255.0))
            .collect(),
        DynamicImage::ImageRgb16(b) => b
            .into_raw()
            .chunks_exact(3)
            .map(|c| (c[0] as f64 + c[1] as f64 + c[2] as f64) / (3.0 * 65535.0))
            .collect(),
        other => other
            .to_rgb32f()
            .into_raw()
            .chunks_exact(3)
            .map(|c| ((c[0] + c[1] + c[2]) as f64 / 3.0).clamp(0.0, 1.0))
            .collect(),
    };
    Image::new(w, h, data)
}

/// Writes an 8-bit binary PGM.
pub fn save_pgm(path: &Path, img: &Image) -> Result<()> {
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&img.to_u8(), img.width() as u32, img.height() as u32, ExtendedColorType::L8)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(path, buf)?;
    Ok(())
}

/// Diagonal noise terms of the constant-velocity model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanParams {
    pub process_noise: [f64; 4],
    pub measurement_noise: [f64; 2],
    pub initial_covariance: [f64; 4],
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            process_noise: [1.0, 1.0, 4.0, 4.0],
            measurement_noise: [4.0, 4.0],
            initial_covariance: [10.0, 10.0, 100.0, 100.0],
        }
    }
}

impl KalmanParams {
    pub fn to_config(&self) -> Result<KalmanConfig> {
        let fields: [(&str, &[f64]); 3] = [
            ("process_noise", &self.process_noise),
            ("measurement_noise", &self.measurement_noise),
            ("initial_covariance", &self.initial_covariance),
        ];
        for (name, values) in fields {
            if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config {
                    path: format!("kalman.{name}"),
                    message: "entries must be finite and non-negative".into(),
                });
            }
        }
        Ok(KalmanConfig::constant_velocity(
            self.process_noise,
            self.measurement_noise,
            self.initial_covariance,
        ))
    }
}

/// On-disk form of [`TrackerConfig`]. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub reference_interval: usize,
    pub reinit_gap: usize,
    pub mode: TrackerMode,
    pub matcher: String,
    pub region: RegionConfig,
    pub kalman: KalmanParams,
    pub ransac: RansacConfig,
    pub matcher_params: MatcherConfig,
}

impl Default for ConfigFile {
    fn default() -> Self {
        let d = TrackerConfig::default();
        Self {
            reference_interval: d.reference_interval,
            reinit_gap: d.reinit_gap,
            mode: d.mode,
            matcher: d.matcher,
            region: d.region,
            kalman: KalmanParams::default(),
            ransac: d.ransac,
            matcher_params: d.matcher_params,
        }
    }
}

impl ConfigFile {
    pub fn to_config(&self) -> Result<TrackerConfig> {
        let cfg = TrackerConfig {
            reference_interval: self.reference_interval,
            reinit_gap: self.reinit_gap,
            mode: self.mode,
            region: self.region,
            kalman: self.kalman.to_config()?,
            ransac: self.ransac,
            matcher: self.matcher.clone(),
            matcher_params: self.matcher_params,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_config(text: &str) -> Result<TrackerConfig> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    file.to_config()
}

pub fn load_config(path: &Path) -> Result<TrackerConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// A sequence directory: ordered frames, ground truth, per-frame matches.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBundle {
    pub dir: PathBuf,
    pub frames: Vec<PathBuf>,
    pub groundtruth: Vec<RotatedBox>,
    /// `matches[t]` relates frame `t − 1` to frame `t`.
    pub matches: Vec<Option<PathBuf>>,
}

impl SequenceBundle {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn load_frame(&self, t: usize) -> Result<Image> {
        load_image(&self.frames[t])
    }

    pub fn load_matches(&self, t: usize) -> Result<Vec<PointMatch>> {
        match &self.matches[t] {
            Some(p) => parse_matches(&fs::read_to_string(p)?),
            None => Ok(Vec::new()),
        }
    }
}

/// Frames are the `.pgm`/`.ppm`/`.pnm` files in lexicographic order.
pub fn load_sequence(dir: &Path) -> Result<SequenceBundle> {
    let mut frames: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "ppm" | "pnm"))
        })
        .collect();
    frames.sort();
    let gt_path = dir.join(GROUNDTRUTH_FILE);
    let groundtruth = parse_groundtruth(&fs::read_to_string(&gt_path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", gt_path.display())))
    })?)?;
    if groundtruth.len() != frames.len() {
        return Err(Error::LengthMismatch(format!(
            "{} frames but {} ground-truth lines in {}",
            frames.len(),
            groundtruth.len(),
            dir.display()
        )));
    }
    let matches = (0..frames.len())
        .map(|t| Some(dir.join(matches_file_name(t))).filter(|p| p.is_file()))
        .collect();
    Ok(SequenceBundle {
        dir: dir.to_path_buf(),
        frames,
        groundtruth,
        matches,
    })
}

/// One line of a results file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResultLine {
    Init,
    Failure,
    Skipped,
    Box(RotatedBox),
}

impl ResultLine {
    pub fn from_output(o: &TrackOutput) -> Self {
        match o.status {
            TrackStatus::Initialized => ResultLine::Init,
            TrackStatus::Failed => ResultLine::Failure,
            TrackStatus::Reinitializing => ResultLine::Skipped,
            TrackStatus::Tracked => ResultLine::Box(o.bbox),
        }
    }

    pub fn status(&self) -> TrackStatus {
        match self {
            ResultLine::Init => TrackStatus::Initialized,
            ResultLine::Failure => TrackStatus::Failed,
            ResultLine::Skipped => TrackStatus::Reinitializing,
            ResultLine::Box(_) => TrackStatus::Tracked,
        }
    }
}

pub fn format_results(record: &TrackRecord) -> String {
    let mut s = String::new();
    for o in &record.outputs {
        match ResultLine::from_output(o) {
            ResultLine::Init => s.push_str("1\n"),
            ResultLine::Failure => s.push_str("2\n"),
            ResultLine::Skipped => s.push_str("0\n"),
            ResultLine::Box(b) => {
                s.push_str(&format_vot_line(&b));
                s.push('\n');
            }
        }
    }
    s
}

pub fn parse_results(text: &str) -> Result<Vec<ResultLine>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.trim() {
            "1" => Ok(ResultLine::Init),
            "2" => Ok(ResultLine::Failure),
            "0" => Ok(ResultLine::Skipped),
            _ => parse_vot_line(l)
                .map(ResultLine::Box)
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1))),
        })
        .collect()
}

/// Per-frame prior as written to the predictions file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionLine {
    pub frame: usize,
    pub status: TrackStatus,
    pub center: Point2,
    pub velocity: Point2,
}

pub fn format_predictions(record: &TrackRecord) -> String {
    let mut s = String::from("frame,status,px,py,vx,vy\n");
    for o in &record.outputs {
        let (c, v) = (o.predicted_center, o.predicted_velocity);
        let _ = writeln!(s, "{},{},{:.6},{:.6},{:.6},{:.6}", o.frame_index, o.status, c.x, c.y, v.x, v.y);
    }
    s
}

pub fn parse_predictions(text: &str) -> Result<Vec<PredictionLine>> {
    text.lines()
        .enumerate()
        .filter(|(i, l)| !l.trim().is_empty() && !(*i == 0 && l.starts_with("frame")))
        .map(|(i, l)| {
            let bad = |what: &str| Error::Parse(format!("predictions line {}: {what}", i + 1));
            let f: Vec<&str> = l.trim().split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(bad("expected 6 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
            Ok(PredictionLine {
                frame: f[0].parse().map_err(|_| bad("bad frame index"))?,
                status: f[1].parse()?,
                center: Point2::new(num(f[2])?, num(f[3])?),
                velocity: Point2::new(num(f[4])?, num(f[5])?),
            })
        })
        .collect()
}

/// Rebuilds a record from results (and optionally predictions) files so
/// that evaluation runs through the same summary code as in-memory runs.
pub fn record_from_results(results: &[ResultLine], predictions: Option<&[PredictionLine]>) -> Result<TrackRecord> {
    if let Some(p) = predictions {
        if p.len() != results.len() {
            return Err(Error::LengthMismatch(format!(
                "{} result lines, {} prediction lines",
                results.len(),
                p.len()
            )));
        }
    }
    let mut record = TrackRecord::default();
    for (t, line) in results.iter().enumerate() {
        let bbox = match line {
            ResultLine::Box(b) => *b,
            _ => RotatedBox::point(Point2::ZERO),
        };
        let pred = predictions.map(|p| p[t]);
        match line {
            ResultLine::Failure => record.failure_count += 1,
            ResultLine::Init if t > 0 => record.reinit_events.push(t),
            _ => {}
        }
        record.outputs.push(TrackOutput {
            frame_index: t,
            predicted_center: pred.map_or(Point2::ZERO, |p| p.center),
            predicted_velocity: pred.map_or(Point2::ZERO, |p| p.velocity),
            bbox,
            mask: bbox.rasterize(),
            score: 0.0,
            status: line.status(),
        });
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vot_lines() {
        let b = parse_vot_line("100,100,200,100,200,150,100,150").unwrap();
        assert_eq!(b.corners[2], Point2::new(200.0, 150.0));
        let b = parse_vot_line("10,20,30,40").unwrap();
        assert_eq!(
            b.corners,
            [
                Point2::new(10.0, 20.0),
                Point2::new(40.0, 20.0),
                Point2::new(40.0, 60.0),
                Point2::new(10.0, 60.0)
            ]
        );
        assert!(matches!(parse_vot_line("1,2,3"), Err(Error::Parse(_))));
        assert!(parse_vot_line("1,2,x,4").is_err());
        assert_eq!(
            format_vot_line(&RotatedBox::axis_aligned(0.0, 0.0, 1.0, 1.0)),
            "0.0000,0.0000,1.0000,0.0000,1.0000,1.0000,0.0000,1.0000"
        );
        assert_eq!(
            format_vot_line(&RotatedBox::point(Point2::new(2.5, 3.0))),
            "2.5000,3.0000,2.5000,3.0000,2.5000,3.0000,2.5000,3.0000"
        );
    }

    #[test]
    fn netpbm_decoding() {
        let p5 = [b"P5\n2 1\n255\n".as_slice(), &[255, 0]].concat();
        let img = decode_netpbm(&p5).unwrap();
        assert_eq!(img.get(0, 0), 1.0);
        assert_eq!(img.get(1, 0), 0.0);
        let p6 = [b"P6\n1 1\n255\n".as_slice(), &[30, 60, 90]].concat();
        assert!((decode_netpbm(&p6).unwrap().get(0, 0) - 60.0 / 255.0).abs() < 1e-12);
        let p2 = b"P2\n2 2\n4\n0 1\n2 4\n";
        let img = decode_netpbm(p2).unwrap();
        assert!((img.get(1, 1) - 1.0).abs() < 1e-12);
        assert!((img.get(0, 1) - 0.5).abs() < 0.01);
        let truncated = [b"P5\n4 4\n255\n".as_slice(), &[1, 2, 3]].concat();
        assert!(matches!(decode_netpbm(&truncated), Err(Error::Io(_))));
        assert!(matches!(decode_netpbm(b"\x89PNG...."), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = Image::from_fn(7, 5, |x, y| ((x * 31 + y * 17) % 256) as f64 / 255.0);
        save_pgm(&path, &img).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
        assert!(matches!(load_image(&dir.path().join("missing.pgm")), Err(Error::Io(_))));
    }

    #[test]
    fn config_defaults_and_overrides() {
        let d = parse_config("").unwrap();
        assert_eq!(d, TrackerConfig::default());
        assert_eq!(parse_config("{}").unwrap(), d);
        assert_eq!(d.reference_interval, 10);
        assert_eq!(d.reinit_gap, 5);
        assert_eq!(d.region.velocity_threshold, 5.0);
        let c = parse_config(r#"{"region": {"velocity_threshold": 8}}"#).unwrap();
        assert_eq!(c.region.velocity_threshold, 8.0);
        assert_eq!(
            TrackerConfig {
                region: RegionConfig {
                    velocity_threshold: 5.0,
                    ..c.region
                },
                ..c
            },
            d
        );
        let c = parse_config(r#"{"mode": "baseline", "kalman": {"measurement_noise": [1, 2]}}"#).unwrap();
        assert_eq!(c.mode, TrackerMode::Baseline);
        assert_eq!(c.kalman.measurement_noise[(1, 1)], 2.0);
    }

    #[test]
    fn config_errors_name_the_key() {
        let e = parse_config(r#"{"foo": 1}"#).unwrap_err();
        assert!(e.to_string().contains("foo"), "{e}");
        let e = parse_config(r#"{"region": {"velocity_treshold": 1}}"#).unwrap_err();
        assert!(e.to_string().contains("region"), "{e}");
        assert!(e.to_string().contains("velocity_treshold"), "{e}");
        match parse_config(r#"{"ransac": {"max_iterations": "many"}}"#).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "ransac.max_iterations"),
            other => panic!("{other}"),
        }
        match parse_config(r#"{"reference_interval": 0}"#).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "reference_interval"),
            other => panic!("{other}"),
        }
        assert!(parse_config(r#"{"matcher": "siam"}"#).is_err());
    }

    #[test]
    fn results_round_trip() {
        let b = RotatedBox::axis_aligned(1.25, 2.5, 10.0, 4.0);
        let mut record = TrackRecord::default();
        for (t, status) in [TrackStatus::Initialized, TrackStatus::Tracked, TrackStatus::Failed, TrackStatus::Reinitializing, TrackStatus::Initialized]
            .into_iter()
            .enumerate()
        {
            record.outputs.push(TrackOutput {
                frame_index: t,
                predicted_center: Point2::new(t as f64, 0.5),
                predicted_velocity: Point2::new(-1.0, 0.25),
                bbox: b,
                mask: b.rasterize(),
                score: 1.0,
                status,
            });
        }
        record.failure_count = 1;
        record.reinit_events = vec![4];
        let text = format_results(&record);
        assert_eq!(text.lines().collect::<Vec<_>>()[..3], ["1", &format_vot_line(&b), "2"]);
        let lines = parse_results(&text).unwrap();
        let preds = parse_predictions(&format_predictions(&record)).unwrap();
        let back = record_from_results(&lines, Some(&preds)).unwrap();
        assert_eq!(back.failure_count, 1);
        assert_eq!(back.reinit_events, vec![4]);
        for (a, b) in back.outputs.iter().zip(&record.outputs) {
            assert_eq!(a.status, b.status);
            assert_eq!(a.predicted_center, b.predicted_center);
            assert_eq!(a.predicted_velocity, b.predicted_velocity);
        }
        assert_eq!(back.outputs[1].bbox, b);
        assert!(record_from_results(&lines, Some(&preds[..2])).is_err());
    }

    #[test]
    fn sequence_loading() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::filled(4, 4, 0.5);
        for name in ["000002.pgm", "000000.pgm", "000001.pgm"] {
            save_pgm(&dir.path().join(name), &img).unwrap();
        }
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        fs::write(dir.path().join(matches_file_name(1)), "0 0 1 1\n").unwrap();
        assert!(matches!(load_sequence(dir.path()), Err(Error::Io(_))));
        fs::write(dir.path().join(GROUNDTRUTH_FILE), "0,0,2,2\n0,0,2,2\n").unwrap();
        assert!(matches!(load_sequence(dir.path()), Err(Error::LengthMismatch(_))));
        fs::write(dir.path().join(GROUNDTRUTH_FILE), "0,0,2,2\n0,0,2,2\n1,1,2,2\n").unwrap();
        let seq = load_sequence(dir.path()).unwrap();
        let names: Vec<_> = seq.frames.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_owned()).collect();
        assert_eq!(names, ["000000.pgm", "000001.pgm", "000002.pgm"]);
        assert!(seq.matches[0].is_none() && seq.matches[1].is_some());
        assert_eq!(seq.load_matches(1).unwrap().len(), 1);
        assert!(seq.load_matches(2).unwrap().is_empty());
        assert_eq!(seq, load_sequence(dir.path()).unwrap());
    }

    proptest! {
        #[test]
        fn vot_round_trip(c in proptest::array::uniform8(-1000f64..1000.0)) {
            let b = RotatedBox::new([
                Point2::new(c[0], c[1]), Point2::new(c[2], c[3]),
                Point2::new(c[4], c[5]), Point2::new(c[6], c[7]),
            ]);
            let back = parse_vot_line(&format_vot_line(&b)).unwrap();
            for (p, q) in b.corners.iter().zip(&back.corners) {
                prop_assert!((p.x - q.x).abs() <= 1e-4 && (p.y - q.y).abs() <= 1e-4);
            }
        }
    }
}
