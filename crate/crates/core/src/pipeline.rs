//! The per-frame tracking loop and the reinitialization protocol.
//!
//! A [`Session`] keeps the object state in the coordinates of a reference
//! frame. Every step chains the frame-to-frame camera homography onto the
//! reference→current map, predicts, searches a patch around the projected
//! prediction, and folds the mask center of mass back in as a measurement.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ransac_homography_within, Homography, Point2, PointMatch, RansacConfig, SamplingBounds};
use crate::image::Image;
use crate::matcher::{matcher_for_key, BinaryMask, Matcher, MatcherConfig, NccMatcher, RotatedBox};
use crate::metrics::overlap_mask;
use crate::motion::{center_of_mass, KalmanConfig, MotionFilter};
use crate::region::{adaptive_scale, extract_patch, region_size, PatchTransform, RegionConfig, SearchRegion};

/// Which parts of the predictor are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackerMode {
    /// Camera compensation, Kalman prediction and adaptive region.
    #[default]
    Pts,
    /// Window on the last position, fixed scale 2.
    Baseline,
    /// Full prediction with the scale fixed at 2.
    PtsNoRegion,
    /// Window on the last position with the adaptive scale.
    PtsNoPrediction,
}

impl TrackerMode {
    pub const ALL: [TrackerMode; 4] = [
        TrackerMode::Pts,
        TrackerMode::Baseline,
        TrackerMode::PtsNoRegion,
        TrackerMode::PtsNoPrediction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrackerMode::Pts => "pts",
            TrackerMode::Baseline => "baseline",
            TrackerMode::PtsNoRegion => "pts-no-region",
            TrackerMode::PtsNoPrediction => "pts-no-prediction",
        }
    }

    fn predicts(self) -> bool {
        matches!(self, TrackerMode::Pts | TrackerMode::PtsNoRegion)
    }

    fn fixed_scale(self) -> Option<f64> {
        match self {
            TrackerMode::Baseline | TrackerMode::PtsNoRegion => Some(2.0),
            _ => None,
        }
    }
}

impl fmt::Display for TrackerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrackerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrackerMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Frames between reference-frame refreshes.
    pub reference_interval: usize,
    /// Frames skipped after a failure before reinitializing.
    pub reinit_gap: usize,
    pub mode: TrackerMode,
    pub region: RegionConfig,
    pub kalman: KalmanConfig,
    pub ransac: RansacConfig,
    pub matcher: String,
    pub matcher_params: MatcherConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            reference_interval: 10,
            reinit_gap: 5,
            mode: TrackerMode::Pts,
            region: RegionConfig::default(),
            kalman: KalmanConfig::default(),
            ransac: RansacConfig::default(),
            matcher: NccMatcher::KEY.to_string(),
            matcher_params: MatcherConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn with_mode(mut self, mode: TrackerMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.reference_interval == 0 {
            return Err(Error::Config {
                path: "reference_interval".into(),
                message: "must be at least 1".into(),
            });
        }
        self.region.validate()?;
        self.ransac.validate()?;
        self.matcher_params.validate()?;
        if matcher_for_key(&self.matcher, self.matcher_params).is_none() {
            return Err(Error::Config {
                path: "matcher".into(),
                message: format!("unknown matcher `{}`", self.matcher),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackStatus {
    /// Started (or restarted) from a given box.
    Initialized,
    Tracked,
    Failed,
    /// Skipped while waiting to restart after a failure.
    Reinitializing,
}

impl TrackStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackStatus::Initialized => "initialized",
            TrackStatus::Tracked => "tracked",
            TrackStatus::Failed => "failed",
            TrackStatus::Reinitializing => "reinitializing",
        }
    }
}

impl fmt::Display for TrackStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrackStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            TrackStatus::Initialized,
            TrackStatus::Tracked,
            TrackStatus::Failed,
            TrackStatus::Reinitializing,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| Error::Parse(format!("unknown status `{s}`")))
    }
}

/// Result of one frame, in that frame's pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub frame_index: usize,
    /// Prior center before this frame's observation.
    pub predicted_center: Point2,
    /// Prior velocity, pixels per frame.
    pub predicted_velocity: Point2,
    pub bbox: RotatedBox,
    pub mask: BinaryMask,
    pub score: f64,
    pub status: TrackStatus,
}

impl TrackOutput {
    fn initialized(frame_index: usize, init_box: &RotatedBox) -> Self {
        Self {
            frame_index,
            predicted_center: init_box.center(),
            predicted_velocity: Point2::ZERO,
            bbox: *init_box,
            mask: init_box.rasterize(),
            score: 1.0,
            status: TrackStatus::Initialized,
        }
    }

    fn skipped(frame_index: usize) -> Self {
        Self {
            frame_index,
            predicted_center: Point2::ZERO,
            predicted_velocity: Point2::ZERO,
            bbox: RotatedBox::point(Point2::ZERO),
            mask: BinaryMask::empty(),
            score: 0.0,
            status: TrackStatus::Reinitializing,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackRecord {
    pub outputs: Vec<TrackOutput>,
    pub failure_count: usize,
    /// Frames at which tracking restarted after a failure.
    pub reinit_events: Vec<usize>,
}

struct Track {
    template: Image,
    extent: (f64, f64),
    filter: MotionFilter,
    reference_index: usize,
    frame_index: usize,
    /// Reference frame → most recent frame.
    ref_to_current: Homography,
    /// Last measured center, current-frame coordinates.
    last_position: Point2,
}

struct Observation {
    mask: BinaryMask,
    bbox: RotatedBox,
    score: f64,
    center: Point2,
}

/// Single-object tracking state machine.
pub struct Session {
    cfg: TrackerConfig,
    matcher: Box<dyn Matcher>,
    track: Option<Track>,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("cfg", &self.cfg)
            .field("matcher", &self.matcher.key())
            .field("initialized", &self.track.is_some())
            .finish()
    }
}

impl Session {
    /// An uninitialized session.
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        let matcher = matcher_for_key(&cfg.matcher, cfg.matcher_params).ok_or_else(|| Error::Config {
            path: "matcher".into(),
            message: format!("unknown matcher `{}`", cfg.matcher),
        })?;
        Ok(Self {
            cfg,
            matcher,
            track: None,
        })
    }

    /// A session initialized on frame 0.
    pub fn start(frame: &Image, init_box: &RotatedBox, cfg: TrackerConfig) -> Result<Self> {
        let mut s = Self::new(cfg)?;
        s.init(frame, init_box, 0)?;
        Ok(s)
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn is_initialized(&self) -> bool {
        self.track.is_some()
    }

    /// Object position in reference-frame coordinates.
    pub fn position(&self) -> Option<Point2> {
        self.track.as_ref().map(|t| t.filter.state().position())
    }

    /// Most recent measured center, in the last processed frame.
    pub fn last_measurement(&self) -> Option<Point2> {
        self.track.as_ref().map(|t| t.last_position)
    }

    pub fn reference_index(&self) -> Option<usize> {
        self.track.as_ref().map(|t| t.reference_index)
    }

    pub fn template(&self) -> Option<&Image> {
        self.track.as_ref().map(|t| &t.template)
    }

    /// (Re)starts tracking from `init_box` on the frame numbered
    /// `frame_index`, which becomes the reference frame.
    pub fn init(&mut self, frame: &Image, init_box: &RotatedBox, frame_index: usize) -> Result<TrackOutput> {
        let (min, max) = init_box.bounds();
        let (w, h) = (max.x - min.x, max.y - min.y);
        let center = init_box.center();
        let inside = center.x >= -0.5
            && center.y >= -0.5
            && center.x < frame.width() as f64 - 0.5
            && center.y < frame.height() as f64 - 0.5;
        if !init_box.is_finite() || !inside || !(w >= 1.0 && h >= 1.0) || init_box.area() <= 0.0 {
            return Err(Error::BoxOutOfBounds);
        }
        let template = frame.crop_centered(center, w.round() as usize, h.round() as usize, frame.mean());
        self.track = Some(Track {
            template,
            extent: (w, h),
            filter: MotionFilter::new(center, frame_index, self.cfg.kalman.clone()),
            reference_index: frame_index,
            frame_index,
            ref_to_current: Homography::identity(),
            last_position: center,
        });
        Ok(TrackOutput::initialized(frame_index, init_box))
    }

    /// Processes the next frame. `matches` map the previous frame's pixels to
    /// this frame's.
    pub fn step(&mut self, frame: &Image, matches: &[PointMatch]) -> Result<TrackOutput> {
        let cfg = &self.cfg;
        let mode = cfg.mode;
        let track = self.track.as_mut().ok_or(Error::NotInitialized)?;
        track.frame_index += 1;
        let frame_index = track.frame_index;

        if mode.predicts() {
            let bounds = SamplingBounds::image(frame.width(), frame.height());
            let step = ransac_homography_within(matches, &cfg.ransac, bounds).map(|(h, _)| h).unwrap_or_default();
            if let Ok(h) = step.compose(&track.ref_to_current) {
                track.ref_to_current = h;
            }
        }
        let h = track.ref_to_current;

        let prior = track.filter.predict().clone();
        let projected = if mode.predicts() {
            h.apply(prior.position())
                .and_then(|c| Ok((c, h.jacobian(prior.position())?)))
                .map(|(c, j)| {
                    let v = j * nalgebra::Vector2::new(prior.velocity().x, prior.velocity().y);
                    (c, Point2::new(v.x, v.y))
                })
                .ok()
        } else {
            Some((track.last_position, Point2::ZERO))
        };

        let mut output = TrackOutput {
            frame_index,
            predicted_center: projected.map_or(track.last_position, |p| p.0),
            predicted_velocity: projected.map_or(Point2::ZERO, |p| p.1),
            bbox: RotatedBox::centered(track.last_position, track.extent.0, track.extent.1),
            mask: BinaryMask::empty(),
            score: 0.0,
            status: TrackStatus::Failed,
        };

        if let Some((center, velocity)) = projected {
            output.bbox = RotatedBox::centered(center, track.extent.0, track.extent.1);
            let k = mode.fixed_scale().or(cfg.region.fixed_scale).unwrap_or_else(|| {
                let v = if mode.predicts() { velocity } else { prior.velocity() };
                adaptive_scale(v, cfg.region.velocity_threshold)
            });
            let obs = observe(self.matcher.as_ref(), cfg, track, frame, center, k);
            if let Some(obs) = obs {
                output.score = obs.score;
                let accepted = !obs.mask.is_empty() && obs.score >= cfg.matcher_params.failure_threshold;
                let z = if mode.predicts() {
                    h.inverse().and_then(|inv| inv.apply(obs.center))
                } else {
                    Ok(obs.center)
                };
                if let (true, Ok(z)) = (accepted, z) {
                    if track.filter.correct(z).is_ok() {
                        track.last_position = obs.center;
                        output.mask = obs.mask;
                        output.bbox = obs.bbox;
                        output.status = TrackStatus::Tracked;
                    }
                }
            }
        }

        if mode.predicts()
            && frame_index - track.reference_index >= cfg.reference_interval
            && track.filter.advance_reference(&h).is_ok()
        {
            track.reference_index = frame_index;
            track.ref_to_current = Homography::identity();
        }
        Ok(output)
    }
}

fn observe(
    matcher: &dyn Matcher,
    cfg: &TrackerConfig,
    track: &Track,
    frame: &Image,
    center: Point2,
    k: f64,
) -> Option<Observation> {
    let (w, h) = track.extent;
    let region = SearchRegion::new(center, region_size(w, h, k).ok()?, cfg.region.out_resolution).ok()?;
    let patch = extract_patch(frame, &region, cfg.region.pad_value);
    let t = patch.transform;
    let r = region.out_resolution;
    let tw = ((track.template.width() as f64 / t.scale).round() as usize).clamp(1, r);
    let th = ((track.template.height() as f64 / t.scale).round() as usize).clamp(1, r);
    let template = track.template.resized(tw, th);
    let found = matcher.locate(&template, &patch.image).ok()?;
    let center = center_of_mass(&found.mask).map(|c| t.to_frame(c)).unwrap_or(center);
    Some(Observation {
        mask: mask_to_frame(&found.mask, &t),
        bbox: found.bbox.inflated(0.5).map(|p| t.to_frame(p)),
        score: found.score,
        center,
    })
}

/// Resamples a patch-space mask onto the frame pixel grid (nearest patch
/// pixel for every frame pixel center).
fn mask_to_frame(mask: &BinaryMask, t: &PatchTransform) -> BinaryMask {
    if mask.is_empty() {
        return BinaryMask::empty();
    }
    let lo = t.to_frame(mask.origin - Point2::new(0.5, 0.5));
    let hi = t.to_frame(mask.origin + Point2::new(mask.width() as f64 - 0.5, mask.height() as f64 - 0.5));
    let (x0, y0) = (lo.x.floor() as i64, lo.y.floor() as i64);
    let (x1, y1) = (hi.x.ceil() as i64, hi.y.ceil() as i64);
    let (w, h) = ((x1 - x0 + 1) as usize, (y1 - y0 + 1) as usize);
    let out = BinaryMask::from_fn(w, h, Point2::new(x0 as f64, y0 as f64), |x, y| {
        let q = t.to_patch(Point2::new((x0 + x as i64) as f64, (y0 + y as i64) as f64)) - mask.origin;
        let (u, v) = (q.x.round(), q.y.round());
        u >= 0.0
            && v >= 0.0
            && (u as usize) < mask.width()
            && (v as usize) < mask.height()
            && mask.get(u as usize, v as usize)
    });
    if out.is_empty() {
        // Patch pixels much finer than frame pixels can miss every center.
        let c = center_of_mass(mask).map(|c| t.to_frame(c)).unwrap_or(lo);
        return BinaryMask::from_pixels(&[(c.x.round() as i64, c.y.round() as i64)]);
    }
    out
}

/// Runs the reinitialization protocol frame by frame: a frame whose mask
/// has no overlap with ground truth counts as a failure, the next
/// `reinit_gap` frames are skipped and tracking restarts from ground truth.
pub struct SequenceRunner {
    session: Session,
    record: TrackRecord,
    skip: usize,
    restart_pending: bool,
    next_index: usize,
}

impl SequenceRunner {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        Ok(Self {
            session: Session::new(cfg)?,
            record: TrackRecord::default(),
            skip: 0,
            restart_pending: true,
            next_index: 0,
        })
    }

    pub fn push(&mut self, frame: &Image, gt: &RotatedBox, matches: &[PointMatch]) -> Result<&TrackOutput> {
        let index = self.next_index;
        self.next_index += 1;
        let output = if self.skip > 0 {
            self.skip -= 1;
            TrackOutput::skipped(index)
        } else if self.restart_pending {
            let out = self.session.init(frame, gt, index)?;
            if index > 0 {
                self.record.reinit_events.push(index);
            }
            self.restart_pending = false;
            out
        } else {
            let mut out = self.session.step(frame, matches)?;
            if overlap_mask(&out.mask, gt) == 0.0 {
                out.status = TrackStatus::Failed;
                self.record.failure_count += 1;
                self.skip = self.session.config().reinit_gap;
                self.restart_pending = true;
            }
            out
        };
        self.record.outputs.push(output);
        Ok(self.record.outputs.last().expect("just pushed"))
    }

    pub fn finish(self) -> TrackRecord {
        self.record
    }
}

/// Tracks a whole sequence under the reinitialization protocol.
/// `matches[t]` relates frame `t − 1` to frame `t`; `matches[0]` is unused.
pub fn run_sequence(
    frames: &[Image],
    gt: &[RotatedBox],
    matches: &[Vec<PointMatch>],
    cfg: &TrackerConfig,
) -> Result<TrackRecord> {
    if frames.len() != gt.len() || frames.len() != matches.len() {
        return Err(Error::LengthMismatch(format!(
            "{} frames, {} ground-truth boxes, {} match sets",
            frames.len(),
            gt.len(),
            matches.len()
        )));
    }
    let mut runner = SequenceRunner::new(cfg.clone())?;
    for ((f, g), m) in frames.iter().zip(gt).zip(matches) {
        runner.push(f, g, m)?;
    }
    Ok(runner.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn textured(w: usize, h: usize, seed: u64) -> Image {
        // Smooth random texture: bilinear upsampling of a coarse grid.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let coarse = Image::from_fn(w / 4 + 2, h / 4 + 2, |_, _| rng.random::<f64>());
        Image::from_fn(w, h, |x, y| coarse.sample(Point2::new(x as f64 / 4.0, y as f64 / 4.0), 0.5))
    }

    /// Flat frame with a textured square whose top-left pixel is `at`.
    fn scene(object: &Image, at: (usize, usize)) -> Image {
        let mut f = Image::filled(160, 120, 0.5);
        for y in 0..object.height() {
            for x in 0..object.width() {
                f.set(at.0 + x, at.1 + y, object.get(x, y));
            }
        }
        f
    }

    fn object_box(at: (usize, usize), size: usize) -> RotatedBox {
        RotatedBox::axis_aligned(at.0 as f64 - 0.5, at.1 as f64 - 0.5, size as f64, size as f64)
    }

    #[test]
    fn init_validation() {
        let f = Image::filled(50, 40, 0.2);
        let cfg = TrackerConfig::default();
        assert!(Session::start(&f, &RotatedBox::axis_aligned(10.0, 10.0, 8.0, 8.0), cfg.clone()).is_ok());
        assert!(matches!(
            Session::start(&f, &RotatedBox::axis_aligned(100.0, 10.0, 8.0, 8.0), cfg.clone()),
            Err(Error::BoxOutOfBounds)
        ));
        assert!(matches!(
            Session::start(&f, &RotatedBox::axis_aligned(10.0, 10.0, 0.0, 0.0), cfg.clone()),
            Err(Error::BoxOutOfBounds)
        ));
        let s = Session::start(&f, &RotatedBox::axis_aligned(10.0, 10.0, 8.0, 8.0), cfg.clone()).unwrap();
        assert_eq!(s.position(), Some(Point2::new(14.0, 14.0)));
        let mut fresh = Session::new(cfg).unwrap();
        assert!(matches!(fresh.step(&f, &[]), Err(Error::NotInitialized)));
    }

    #[test]
    fn unknown_matcher_is_rejected() {
        let cfg = TrackerConfig {
            matcher: "nope".into(),
            ..Default::default()
        };
        assert!(matches!(Session::new(cfg), Err(Error::Config { .. })));
    }

    #[test]
    fn static_object_is_a_fixed_point() {
        let obj = textured(20, 20, 1);
        let at = (60, 40);
        let frame = scene(&obj, at);
        let truth = object_box(at, 20).center();
        let mut s = Session::start(&frame, &object_box(at, 20), TrackerConfig::default()).unwrap();
        for _ in 0..15 {
            let out = s.step(&frame, &[]).unwrap();
            assert_eq!(out.status, TrackStatus::Tracked);
            assert!(out.bbox.center().distance(truth) < 0.5);
            assert!(s.position().unwrap().distance(truth) < 0.5);
        }
    }

    #[test]
    fn moving_object_is_predicted() {
        let obj = textured(20, 20, 2);
        let frames: Vec<Image> = (0..12).map(|t| scene(&obj, (20 + 3 * t, 50))).collect();
        for mode in [TrackerMode::Pts, TrackerMode::Baseline] {
            let cfg = TrackerConfig::default().with_mode(mode);
            let mut s = Session::start(&frames[0], &object_box((20, 50), 20), cfg).unwrap();
            for (t, f) in frames.iter().enumerate().skip(1) {
                let out = s.step(f, &[]).unwrap();
                assert_eq!(out.status, TrackStatus::Tracked);
                let truth = object_box((20 + 3 * t, 50), 20).center();
                let err = out.predicted_center.distance(truth);
                match mode {
                    TrackerMode::Pts if t >= 4 => assert!(err < 1.0, "frame {t}: {err}"),
                    TrackerMode::Baseline => assert!((err - 3.0).abs() < 0.5, "frame {t}: {err}"),
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn baseline_predicts_last_measurement() {
        let obj = textured(16, 16, 4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut at = (70usize, 50usize);
        let first = scene(&obj, at);
        let cfg = TrackerConfig::default().with_mode(TrackerMode::Baseline);
        let mut s = Session::start(&first, &object_box(at, 16), cfg).unwrap();
        let mut last = object_box(at, 16).center();
        for _ in 0..10 {
            at = (at.0 + rng.random_range(0..5) - 2, at.1 + rng.random_range(0..5) - 2);
            let out = s.step(&scene(&obj, at), &[]).unwrap();
            assert_eq!(out.predicted_center, last);
            assert_eq!(out.predicted_velocity, Point2::ZERO);
            last = s.last_measurement().unwrap();
        }
    }

    #[test]
    fn occluded_frame_fails_and_coasts() {
        let obj = textured(20, 20, 5);
        let frame = scene(&obj, (60, 40));
        let blank = Image::filled(160, 120, 0.5);
        let mut s = Session::start(&frame, &object_box((60, 40), 20), TrackerConfig::default()).unwrap();
        s.step(&frame, &[]).unwrap();
        let before = s.position().unwrap();
        let out = s.step(&blank, &[]).unwrap();
        assert_eq!(out.status, TrackStatus::Failed);
        assert!(out.mask.is_empty());
        assert!(s.position().unwrap().distance(before) < 1.0);
    }

    #[test]
    fn camera_translation_is_compensated() {
        // The whole scene shifts by (4, -2) per frame; the object is static
        // in the world, so its reference-frame position stays put.
        let obj = textured(20, 20, 6);
        let bg = textured(300, 260, 7);
        let render = |t: usize| {
            let (dx, dy) = (4.0 * t as f64, -2.0 * t as f64);
            Image::from_fn(160, 120, |x, y| {
                let (wx, wy) = (x as f64 - dx + 110.0, y as f64 - dy + 30.0);
                let (ox, oy) = (wx - 170.0, wy - 70.0);
                if (0.0..20.0).contains(&ox) && (0.0..20.0).contains(&oy) {
                    obj.get(ox as usize, oy as usize)
                } else {
                    bg.get(wx as usize, wy as usize)
                }
            })
        };
        let grid: Vec<Point2> = (0..10)
            .flat_map(|i| (0..8).map(move |j| Point2::new(8.0 + 16.0 * i as f64, 8.0 + 14.0 * j as f64)))
            .collect();
        let matches: Vec<PointMatch> = grid
            .iter()
            .map(|&p| PointMatch::new(p, p + Point2::new(4.0, -2.0)))
            .collect();
        let init = RotatedBox::axis_aligned(59.5, 39.5, 20.0, 20.0);
        let mut s = Session::start(&render(0), &init, TrackerConfig::default()).unwrap();
        for t in 1..17 {
            let out = s.step(&render(t), &matches).unwrap();
            assert_eq!(out.status, TrackStatus::Tracked);
            let truth = init.center() + Point2::new(4.0 * t as f64, -2.0 * t as f64);
            assert!(out.predicted_center.distance(truth) < 1.0, "frame {t}");
            assert!(out.bbox.center().distance(truth) < 1.0, "frame {t}");
        }
        assert_eq!(s.reference_index(), Some(10));
    }

    #[test]
    fn session_is_deterministic() {
        let obj = textured(20, 20, 8);
        let frames: Vec<Image> = (0..8).map(|t| scene(&obj, (30 + 2 * t, 40 + t))).collect();
        let run = || {
            let mut s = Session::start(&frames[0], &object_box((30, 40), 20), TrackerConfig::default()).unwrap();
            frames[1..].iter().map(|f| s.step(f, &[]).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn protocol_counts_failures_and_restarts() {
        let obj = textured(20, 20, 10);
        let good = scene(&obj, (60, 40));
        let blank = Image::filled(160, 120, 0.5);
        let gt = object_box((60, 40), 20);
        let mut frames = vec![good.clone(); 20];
        frames[6] = blank;
        let gts = vec![gt; 20];
        let matches = vec![Vec::new(); 20];
        let rec = run_sequence(&frames, &gts, &matches, &TrackerConfig::default()).unwrap();
        assert_eq!(rec.failure_count, 1);
        assert_eq!(rec.reinit_events, vec![12]);
        let statuses: Vec<TrackStatus> = rec.outputs.iter().map(|o| o.status).collect();
        assert_eq!(statuses[0], TrackStatus::Initialized);
        assert!(statuses[1..6].iter().all(|s| *s == TrackStatus::Tracked));
        assert_eq!(statuses[6], TrackStatus::Failed);
        assert!(statuses[7..12].iter().all(|s| *s == TrackStatus::Reinitializing));
        assert_eq!(statuses[12], TrackStatus::Initialized);
        assert_eq!(rec.outputs[12].bbox, gt);
        assert!(statuses[13..].iter().all(|s| *s == TrackStatus::Tracked));

        let clean = run_sequence(&vec![good; 20], &gts, &matches, &TrackerConfig::default()).unwrap();
        assert_eq!(clean.failure_count, 0);
        assert!(clean.reinit_events.is_empty());
    }

    #[test]
    fn small_positive_overlap_is_not_a_failure() {
        let obj = textured(20, 20, 11);
        let frame = scene(&obj, (60, 40));
        // Ground truth shifted so it shares a sliver with the object.
        let gt = object_box((60, 40), 20);
        let shifted = object_box((78, 40), 20);
        let gts = [gt, shifted, shifted, shifted];
        let frames = vec![frame; 4];
        let rec = run_sequence(&frames, &gts, &vec![Vec::new(); 4], &TrackerConfig::default()).unwrap();
        assert_eq!(rec.failure_count, 0);
    }

    #[test]
    fn length_mismatch() {
        let f = Image::filled(10, 10, 0.5);
        let r = run_sequence(&[f.clone(), f], &[RotatedBox::axis_aligned(1.0, 1.0, 3.0, 3.0)], &[vec![], vec![]], &TrackerConfig::default());
        assert!(matches!(r, Err(Error::LengthMismatch(_))));
    }

    #[test]
    fn mode_names_round_trip() {
        for m in TrackerMode::ALL {
            assert_eq!(m.as_str().parse::<TrackerMode>().unwrap(), m);
        }
        assert!("fast".parse::<TrackerMode>().is_err());
    }
}
