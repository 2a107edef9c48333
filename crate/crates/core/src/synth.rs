//! Synthetic sequences with known ground truth.
//!
//! World coordinates are the pixel coordinates of frame 0. Each frame is
//! rendered by pulling every pixel back through the camera homography into
//! the world, where the background, the target, distractors and occluders
//! are textured shapes. Textures are integer value noise, so rendering is
//! reproducible bit for bit.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{format_groundtruth, frame_file_name, matches_file_name, save_pgm, GROUNDTRUTH_FILE};
use crate::error::{Error, Result};
use crate::geometry::{format_matches, Homography, Point2, PointMatch};
use crate::image::Image;
use crate::matcher::RotatedBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    #[default]
    Rectangle,
    Ellipse,
}

/// Constant velocity for `frames` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub frames: usize,
    pub velocity: Point2,
}

/// Piecewise constant-velocity path; the object rests after the last
/// segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub start: Point2,
    #[serde(default)]
    pub segments: Vec<Segment>,
}

impl Trajectory {
    pub fn stationary(at: Point2) -> Self {
        Self {
            start: at,
            segments: Vec::new(),
        }
    }

    pub fn constant(start: Point2, velocity: Point2, frames: usize) -> Self {
        Self {
            start,
            segments: vec![Segment { frames, velocity }],
        }
    }

    pub fn position(&self, t: usize) -> Point2 {
        let mut p = self.start;
        let mut left = t;
        for s in &self.segments {
            let n = s.frames.min(left);
            p = p + s.velocity * n as f64;
            left -= n;
            if left == 0 {
                break;
            }
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    #[serde(default)]
    pub shape: Shape,
    /// Width and height in pixels.
    pub size: [f64; 2],
    #[serde(default)]
    pub texture_seed: u64,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistractorSpec {
    /// Reuse the target's shape, size and texture.
    #[serde(default = "yes")]
    pub identical_texture: bool,
    #[serde(default)]
    pub texture_seed: u64,
    pub trajectory: Trajectory,
    /// Allows the path to leave the frame.
    #[serde(default)]
    pub may_exit: bool,
}

fn yes() -> bool {
    true
}

/// Flat rectangle in world coordinates, drawn on frames `from..=to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccluderSpec {
    /// `[x, y, w, h]`.
    pub rect: [f64; 4],
    pub from: usize,
    pub to: usize,
    #[serde(default = "half")]
    pub value: f64,
}

fn half() -> f64 {
    0.5
}

/// Independent per-frame camera pose noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    /// Pixels.
    pub translation_sigma: f64,
    /// Radians, about the image center.
    pub rotation_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub object: ObjectSpec,
    #[serde(default)]
    pub camera: CameraSpec,
    #[serde(default)]
    pub distractors: Vec<DistractorSpec>,
    #[serde(default)]
    pub occluders: Vec<OccluderSpec>,
    #[serde(default)]
    pub background_seed: u64,
    /// Value-noise lattice spacing in pixels.
    #[serde(default = "default_spacing")]
    pub texture_spacing: u32,
    /// Gaussian noise on match destinations, pixels.
    #[serde(default)]
    pub match_noise: f64,
    #[serde(default)]
    pub outlier_fraction: f64,
    #[serde(default = "default_match_count")]
    pub match_count: usize,
}

fn default_spacing() -> u32 {
    3
}

fn default_match_count() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    /// Object center in this frame's pixels.
    pub center: Point2,
    pub world_center: Point2,
    /// Displacement of the world center since the previous frame.
    pub velocity: Point2,
    /// World → frame.
    pub camera: [[f64; 3]; 3],
    pub gt_box: RotatedBox,
    pub distractor_boxes: Vec<RotatedBox>,
    /// Fraction of the target's pixels not hidden by other layers.
    pub visibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub frames: Vec<FrameTruth>,
    /// `matches[t]` maps frame `t − 1` to frame `t`; `matches[0]` is empty.
    #[serde(skip)]
    pub matches: Vec<Vec<PointMatch>>,
    /// Marks the matches that were not replaced by outliers.
    #[serde(skip)]
    pub inliers: Vec<Vec<bool>>,
}

impl SyntheticTruth {
    pub fn gt_boxes(&self) -> Vec<RotatedBox> {
        self.frames.iter().map(|f| f.gt_box).collect()
    }

    pub fn camera(&self, t: usize) -> Homography {
        Homography::from_rows(self.frames[t].camera).expect("camera poses are invertible")
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(a: u64, b: u64) -> u64 {
    splitmix(splitmix(a) ^ b.rotate_left(32))
}

/// Bilinear value noise on an integer lattice, evaluated in fixed point
/// (1/256 pixel).
#[derive(Debug, Clone, Copy)]
struct Texture {
    seed: u64,
    spacing: i64,
}

impl Texture {
    fn lattice(&self, ix: i64, iy: i64) -> i64 {
        (mix(self.seed, (ix as u64).wrapping_mul(0x1F1F_1F1F) ^ (iy as u64).wrapping_mul(0x9E37_79B1) << 1) >> 56) as i64
    }

    fn sample(&self, p: Point2) -> u8 {
        let d = self.spacing * 256;
        let x = (p.x * 256.0).round() as i64;
        let y = (p.y * 256.0).round() as i64;
        let (ix, fx) = (x.div_euclid(d), x.rem_euclid(d));
        let (iy, fy) = (y.div_euclid(d), y.rem_euclid(d));
        let top = self.lattice(ix, iy) * (d - fx) + self.lattice(ix + 1, iy) * fx;
        let bottom = self.lattice(ix, iy + 1) * (d - fx) + self.lattice(ix + 1, iy + 1) * fx;
        let v = top * (d - fy) + bottom * fy;
        ((v + d * d / 2) / (d * d)).clamp(0, 255) as u8
    }
}

struct Body {
    shape: Shape,
    size: [f64; 2],
    texture: Texture,
}

impl Body {
    /// Texture value at world point `p` for a body centered on `c`.
    fn sample(&self, p: Point2, c: Point2) -> Option<u8> {
        let (w, h) = (self.size[0], self.size[1]);
        let local = p - c + Point2::new(w / 2.0, h / 2.0);
        let inside = match self.shape {
            Shape::Rectangle => (0.0..w).contains(&local.x) && (0.0..h).contains(&local.y),
            Shape::Ellipse => {
                let u = (local.x - w / 2.0) / (w / 2.0);
                let v = (local.y - h / 2.0) / (h / 2.0);
                u * u + v * v < 1.0
            }
        };
        inside.then(|| self.texture.sample(local))
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if self.width < 16 || self.height < 16 {
            return bad(format!("image {}x{} is too small", self.width, self.height));
        }
        if self.frames == 0 {
            return bad("frame count must be positive".into());
        }
        let [w, h] = self.object.size;
        if !(w >= 2.0 && h >= 2.0) || w > self.width as f64 || h > self.height as f64 {
            return bad(format!("object size {w}x{h} is unusable"));
        }
        if self.texture_spacing == 0 {
            return bad("texture spacing must be positive".into());
        }
        if !(self.match_noise >= 0.0) || !(0.0..=1.0).contains(&self.outlier_fraction) {
            return bad("match noise must be non-negative and outlier fraction in [0, 1]".into());
        }
        if !(self.camera.translation_sigma >= 0.0 && self.camera.rotation_sigma >= 0.0) {
            return bad("camera jitter must be non-negative".into());
        }
        let radius = w.max(h) / 2.0;
        let check = |traj: &Trajectory, what: &str| -> Result<()> {
            for t in 0..self.frames {
                let p = traj.position(t);
                if !(p.x >= radius
                    && p.y >= radius
                    && p.x <= self.width as f64 - radius
                    && p.y <= self.height as f64 - radius)
                {
                    return Err(Error::Spec(format!(
                        "{what} at ({:.1}, {:.1}) on frame {t} is within one radius of the border",
                        p.x, p.y
                    )));
                }
            }
            Ok(())
        };
        check(&self.object.trajectory, "object")?;
        for (i, d) in self.distractors.iter().enumerate() {
            if !d.may_exit {
                check(&d.trajectory, &format!("distractor {i}"))?;
            }
        }
        for (i, o) in self.occluders.iter().enumerate() {
            if !(o.rect[2] > 0.0 && o.rect[3] > 0.0) || o.from > o.to || !(0.0..=1.0).contains(&o.value) {
                return bad(format!("occluder {i} is malformed"));
            }
        }
        Ok(())
    }

    fn image_center(&self) -> Point2 {
        Point2::new((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }
}

pub fn parse_spec(text: &str) -> Result<ScenarioSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: ScenarioSpec = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Spec(format!("{}: {}", e.path(), e.inner())))?;
    spec.validate()?;
    Ok(spec)
}

/// Renders the scenario. Identical `(spec, seed)` pairs give identical
/// output.
pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<(Vec<Image>, SyntheticTruth)> {
    spec.validate()?;
    let spacing = spec.texture_spacing as i64;
    let object_texture = Texture {
        seed: mix(spec.object.texture_seed, seed),
        spacing,
    };
    let target = Body {
        shape: spec.object.shape,
        size: spec.object.size,
        texture: object_texture,
    };
    let distractors: Vec<Body> = spec
        .distractors
        .iter()
        .map(|d| Body {
            shape: spec.object.shape,
            size: spec.object.size,
            texture: if d.identical_texture {
                object_texture
            } else {
                Texture {
                    seed: mix(d.texture_seed ^ 0xD157, seed),
                    spacing,
                }
            },
        })
        .collect();
    let background = Texture {
        seed: mix(spec.background_seed ^ 0xBAC6, seed),
        spacing,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x00CA_3E7A));
    let center = spec.image_center();
    let cameras: Vec<Homography> = (0..spec.frames)
        .map(|t| {
            if t == 0 {
                return Homography::identity();
            }
            let gauss = |rng: &mut ChaCha8Rng, s: f64| if s > 0.0 { Normal::new(0.0, s).unwrap().sample(rng) } else { 0.0 };
            let a = gauss(&mut rng, spec.camera.rotation_sigma);
            let tx = gauss(&mut rng, spec.camera.translation_sigma);
            let ty = gauss(&mut rng, spec.camera.translation_sigma);
            Homography::rigid(a, center, tx, ty)
        })
        .collect();

    let mut frames = Vec::with_capacity(spec.frames);
    let mut truth = Vec::with_capacity(spec.frames);
    let (w, h) = (spec.object.size[0], spec.object.size[1]);
    for (t, cam) in cameras.iter().enumerate() {
        let inv = cam.inverse()?;
        let obj_c = spec.object.trajectory.position(t);
        let dis_c: Vec<Point2> = spec.distractors.iter().map(|d| d.trajectory.position(t)).collect();
        let occluders: Vec<&OccluderSpec> = spec.occluders.iter().filter(|o| (o.from..=o.to).contains(&t)).collect();
        let (mut covered, mut visible) = (0usize, 0usize);
        let mut bytes = Vec::with_capacity(spec.width * spec.height);
        for y in 0..spec.height {
            for x in 0..spec.width {
                let p = inv.apply(Point2::new(x as f64, y as f64))?;
                let occ = occluders.iter().find(|o| {
                    (o.rect[0]..o.rect[0] + o.rect[2]).contains(&p.x) && (o.rect[1]..o.rect[1] + o.rect[3]).contains(&p.y)
                });
                let dis = distractors.iter().zip(&dis_c).rev().find_map(|(b, c)| b.sample(p, *c));
                let obj = target.sample(p, obj_c);
                if obj.is_some() {
                    covered += 1;
                    if occ.is_none() && dis.is_none() {
                        visible += 1;
                    }
                }
                let v = match (occ, dis, obj) {
                    (Some(o), _, _) => (o.value * 255.0).round() as u8,
                    (None, Some(v), _) | (None, None, Some(v)) => v,
                    (None, None, None) => background.sample(p),
                };
                bytes.push(v);
            }
        }
        frames.push(Image::from_u8(spec.width, spec.height, &bytes)?);
        let world_box = RotatedBox::centered(obj_c, w, h);
        let gt_box = world_box.try_map(|q| cam.apply(q))?;
        let distractor_boxes = dis_c
            .iter()
            .map(|c| RotatedBox::centered(*c, w, h).try_map(|q| cam.apply(q)))
            .collect::<Result<Vec<_>>>()?;
        truth.push(FrameTruth {
            center: cam.apply(obj_c)?,
            world_center: obj_c,
            velocity: if t == 0 { Point2::ZERO } else { obj_c - spec.object.trajectory.position(t - 1) },
            camera: cam.rows(),
            gt_box,
            distractor_boxes,
            visibility: if covered == 0 { 0.0 } else { visible as f64 / covered as f64 },
        });
    }

    let mut matches = vec![Vec::new()];
    let mut inliers = vec![Vec::new()];
    let noise = Normal::new(0.0, spec.match_noise.max(0.0)).unwrap();
    for t in 1..spec.frames {
        let step = cameras[t].compose(&cameras[t - 1].inverse()?)?;
        let prev_inv = cameras[t - 1].inverse()?;
        let moving: Vec<(Point2, Point2)> = std::iter::once((spec.object.trajectory.position(t - 1), spec.object.trajectory.position(t)))
            .chain(spec.distractors.iter().map(|d| (d.trajectory.position(t - 1), d.trajectory.position(t))))
            .collect();
        let margin = w.max(h) / 2.0 + 2.0;
        let on_object = |world: Point2| {
            moving.iter().any(|(a, b)| {
                [a, b].iter().any(|c| (world.x - c.x).abs() < margin && (world.y - c.y).abs() < margin)
            })
        };
        let mut ms = Vec::with_capacity(spec.match_count);
        let mut flags = Vec::with_capacity(spec.match_count);
        let mut attempts = 0;
        while ms.len() < spec.match_count && attempts < spec.match_count * 50 {
            attempts += 1;
            let src = Point2::new(
                rng.random_range(0.0..spec.width as f64 - 1.0),
                rng.random_range(0.0..spec.height as f64 - 1.0),
            );
            if on_object(prev_inv.apply(src)?) {
                continue;
            }
            let mut dst = step.apply(src)?;
            if spec.match_noise > 0.0 {
                dst = dst + Point2::new(noise.sample(&mut rng), noise.sample(&mut rng));
            }
            let outlier = rng.random_bool(spec.outlier_fraction);
            if outlier {
                dst = Point2::new(
                    rng.random_range(0.0..spec.width as f64 - 1.0),
                    rng.random_range(0.0..spec.height as f64 - 1.0),
                );
            }
            ms.push(PointMatch::new(src, dst));
            flags.push(!outlier);
        }
        matches.push(ms);
        inliers.push(flags);
    }

    Ok((
        frames,
        SyntheticTruth {
            frames: truth,
            matches,
            inliers,
        },
    ))
}

/// Writes frames, ground truth, per-frame matches and `truth.json`.
pub fn write_sequence(dir: &Path, frames: &[Image], truth: &SyntheticTruth) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (t, f) in frames.iter().enumerate() {
        save_pgm(&dir.join(frame_file_name(t)), f)?;
    }
    fs::write(dir.join(GROUNDTRUTH_FILE), format_groundtruth(&truth.gt_boxes()))?;
    for (t, m) in truth.matches.iter().enumerate().skip(1) {
        fs::write(dir.join(matches_file_name(t)), format_matches(m))?;
    }
    let json = serde_json::to_string_pretty(truth).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(dir.join("truth.json"), json)?;
    Ok(())
}

const W: usize = 320;
const H: usize = 240;

fn base(frames: usize, size: f64, trajectory: Trajectory) -> ScenarioSpec {
    ScenarioSpec {
        width: W,
        height: H,
        frames,
        object: ObjectSpec {
            shape: Shape::Rectangle,
            size: [size, size],
            texture_seed: 1,
            trajectory,
        },
        camera: CameraSpec::default(),
        distractors: Vec::new(),
        occluders: Vec::new(),
        background_seed: 2,
        texture_spacing: default_spacing(),
        match_noise: 0.0,
        outlier_fraction: 0.0,
        match_count: default_match_count(),
    }
}

fn seg(frames: usize, vx: f64, vy: f64) -> Segment {
    Segment {
        frames,
        velocity: Point2::new(vx, vy),
    }
}

/// Camera shake plus a moving target, the setting for the prediction-error
/// comparison.
pub fn camera_shake_motion() -> ScenarioSpec {
    let mut s = base(100, 32.0, Trajectory::constant(Point2::new(60.5, 70.5), Point2::new(2.0, 1.0), 100));
    s.camera = CameraSpec {
        translation_sigma: 3.0,
        rotation_sigma: 0.01,
    };
    s.match_noise = 1.0;
    s.outlier_fraction = 0.2;
    s
}

/// The fixed scenario library.
pub fn standard_suite() -> Vec<(&'static str, ScenarioSpec)> {
    let center = Point2::new(160.5, 120.5);

    let stat = base(30, 32.0, Trajectory::stationary(center));

    let cv = base(60, 24.0, Trajectory::constant(Point2::new(60.5, 120.5), Point2::new(3.0, 0.0), 60));

    let acc = base(
        60,
        24.0,
        Trajectory {
            start: Point2::new(40.5, 100.5),
            segments: vec![seg(20, 1.0, 0.0), seg(20, 3.0, 1.0), seg(20, 6.0, -1.0)],
        },
    );

    let mut shake = base(60, 32.0, Trajectory::stationary(center));
    shake.camera = CameraSpec {
        translation_sigma: 3.0,
        rotation_sigma: 0.01,
    };
    shake.match_noise = 1.0;
    shake.outlier_fraction = 0.2;

    // The target speeds up, passes straight through an identical stationary
    // copy on frame 9, then slows down and stops further right.
    let p = Point2::new(140.5, 120.5);
    let mut cross = base(
        40,
        24.0,
        Trajectory {
            start: Point2::new(20.5, 120.5),
            segments: vec![
                seg(3, 4.0, 0.0),
                seg(2, 10.0, 0.0),
                seg(2, 18.0, 0.0),
                seg(4, 26.0, 0.0),
                seg(2, 12.0, 0.0),
                seg(6, 4.0, 0.0),
            ],
        },
    );
    cross.distractors.push(DistractorSpec {
        identical_texture: true,
        texture_seed: 0,
        trajectory: Trajectory::stationary(p),
        may_exit: false,
    });

    // A flat bar hides 8 to 12 of the target's 24 columns for five frames.
    let mut occ5 = base(40, 24.0, Trajectory::constant(Point2::new(100.5, 120.5), Point2::new(1.0, 0.0), 40));
    occ5.occluders.push(OccluderSpec {
        rect: [100.5 + 15.0 + 4.0, 90.0, 40.0, 60.0],
        from: 15,
        to: 19,
        value: 0.5,
    });

    // A large flat sheet hides the target and its surroundings for four
    // frames.
    let mut occf = base(50, 24.0, Trajectory::constant(Point2::new(80.5, 120.5), Point2::new(2.0, 0.0), 50));
    occf.occluders.push(OccluderSpec {
        rect: [44.0, 40.0, 160.0, 160.0],
        from: 20,
        to: 23,
        value: 0.5,
    });

    vec![
        ("static", stat),
        ("constant-velocity", cv),
        ("acceleration", acc),
        ("camera-shake", shake),
        ("camera-shake+motion", camera_shake_motion()),
        ("distractor-cross", cross),
        ("occlusion-5-frame", occ5),
        ("occlusion-full", occf),
    ]
}

pub fn scenario(name: &str) -> Option<ScenarioSpec> {
    standard_suite().into_iter().find(|(n, _)| *n == name).map(|(_, s)| s)
}
