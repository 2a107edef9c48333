//! Search-region placement and patch extraction.
//!
//! The region is a square centered on the predicted object center, projected
//! into the pending frame, with a side that grows with the predicted speed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Homography, Point2};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    /// Speed (pixels/frame) at which the scale factor reaches 2.
    pub velocity_threshold: f64,
    pub out_resolution: usize,
    /// Value for samples outside the frame; `None` uses the frame mean.
    pub pad_value: Option<f64>,
    /// Replaces the speed-adaptive scale factor with a constant.
    pub fixed_scale: Option<f64>,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            velocity_threshold: 5.0,
            out_resolution: 255,
            pad_value: None,
            fixed_scale: None,
        }
    }
}

impl RegionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: &str| {
            Err(Error::Config {
                path: format!("region.{path}"),
                message: message.into(),
            })
        };
        if !(self.velocity_threshold >= 0.0) {
            return bad("velocity_threshold", "must be non-negative");
        }
        if self.out_resolution < 16 {
            return bad("out_resolution", "must be at least 16");
        }
        if let Some(p) = self.pad_value {
            if !(0.0..=1.0).contains(&p) {
                return bad("pad_value", "must lie in [0, 1]");
            }
        }
        if let Some(k) = self.fixed_scale {
            if !(k > 0.0) {
                return bad("fixed_scale", "must be positive");
            }
        }
        Ok(())
    }
}

/// Square crop in pending-frame pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchRegion {
    pub center: Point2,
    pub side: f64,
    pub out_resolution: usize,
}

impl SearchRegion {
    pub fn new(center: Point2, side: f64, out_resolution: usize) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::NonPositiveExtent(side, side));
        }
        if out_resolution < 16 {
            return Err(Error::Config {
                path: "region.out_resolution".into(),
                message: "must be at least 16".into(),
            });
        }
        Ok(Self {
            center,
            side,
            out_resolution,
        })
    }

    /// Mapping from patch pixels to frame coordinates.
    pub fn transform(&self) -> PatchTransform {
        let scale = self.side / self.out_resolution as f64;
        PatchTransform {
            scale,
            origin: self.center - Point2::new(self.side / 2.0, self.side / 2.0)
                + Point2::new(scale / 2.0, scale / 2.0),
        }
    }
}

/// `frame = origin + scale * patch`, with `origin` the frame position of
/// patch pixel `(0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchTransform {
    pub scale: f64,
    pub origin: Point2,
}

impl PatchTransform {
    pub fn to_frame(&self, p: Point2) -> Point2 {
        self.origin + p * self.scale
    }

    pub fn to_patch(&self, q: Point2) -> Point2 {
        (q - self.origin) * (1.0 / self.scale)
    }
}

/// A resampled search patch and its placement in the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub image: Image,
    pub transform: PatchTransform,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `k = 1 + 2·sigmoid(‖v‖ − T)`.
///
/// The result is kept strictly inside `(1, 3)` even where the logistic
/// saturates in floating point.
pub fn adaptive_scale(v: Point2, threshold: f64) -> f64 {
    let k = 1.0 + 2.0 * sigmoid(v.norm() - threshold);
    k.clamp(1.0 + f64::EPSILON, 3.0 - 2.0 * f64::EPSILON)
}

/// `S = k·√((w + p)(h + p))` with context padding `p = (w + h) / 2`.
pub fn region_size(w: f64, h: f64, k: f64) -> Result<f64> {
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::NonPositiveExtent(w, h));
    }
    if !(k > 0.0) {
        return Err(Error::NonPositiveExtent(k, k));
    }
    let p = (w + h) / 2.0;
    Ok(k * ((w + p) * (h + p)).sqrt())
}

/// Projects the reference-frame center into the pending frame and sizes the
/// region from the object extent and predicted velocity.
pub fn build_search_region(
    center_ref: Point2,
    ref_to_pending: &Homography,
    w: f64,
    h: f64,
    velocity: Point2,
    cfg: &RegionConfig,
) -> Result<SearchRegion> {
    let center = ref_to_pending.apply(center_ref)?;
    let k = cfg
        .fixed_scale
        .unwrap_or_else(|| adaptive_scale(velocity, cfg.velocity_threshold));
    SearchRegion::new(center, region_size(w, h, k)?, cfg.out_resolution)
}

/// Bilinear resampling of the region to `out_resolution²` pixels; samples
/// outside the frame read `pad_value` (frame mean when `None`).
pub fn extract_patch(frame: &Image, region: &SearchRegion, pad_value: Option<f64>) -> Patch {
    let pad = pad_value.unwrap_or_else(|| frame.mean());
    let t = region.transform();
    let n = region.out_resolution;
    let image = Image::from_fn(n, n, |u, v| {
        frame.sample(t.to_frame(Point2::new(u as f64, v as f64)), pad)
    });
    Patch {
        image,
        transform: t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn adaptive_scale_examples() {
        assert_eq!(adaptive_scale(Point2::new(3.0, 4.0), 5.0), 2.0);
        let expected = 1.0 + 2.0 / (1.0 + 5f64.exp());
        assert_abs_diff_eq!(adaptive_scale(Point2::ZERO, 5.0), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(adaptive_scale(Point2::ZERO, 5.0), 1.013385, epsilon = 1e-6);
        assert!(adaptive_scale(Point2::new(15.0, 0.0), 5.0) > 2.99);
        let k = adaptive_scale(Point2::new(1e6, 0.0), 0.0);
        assert!(k < 3.0 && k > 2.99);
    }

    #[test]
    fn region_size_examples() {
        assert_eq!(region_size(100.0, 100.0, 1.0).unwrap(), 200.0);
        assert_eq!(region_size(100.0, 100.0, 2.0).unwrap(), 400.0);
        assert_abs_diff_eq!(region_size(50.0, 30.0, 1.0).unwrap(), 6300f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(region_size(50.0, 30.0, 1.0).unwrap(), 79.3725, epsilon = 1e-4);
        assert!(matches!(region_size(0.0, 3.0, 1.0), Err(Error::NonPositiveExtent(..))));
        assert!(region_size(3.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn build_region_examples() {
        let cfg = RegionConfig::default();
        let v = Point2::new(5.0, 0.0);
        let r = build_search_region(Point2::new(100.0, 100.0), &Homography::identity(), 100.0, 100.0, v, &cfg)
            .unwrap();
        assert_eq!(r.center, Point2::new(100.0, 100.0));
        assert_eq!(r.side, 400.0);
        let r2 = build_search_region(
            Point2::new(100.0, 100.0),
            &Homography::translation(5.0, 3.0),
            100.0,
            100.0,
            v,
            &cfg,
        )
        .unwrap();
        assert_eq!(r2.center, Point2::new(105.0, 103.0));
        assert_eq!(r2.side, r.side);
        let rot = Homography::rigid(std::f64::consts::FRAC_PI_2, Point2::ZERO, 0.0, 0.0);
        let r3 = build_search_region(Point2::new(10.0, 0.0), &rot, 100.0, 100.0, v, &cfg).unwrap();
        assert_abs_diff_eq!(r3.center.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r3.center.y, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn fixed_scale_overrides_velocity() {
        let cfg = RegionConfig {
            fixed_scale: Some(2.0),
            ..Default::default()
        };
        let r = build_search_region(Point2::ZERO, &Homography::identity(), 10.0, 10.0, Point2::new(50.0, 0.0), &cfg)
            .unwrap();
        assert_eq!(r.side, 40.0);
    }

    #[test]
    fn unit_scale_crop_is_exact() {
        let frame = Image::from_fn(400, 300, |x, y| ((x * 13 + y * 7) % 256) as f64 / 255.0);
        let region = SearchRegion::new(Point2::new(200.0, 150.0), 255.0, 255).unwrap();
        let patch = extract_patch(&frame, &region, Some(0.0));
        for v in 0..255 {
            for u in 0..255 {
                assert_eq!(patch.image.get(u, v), frame.get(200 - 127 + u, 150 - 127 + v));
            }
        }
    }

    #[test]
    fn out_of_frame_samples_are_padded() {
        let frame = Image::filled(300, 300, 0.8);
        let region = SearchRegion::new(Point2::ZERO, 255.0, 255).unwrap();
        let patch = extract_patch(&frame, &region, Some(0.1));
        for v in 0..127 {
            for u in 0..127 {
                assert_eq!(patch.image.get(u, v), 0.1);
            }
        }
        assert_eq!(patch.image.get(200, 200), 0.8);
    }

    #[test]
    fn constant_frame_gives_constant_patch() {
        let frame = Image::filled(64, 48, 0.3);
        let region = SearchRegion::new(Point2::new(10.3, 40.7), 91.7, 64).unwrap();
        let patch = extract_patch(&frame, &region, None);
        assert!(patch.image.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn zero_velocity_identity_is_fixed_window() {
        // With no motion and no camera change the region sits on the last
        // position with the smallest adaptive scale.
        let cfg = RegionConfig::default();
        let c = Point2::new(42.0, 17.0);
        let r = build_search_region(c, &Homography::identity(), 20.0, 10.0, Point2::ZERO, &cfg).unwrap();
        assert_eq!(r.center, c);
        assert_abs_diff_eq!(
            r.side,
            region_size(20.0, 10.0, adaptive_scale(Point2::ZERO, 5.0)).unwrap(),
            epsilon = 0.0
        );
    }

    proptest! {
        #[test]
        fn scale_bounded(vx in -1e9f64..1e9, vy in -1e9f64..1e9, t in 0f64..1e9) {
            let k = adaptive_scale(Point2::new(vx, vy), t);
            prop_assert!(k > 1.0 && k < 3.0);
        }

        #[test]
        fn size_linear_in_k(w in 0.1f64..500.0, h in 0.1f64..500.0, k in 0.01f64..10.0) {
            prop_assert_eq!(region_size(w, h, 2.0 * k).unwrap(), 2.0 * region_size(w, h, k).unwrap());
        }

        #[test]
        fn patch_round_trip(cx in -100f64..500.0, cy in -100f64..500.0, side in 1f64..800.0,
                            u in 0f64..255.0, v in 0f64..255.0) {
            let t = SearchRegion::new(Point2::new(cx, cy), side, 255).unwrap().transform();
            let p = Point2::new(u, v);
            let back = t.to_patch(t.to_frame(p));
            prop_assert!((back.x - p.x).abs() < 1e-9 && (back.y - p.y).abs() < 1e-9);
        }
    }
}
