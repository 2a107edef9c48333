//! Appearance matching: locate the template inside a search patch and
//! segment it.
//!
//! Any [`Matcher`] fills this role; the reference implementation is
//! [`NccMatcher`], registered under the key `"ncc"`.

mod ncc;
mod shape;

use serde::{Deserialize, Serialize};

pub use ncc::{match_template, objectness, segment_response, ResponseMap};
pub use shape::{convex_hull, fit_rotated_box, mask_iou, BinaryMask, RotatedBox};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::image::Image;

/// Output of one match, in patch coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub mask: BinaryMask,
    pub bbox: RotatedBox,
    /// Objectness in `[0, 1]`.
    pub score: f64,
}

/// Locates a template in a search patch.
///
/// Implementations hold no mutable state and may be shared across threads.
pub trait Matcher: Send + Sync {
    fn key(&self) -> &str;

    fn locate(&self, template: &Image, patch: &Image) -> Result<MatchResult>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    /// Maximum per-pixel intensity difference for a pixel to join the mask.
    pub pixel_tolerance: f64,
    /// Objectness below which the tracker declares the frame failed.
    pub failure_threshold: f64,
    /// Weight of the raised-cosine center prior used to pick the peak.
    pub window_influence: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            pixel_tolerance: 0.15,
            failure_threshold: 0.25,
            window_influence: 0.2,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: &str| {
            Err(Error::Config {
                path: format!("matcher_params.{path}"),
                message: message.into(),
            })
        };
        if !(self.pixel_tolerance > 0.0) {
            return bad("pixel_tolerance", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.failure_threshold) {
            return bad("failure_threshold", "must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.window_influence) {
            return bad("window_influence", "must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Normalized cross-correlation matcher.
#[derive(Debug, Clone, Default)]
pub struct NccMatcher {
    cfg: MatcherConfig,
}

impl NccMatcher {
    pub const KEY: &'static str = "ncc";

    pub fn new(cfg: MatcherConfig) -> Self {
        Self { cfg }
    }
}

impl Matcher for NccMatcher {
    fn key(&self) -> &str {
        Self::KEY
    }

    fn locate(&self, template: &Image, patch: &Image) -> Result<MatchResult> {
        let response = match_template(template, patch)?;
        let (u, v) = response.windowed_argmax(self.cfg.window_influence);
        let (du, dv) = response.subcell_offset(u, v);
        let mut mask = segment_response(template, patch, (u, v), self.cfg.pixel_tolerance);
        mask.origin = Point2::new(u as f64 + du, v as f64 + dv);
        let bbox = if mask.is_empty() {
            let c = mask.origin
                + Point2::new(
                    (template.width() as f64 - 1.0) / 2.0,
                    (template.height() as f64 - 1.0) / 2.0,
                );
            RotatedBox::point(c)
        } else {
            fit_rotated_box(&mask)?
        };
        Ok(MatchResult {
            mask,
            bbox,
            score: objectness(&response),
        })
    }
}

/// Looks up a matcher implementation by its configuration key.
pub fn matcher_for_key(key: &str, cfg: MatcherConfig) -> Option<Box<dyn Matcher>> {
    match key {
        NccMatcher::KEY => Some(Box::new(NccMatcher::new(cfg))),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn registry() {
        assert_eq!(
            matcher_for_key("ncc", MatcherConfig::default()).unwrap().key(),
            "ncc"
        );
        assert!(matcher_for_key("siam", MatcherConfig::default()).is_none());
    }

    #[test]
    fn locate_planted_object() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let t = Image::from_fn(12, 10, |_, _| rng.random::<f64>());
        let mut p = Image::filled(50, 50, 0.5);
        for y in 0..10 {
            for x in 0..12 {
                p.set(20 + x, 13 + y, t.get(x, y));
            }
        }
        let m = NccMatcher::default().locate(&t, &p).unwrap();
        assert!((m.score - 1.0).abs() < 1e-9);
        assert_eq!(m.mask.count(), 120);
        assert!((m.mask.origin.x - 20.0).abs() < 0.5 && (m.mask.origin.y - 13.0).abs() < 0.5);
        // The box encloses the whole mask.
        let (min, max) = m.bbox.bounds();
        for p in m.mask.foreground() {
            assert!(p.x >= min.x - 1e-9 && p.x <= max.x + 1e-9);
            assert!(p.y >= min.y - 1e-9 && p.y <= max.y + 1e-9);
        }
    }

    #[test]
    fn config_validation() {
        assert!(MatcherConfig::default().validate().is_ok());
        let bad = MatcherConfig {
            window_influence: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
