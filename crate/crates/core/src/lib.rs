//! Single-object tracking with camera-motion compensated prediction.
//!
//! Each frame the tracker estimates the camera homography from point
//! matches, predicts the object center with a constant-velocity Kalman
//! filter expressed in a periodically refreshed reference frame, crops a
//! speed-adaptive search patch around the prediction, and hands it to an
//! appearance [`matcher::Matcher`].

pub mod data;
pub mod error;
pub mod geometry;
pub mod image;
pub mod matcher;
pub mod metrics;
pub mod motion;
pub mod pipeline;
pub mod region;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{Homography, Point2, PointMatch};
pub use image::Image;
