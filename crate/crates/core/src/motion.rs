//! Object state estimation in reference-frame coordinates.
//!
//! The state `[x, y, dx, dy]` follows a constant-velocity model (one frame per
//! step) and is observed through the mask center of mass. When the tracker
//! moves to a new reference frame the state is carried over through the
//! homography between the two references.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{Homography, Point2};
use crate::matcher::BinaryMask;

/// Position/velocity estimate with its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionState {
    /// `[x, y, dx, dy]` in pixels and pixels per frame.
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
    pub frame_index: usize,
}

impl MotionState {
    pub fn new(position: Point2, velocity: Point2, p: Matrix4<f64>, frame_index: usize) -> Self {
        Self {
            x: Vector4::new(position.x, position.y, velocity.x, velocity.y),
            p,
            frame_index,
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x[0], self.x[1])
    }

    pub fn velocity(&self) -> Point2 {
        Point2::new(self.x[2], self.x[3])
    }

    pub fn set_velocity(&mut self, v: Point2) {
        self.x[2] = v.x;
        self.x[3] = v.y;
    }
}

/// Linear-Gaussian model matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanConfig {
    pub transition: Matrix4<f64>,
    pub process_noise: Matrix4<f64>,
    pub measurement: Matrix2x4<f64>,
    pub measurement_noise: Matrix2<f64>,
    pub initial_covariance: Matrix4<f64>,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self::constant_velocity([1.0, 1.0, 4.0, 4.0], [4.0, 4.0], [10.0, 10.0, 100.0, 100.0])
    }
}

impl KalmanConfig {
    /// Constant-velocity model with diagonal noise terms.
    pub fn constant_velocity(q: [f64; 4], r: [f64; 2], p0: [f64; 4]) -> Self {
        #[rustfmt::skip]
        let transition = Matrix4::new(
            1.0, 0.0, 1.0, 0.0,
            0.0, 1.0, 0.0, 1.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        #[rustfmt::skip]
        let measurement = Matrix2x4::new(
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
        );
        Self {
            transition,
            process_noise: Matrix4::from_diagonal(&Vector4::from(q)),
            measurement,
            measurement_noise: Matrix2::from_diagonal(&Vector2::from(r)),
            initial_covariance: Matrix4::from_diagonal(&Vector4::from(p0)),
        }
    }

    /// State at `position` with zero velocity and the initial covariance.
    pub fn initial_state(&self, position: Point2, frame_index: usize) -> MotionState {
        MotionState::new(position, Point2::ZERO, self.initial_covariance, frame_index)
    }
}

fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// Unweighted mean of the foreground pixel centers.
pub fn center_of_mass(mask: &BinaryMask) -> Result<Point2> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (i, _) in mask.bits().iter().enumerate().filter(|(_, b)| **b) {
        sx += (i % mask.width()) as f64;
        sy += (i / mask.width()) as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(mask.origin + Point2::new(sx / n as f64, sy / n as f64))
}

/// Prior for the next frame: `x = F x`, `P = F P Fᵀ + Q`.
pub fn kalman_predict(state: &MotionState, cfg: &KalmanConfig) -> MotionState {
    let f = &cfg.transition;
    MotionState {
        x: f * state.x,
        p: symmetrize(&(f * state.p * f.transpose() + cfg.process_noise)),
        frame_index: state.frame_index + 1,
    }
}

/// Measurement update with the gain `K = P Hᵀ S⁻¹`.
pub fn kalman_correct(state: &MotionState, z: Point2, cfg: &KalmanConfig) -> Result<MotionState> {
    let h = &cfg.measurement;
    let residual = Vector2::new(z.x, z.y) - h * state.x;
    let s = h * state.p * h.transpose() + cfg.measurement_noise;
    let s_inv = s.try_inverse().ok_or(Error::SingularInnovation)?;
    let gain: Matrix4x2<f64> = state.p * h.transpose() * s_inv;
    let x = state.x + gain * residual;
    let p = (Matrix4::identity() - gain * h) * state.p;
    if x.iter().chain(p.iter()).any(|v| !v.is_finite()) {
        return Err(Error::SingularInnovation);
    }
    Ok(MotionState {
        x,
        p: symmetrize(&p),
        frame_index: state.frame_index,
    })
}

/// Velocity from two consecutive positions.
pub fn bootstrap_velocity(previous: Point2, current: Point2) -> Point2 {
    current - previous
}

/// Re-expresses `state` in the coordinates of a new reference frame.
///
/// Velocity is mapped as `H(p + v) − H(p)`; the covariance goes through
/// the first-order Jacobian of that state map.
pub fn advance_reference(state: &MotionState, old_to_new: &Homography) -> Result<MotionState> {
    let p = state.position();
    let v = state.velocity();
    let p_new = old_to_new.apply(p)?;
    let tip = old_to_new.apply(p + v)?;
    let jp = old_to_new.jacobian(p)?;
    let jt = old_to_new.jacobian(p + v)?;
    // d(p')/d(p) = J(p); d(v')/d(p) = J(p+v) − J(p); d(v')/d(v) = J(p+v).
    let mut j = Matrix4::zeros();
    j.fixed_view_mut::<2, 2>(0, 0).copy_from(&jp);
    j.fixed_view_mut::<2, 2>(2, 0).copy_from(&(jt - jp));
    j.fixed_view_mut::<2, 2>(2, 2).copy_from(&jt);
    Ok(MotionState {
        x: Vector4::new(p_new.x, p_new.y, tip.x - p_new.x, tip.y - p_new.y),
        p: symmetrize(&(j * state.p * j.transpose())),
        frame_index: state.frame_index,
    })
}

/// Constant-velocity filter for one object, including the velocity
/// bootstrap after its first measurement.
#[derive(Debug, Clone)]
pub struct MotionFilter {
    cfg: KalmanConfig,
    state: MotionState,
    anchor: Option<(Point2, usize)>,
}

impl MotionFilter {
    pub fn new(position: Point2, frame_index: usize, cfg: KalmanConfig) -> Self {
        let state = cfg.initial_state(position, frame_index);
        Self {
            cfg,
            state,
            anchor: Some((position, frame_index)),
        }
    }

    pub fn state(&self) -> &MotionState {
        &self.state
    }

    pub fn config(&self) -> &KalmanConfig {
        &self.cfg
    }

    /// Advances to the next frame and returns the prior.
    pub fn predict(&mut self) -> &MotionState {
        self.state = kalman_predict(&self.state, &self.cfg);
        &self.state
    }

    /// Folds in a position measurement for the current frame. The first
    /// measurement after initialization replaces the velocity by the
    /// displacement from the initial position.
    pub fn correct(&mut self, z: Point2) -> Result<&MotionState> {
        let mut posterior = kalman_correct(&self.state, z, &self.cfg)?;
        if let Some((start, frame)) = self.anchor.take() {
            let frames = posterior.frame_index.saturating_sub(frame).max(1) as f64;
            posterior.set_velocity(bootstrap_velocity(start, posterior.position()) * (1.0 / frames));
        }
        self.state = posterior;
        Ok(&self.state)
    }

    /// Moves the filter to a new reference frame.
    pub fn advance_reference(&mut self, old_to_new: &Homography) -> Result<()> {
        self.state = advance_reference(&self.state, old_to_new)?;
        if let Some((start, frame)) = self.anchor {
            self.anchor = Some((old_to_new.apply(start)?, frame));
        }
        Ok(())
    }
}
