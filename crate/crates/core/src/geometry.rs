//! Planar projective geometry: points, correspondences and homographies.
//!
//! The homography relating a reference frame to a pending frame is fitted
//! with the normalized direct linear transform and made robust with a
//! RANSAC loop whose minimal samples draw one correspondence from each
//! quadrant of the reference image.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const W_EPS: f64 = 1e-12;
const RANSAC_CONFIDENCE: f64 = 0.999;

/// A point (or 2-vector) in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// A correspondence between a point in the reference frame (`src`) and the
/// same scene point in the pending frame (`dst`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMatch {
    pub src: Point2,
    pub dst: Point2,
}

impl PointMatch {
    pub const fn new(src: Point2, dst: Point2) -> Self {
        Self { src, dst }
    }
}

/// A 3x3 projective map in the `m[2][2] = 1` gauge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Default for Homography {
    fn default() -> Self {
        Self::identity()
    }
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    /// Rotation by `angle` radians about `center`, followed by a translation.
    pub fn rigid(angle: f64, center: Point2, tx: f64, ty: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let ox = center.x - c * center.x + s * center.y + tx;
        let oy = center.y - s * center.x - c * center.y + ty;
        Self {
            m: Matrix3::new(c, -s, ox, s, c, oy, 0.0, 0.0, 1.0),
        }
    }

    /// Normalizes `m` so that `m[2][2] = 1` and checks invertibility.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let scale = m[(2, 2)];
        if !scale.is_finite() || scale.abs() < W_EPS {
            return Err(Error::DegenerateConfiguration(
                "homography has vanishing m[2][2]".into(),
            ));
        }
        let m = m / scale;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateConfiguration(
                "homography has non-finite entries".into(),
            ));
        }
        if m.determinant().abs() <= W_EPS {
            return Err(Error::SingularMatrix);
        }
        Ok(Self { m })
    }

    /// Builds a homography from row-major entries.
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.m[(r, c)];
            }
        }
        out
    }

    /// Projects `p`; fails when the point lands at infinity.
    pub fn apply(&self, p: Point2) -> Result<Point2> {
        let m = &self.m;
        let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
        if w.abs() <= W_EPS {
            return Err(Error::PointAtInfinity);
        }
        Ok(Point2::new(
            (m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)]) / w,
            (m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]) / w,
        ))
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self.m.try_inverse().ok_or(Error::SingularMatrix)?;
        Self::from_matrix(inv).map_err(|_| Error::SingularMatrix)
    }

    /// `self ∘ first`: maps by `first`, then by `self`.
    pub fn compose(&self, first: &Homography) -> Result<Self> {
        Self::from_matrix(self.m * first.m)
    }

    /// Jacobian of the projective map at `p`.
    pub fn jacobian(&self, p: Point2) -> Result<Matrix2<f64>> {
        let m = &self.m;
        let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
        if w.abs() <= W_EPS {
            return Err(Error::PointAtInfinity);
        }
        let u = m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)];
        let v = m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)];
        let w2 = w * w;
        Ok(Matrix2::new(
            (m[(0, 0)] * w - u * m[(2, 0)]) / w2,
            (m[(0, 1)] * w - u * m[(2, 1)]) / w2,
            (m[(1, 0)] * w - v * m[(2, 0)]) / w2,
            (m[(1, 1)] * w - v * m[(2, 1)]) / w2,
        ))
    }

    /// Reprojection distance of a correspondence under this map.
    pub fn transfer_error(&self, m: &PointMatch) -> f64 {
        match self.apply(m.src) {
            Ok(p) => p.distance(m.dst),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Hartley isotropic normalization: centroid to origin, mean distance √2.
fn normalizing_transform(points: impl Iterator<Item = Point2> + Clone) -> Option<Matrix3<f64>> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
    let centroid = Point2::new(sx / n, sy / n);
    let mean_dist = points.map(|p| p.distance(centroid)).sum::<f64>() / n;
    if !(mean_dist > 1e-12) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(
        s,
        0.0,
        -s * centroid.x,
        0.0,
        s,
        -s * centroid.y,
        0.0,
        0.0,
        1.0,
    ))
}

fn transform_point(t: &Matrix3<f64>, p: Point2) -> Point2 {
    let v = t * Vector3::new(p.x, p.y, 1.0);
    Point2::new(v.x / v.z, v.y / v.z)
}

/// Least-squares homography over all matches (normalized DLT).
pub fn estimate_homography(matches: &[PointMatch]) -> Result<Homography> {
    let n = matches.len();
    if n < 4 {
        return Err(Error::DegenerateConfiguration(format!(
            "need at least 4 matches, got {n}"
        )));
    }
    if matches.iter().any(|m| !m.src.is_finite() || !m.dst.is_finite()) {
        return Err(Error::DegenerateConfiguration("non-finite match".into()));
    }
    let t_src = normalizing_transform(matches.iter().map(|m| m.src))
        .ok_or_else(|| Error::DegenerateConfiguration("coincident source points".into()))?;
    let t_dst = normalizing_transform(matches.iter().map(|m| m.dst))
        .ok_or_else(|| Error::DegenerateConfiguration("coincident target points".into()))?;

    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, m) in matches.iter().enumerate() {
        let s = transform_point(&t_src, m.src);
        let d = transform_point(&t_dst, m.dst);
        let (r0, r1) = (2 * i, 2 * i + 1);
        a[(r0, 0)] = -s.x;
        a[(r0, 1)] = -s.y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = d.x * s.x;
        a[(r0, 7)] = d.x * s.y;
        a[(r0, 8)] = d.x;
        a[(r1, 3)] = -s.x;
        a[(r1, 4)] = -s.y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = d.y * s.x;
        a[(r1, 7)] = d.y * s.y;
        a[(r1, 8)] = d.y;
    }

    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::DegenerateConfiguration("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let smallest = order[0];
    let second = svd.singular_values[order[1]];
    let largest = svd.singular_values[order[order.len() - 1]];
    if second <= 1e-9 * largest {
        return Err(Error::DegenerateConfiguration(
            "design matrix is rank deficient".into(),
        ));
    }

    let h = v_t.row(smallest);
    let h_norm = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or_else(|| Error::DegenerateConfiguration("normalization not invertible".into()))?;
    Homography::from_matrix(t_dst_inv * h_norm * t_src).map_err(|e| match e {
        Error::SingularMatrix => {
            Error::DegenerateConfiguration("estimated homography is singular".into())
        }
        other => other,
    })
}

/// RANSAC parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Reprojection distance (pixels) below which a match is an inlier.
    pub inlier_threshold: f64,
    pub min_inlier_fraction: f64,
    pub rng_seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            inlier_threshold: 3.0,
            min_inlier_fraction: 0.3,
            rng_seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::Config {
                path: "ransac.max_iterations".into(),
                message: "must be at least 1".into(),
            });
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::Config {
                path: "ransac.inlier_threshold".into(),
                message: "must be positive".into(),
            });
        }
        if !(self.min_inlier_fraction > 0.0 && self.min_inlier_fraction <= 1.0) {
            return Err(Error::Config {
                path: "ransac.min_inlier_fraction".into(),
                message: "must lie in (0, 1]".into(),
            });
        }
        Ok(())
    }
}

/// Axis-aligned extent of the reference image, used to split it into
/// quadrants for sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingBounds {
    pub min: Point2,
    pub max: Point2,
}

impl SamplingBounds {
    /// Bounds of an image with pixel centers at integer coordinates.
    pub fn image(width: usize, height: usize) -> Self {
        Self {
            min: Point2::new(-0.5, -0.5),
            max: Point2::new(width as f64 - 0.5, height as f64 - 0.5),
        }
    }

    fn of_sources(matches: &[PointMatch]) -> Self {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for m in matches {
            min.x = min.x.min(m.src.x);
            min.y = min.y.min(m.src.y);
            max.x = max.x.max(m.src.x);
            max.y = max.y.max(m.src.y);
        }
        Self { min, max }
    }

    fn quadrant(&self, p: Point2) -> usize {
        let mid = (self.min + self.max) * 0.5;
        usize::from(p.x >= mid.x) + 2 * usize::from(p.y >= mid.y)
    }
}

/// Robust fit where the quadrant split uses the bounding box of the source
/// points as the reference image extent.
pub fn ransac_homography(
    matches: &[PointMatch],
    cfg: &RansacConfig,
) -> Result<(Homography, Vec<usize>)> {
    ransac_homography_within(matches, cfg, SamplingBounds::of_sources(matches))
}

/// Robust fit with minimal samples drawn one per quadrant of `bounds`.
///
/// Falls back to uniform sampling when a quadrant holds no match. The winning
/// hypothesis is refitted on its inlier set until the set stops changing.
pub fn ransac_homography_within(
    matches: &[PointMatch],
    cfg: &RansacConfig,
    bounds: SamplingBounds,
) -> Result<(Homography, Vec<usize>)> {
    if matches.len() < 4 {
        return Err(Error::DegenerateConfiguration(format!(
            "need at least 4 matches, got {}",
            matches.len()
        )));
    }
    cfg.validate()?;

    let mut quadrants: [Vec<usize>; 4] = Default::default();
    for (i, m) in matches.iter().enumerate() {
        quadrants[bounds.quadrant(m.src)].push(i);
    }
    let stratified = quadrants.iter().all(|q| !q.is_empty());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut best: Option<(usize, f64, Homography)> = None;
    let mut needed = cfg.max_iterations;
    let mut iteration = 0;
    while iteration < needed.min(cfg.max_iterations) {
        iteration += 1;
        let sample = if stratified {
            [0, 1, 2, 3].map(|q| quadrants[q][rng.random_range(0..quadrants[q].len())])
        } else {
            draw_distinct(&mut rng, matches.len())
        };
        let pts = sample.map(|i| matches[i]);
        if has_collinear_triple(&pts.map(|m| m.src)) || has_collinear_triple(&pts.map(|m| m.dst))
        {
            continue;
        }
        let Ok(h) = estimate_homography(&pts) else {
            continue;
        };
        let (count, cost) = consensus(&h, matches, cfg.inlier_threshold);
        let better = match &best {
            None => true,
            Some((bc, bcost, _)) => count > *bc || (count == *bc && cost < *bcost),
        };
        if better {
            best = Some((count, cost, h));
            needed = required_iterations(count as f64 / matches.len() as f64);
        }
    }

    let Some((_, _, mut model)) = best else {
        return Err(Error::NoConsensus {
            fraction: 0.0,
            required: cfg.min_inlier_fraction,
        });
    };
    let mut inliers = inlier_indices(&model, matches, cfg.inlier_threshold);
    for _ in 0..5 {
        if inliers.len() < 4 {
            break;
        }
        let subset: Vec<PointMatch> = inliers.iter().map(|&i| matches[i]).collect();
        let Ok(refit) = estimate_homography(&subset) else {
            break;
        };
        let next = inlier_indices(&refit, matches, cfg.inlier_threshold);
        if next.len() < inliers.len() {
            break;
        }
        let stable = next == inliers;
        model = refit;
        inliers = next;
        if stable {
            break;
        }
    }

    let fraction = inliers.len() as f64 / matches.len() as f64;
    if fraction < cfg.min_inlier_fraction || inliers.len() < 4 {
        return Err(Error::NoConsensus {
            fraction,
            required: cfg.min_inlier_fraction,
        });
    }
    Ok((model, inliers))
}

fn draw_distinct(rng: &mut ChaCha8Rng, n: usize) -> [usize; 4] {
    let mut out = [usize::MAX; 4];
    let mut filled = 0;
    while filled < 4 {
        let i = rng.random_range(0..n);
        if !out[..filled].contains(&i) {
            out[filled] = i;
            filled += 1;
        }
    }
    out
}

fn has_collinear_triple(p: &[Point2; 4]) -> bool {
    let scale = p
        .iter()
        .flat_map(|a| p.iter().map(move |b| a.distance(*b)))
        .fold(0.0, f64::max);
    if scale <= 0.0 {
        return true;
    }
    let tol = 1e-6 * scale * scale;
    for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
        let u = p[j] - p[i];
        let v = p[k] - p[i];
        if (u.x * v.y - u.y * v.x).abs() <= tol {
            return true;
        }
    }
    false
}

fn consensus(h: &Homography, matches: &[PointMatch], threshold: f64) -> (usize, f64) {
    matches.iter().fold((0, 0.0), |(count, cost), m| {
        let e = h.transfer_error(m);
        if e <= threshold {
            (count + 1, cost + e * e)
        } else {
            (count, cost)
        }
    })
}

fn inlier_indices(h: &Homography, matches: &[PointMatch], threshold: f64) -> Vec<usize> {
    matches
        .iter()
        .enumerate()
        .filter(|(_, m)| h.transfer_error(m) <= threshold)
        .map(|(i, _)| i)
        .collect()
}

fn required_iterations(inlier_ratio: f64) -> usize {
    let hit = inlier_ratio.powi(4);
    if hit >= 1.0 {
        return 1;
    }
    if hit <= 0.0 {
        return usize::MAX;
    }
    let n = (1.0 - RANSAC_CONFIDENCE).ln() / (1.0 - hit).ln();
    if n.is_finite() {
        n.ceil().max(1.0) as usize
    } else {
        usize::MAX
    }
}

/// Parses the line-oriented correspondence format: `sx sy dx dy` per line,
/// `#` starts a comment.
pub fn parse_matches(text: &str) -> Result<Vec<PointMatch>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        if vals.len() != 4 || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!(
                "line {}: expected 4 finite numbers, got `{line}`",
                lineno + 1
            )));
        }
        out.push(PointMatch::new(
            Point2::new(vals[0], vals[1]),
            Point2::new(vals[2], vals[3]),
        ));
    }
    Ok(out)
}

pub fn format_matches(matches: &[PointMatch]) -> String {
    let mut s = String::from("# sx sy dx dy\n");
    for m in matches {
        s.push_str(&format!(
            "{} {} {} {}\n",
            m.src.x, m.src.y, m.dst.x, m.dst.y
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Uniform};

    fn square_matches(offset: Point2) -> Vec<PointMatch> {
        [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)]
            .iter()
            .map(|&(x, y)| {
                let p = Point2::new(x, y);
                PointMatch::new(p, p + offset)
            })
            .collect()
    }

    fn assert_h_close(a: &Homography, b: &Homography, tol: f64) {
        for r in 0..3 {
            for c in 0..3 {
                assert_abs_diff_eq!(a.matrix()[(r, c)], b.matrix()[(r, c)], epsilon = tol);
            }
        }
    }

    /// A random well-conditioned homography: near-similarity plus mild
    /// perspective.
    fn planted(rng: &mut ChaCha8Rng) -> Homography {
        loop {
            let u = Uniform::new(-1.0, 1.0).unwrap();
            let m = Matrix3::new(
                1.0 + 0.2 * u.sample(rng),
                0.2 * u.sample(rng),
                20.0 * u.sample(rng),
                0.2 * u.sample(rng),
                1.0 + 0.2 * u.sample(rng),
                20.0 * u.sample(rng),
                1e-4 * u.sample(rng),
                1e-4 * u.sample(rng),
                1.0,
            );
            let svd = m.svd(false, false);
            let sv = svd.singular_values;
            if sv.max() / sv.min() < 100.0 {
                return Homography::from_matrix(m).unwrap();
            }
        }
    }

    fn mapped_points(h: &Homography, n: usize, rng: &mut ChaCha8Rng) -> Vec<PointMatch> {
        let u = Uniform::new(0.0, 320.0).unwrap();
        (0..n)
            .map(|_| {
                let p = Point2::new(u.sample(rng), u.sample(rng) * 0.75);
                PointMatch::new(p, h.apply(p).unwrap())
            })
            .collect()
    }

    #[test]
    fn identity_from_fixed_points() {
        let h = estimate_homography(&square_matches(Point2::ZERO)).unwrap();
        assert_h_close(&h, &Homography::identity(), 1e-12);
    }

    #[test]
    fn translation_is_forced() {
        let h = estimate_homography(&square_matches(Point2::new(5.0, 3.0))).unwrap();
        assert_h_close(&h, &Homography::translation(5.0, 3.0), 1e-12);
    }

    #[test]
    fn planted_homography_recovered_from_20_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = planted(&mut rng);
        let matches = mapped_points(&truth, 20, &mut rng);
        let h = estimate_homography(&matches).unwrap();
        assert_h_close(&h, &truth, 1e-6);
    }

    #[test]
    fn exact_for_all_match_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 4..=100 {
            let truth = planted(&mut rng);
            let matches = mapped_points(&truth, n, &mut rng);
            let h = estimate_homography(&matches).unwrap();
            assert_h_close(&h, &truth, 1e-6);
        }
    }

    #[test]
    fn too_few_or_collinear_is_degenerate() {
        let three = &square_matches(Point2::ZERO)[..3];
        assert!(matches!(
            estimate_homography(three),
            Err(Error::DegenerateConfiguration(_))
        ));
        let line: Vec<_> = (0..6)
            .map(|i| {
                let p = Point2::new(i as f64, 2.0 * i as f64);
                PointMatch::new(p, p)
            })
            .collect();
        assert!(matches!(
            estimate_homography(&line),
            Err(Error::DegenerateConfiguration(_))
        ));
        let coincident = vec![PointMatch::new(Point2::new(1.0, 1.0), Point2::new(1.0, 1.0)); 5];
        assert!(estimate_homography(&coincident).is_err());
    }

    #[test]
    fn apply_examples() {
        let id = Homography::identity();
        assert_eq!(id.apply(Point2::new(7.0, -2.0)).unwrap(), Point2::new(7.0, -2.0));
        let t = Homography::translation(5.0, 3.0);
        assert_eq!(t.apply(Point2::ZERO).unwrap(), Point2::new(5.0, 3.0));
        let p = Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.001, 0.0, 1.0]])
            .unwrap();
        let q = p.apply(Point2::new(100.0, 0.0)).unwrap();
        assert_abs_diff_eq!(q.x, 100.0 / 1.1, epsilon = 1e-12);
        assert_eq!(q.y, 0.0);
    }

    #[test]
    fn apply_at_infinity() {
        let p = Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.01, 0.0, 1.0]])
            .unwrap();
        assert!(matches!(
            p.apply(Point2::new(-100.0, 3.0)),
            Err(Error::PointAtInfinity)
        ));
    }

    #[test]
    fn invert_examples() {
        assert_h_close(
            &Homography::identity().inverse().unwrap(),
            &Homography::identity(),
            0.0,
        );
        assert_h_close(
            &Homography::translation(5.0, 3.0).inverse().unwrap(),
            &Homography::translation(-5.0, -3.0),
            1e-15,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = planted(&mut rng);
        let inv = h.inverse().unwrap();
        let u = Uniform::new(-200.0, 500.0).unwrap();
        for _ in 0..10 {
            let p = Point2::new(u.sample(&mut rng), u.sample(&mut rng));
            let back = inv.apply(h.apply(p).unwrap()).unwrap();
            assert_abs_diff_eq!(back.x, p.x, epsilon = 1e-9);
            assert_abs_diff_eq!(back.y, p.y, epsilon = 1e-9);
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        assert!(matches!(
            Homography::from_rows([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]),
            Err(Error::SingularMatrix)
        ));
        assert!(Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
            .is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = planted(&mut rng);
        let p = Point2::new(120.0, 80.0);
        let j = h.jacobian(p).unwrap();
        let eps = 1e-5;
        let dx = (h.apply(p + Point2::new(eps, 0.0)).unwrap()
            - h.apply(p - Point2::new(eps, 0.0)).unwrap())
            * (0.5 / eps);
        let dy = (h.apply(p + Point2::new(0.0, eps)).unwrap()
            - h.apply(p - Point2::new(0.0, eps)).unwrap())
            * (0.5 / eps);
        assert_abs_diff_eq!(j[(0, 0)], dx.x, epsilon = 1e-7);
        assert_abs_diff_eq!(j[(1, 0)], dx.y, epsilon = 1e-7);
        assert_abs_diff_eq!(j[(0, 1)], dy.x, epsilon = 1e-7);
        assert_abs_diff_eq!(j[(1, 1)], dy.y, epsilon = 1e-7);
    }

    #[test]
    fn ransac_exact_translation_keeps_everything() {
        let mut matches = square_matches(Point2::new(5.0, 3.0));
        matches.extend(
            [(2.0, 7.0), (8.0, 1.0), (4.0, 4.0)]
                .iter()
                .map(|&(x, y)| PointMatch::new(Point2::new(x, y), Point2::new(x + 5.0, y + 3.0))),
        );
        let (h, inliers) = ransac_homography(&matches, &RansacConfig::default()).unwrap();
        assert_h_close(&h, &estimate_homography(&matches).unwrap(), 1e-9);
        assert_eq!(inliers, (0..matches.len()).collect::<Vec<_>>());
    }

    #[test]
    fn ransac_three_matches_is_degenerate() {
        let m = &square_matches(Point2::ZERO)[..3];
        assert!(matches!(
            ransac_homography(m, &RansacConfig::default()),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    fn outlier_scene(seed: u64, inlier_fraction: f64) -> (Homography, Vec<PointMatch>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = Homography::rigid(10f64.to_radians(), Point2::new(160.0, 120.0), 6.0, -4.0);
        let ux = Uniform::new(0.0, 320.0).unwrap();
        let uy = Uniform::new(0.0, 240.0).unwrap();
        let n = 200;
        let n_in = (n as f64 * inlier_fraction).round() as usize;
        let mut matches = Vec::new();
        let mut is_inlier = Vec::new();
        for i in 0..n {
            let src = Point2::new(ux.sample(&mut rng), uy.sample(&mut rng));
            if i < n_in {
                matches.push(PointMatch::new(src, truth.apply(src).unwrap()));
                is_inlier.push(true);
            } else {
                let dst = Point2::new(ux.sample(&mut rng), uy.sample(&mut rng));
                matches.push(PointMatch::new(src, dst));
                is_inlier.push(false);
            }
        }
        (truth, matches, is_inlier)
    }

    #[test]
    fn ransac_rejects_40_percent_outliers() {
        let (truth, matches, is_inlier) = outlier_scene(17, 0.6);
        let cfg = RansacConfig {
            inlier_threshold: 1.0,
            ..RansacConfig::default()
        };
        let (h, inliers) = ransac_homography(&matches, &cfg).unwrap();
        let true_idx: Vec<usize> = (0..matches.len()).filter(|&i| is_inlier[i]).collect();
        for &i in &true_idx {
            assert!(h.transfer_error(&matches[i]) < 0.5);
            let _ = truth;
        }
        let recovered = true_idx.iter().filter(|i| inliers.contains(i)).count();
        assert!(recovered as f64 >= 0.9 * true_idx.len() as f64);
        for &i in &inliers {
            assert!(h.transfer_error(&matches[i]) <= cfg.inlier_threshold);
        }
    }

    #[test]
    fn ransac_is_reproducible() {
        let (_, matches, _) = outlier_scene(4, 0.5);
        let cfg = RansacConfig {
            rng_seed: 99,
            ..RansacConfig::default()
        };
        let a = ransac_homography(&matches, &cfg).unwrap();
        let b = ransac_homography(&matches, &cfg).unwrap();
        assert_eq!(a.0.rows(), b.0.rows());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn ransac_no_consensus() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = Uniform::new(0.0, 100.0).unwrap();
        let matches: Vec<_> = (0..50)
            .map(|_| {
                PointMatch::new(
                    Point2::new(u.sample(&mut rng), u.sample(&mut rng)),
                    Point2::new(u.sample(&mut rng), u.sample(&mut rng)),
                )
            })
            .collect();
        let cfg = RansacConfig {
            inlier_threshold: 0.5,
            min_inlier_fraction: 0.5,
            ..RansacConfig::default()
        };
        assert!(matches!(
            ransac_homography(&matches, &cfg),
            Err(Error::NoConsensus { .. })
        ));
    }

    #[test]
    fn ransac_falls_back_when_a_quadrant_is_empty() {
        // All sources in the left half of the declared bounds.
        let t = Homography::translation(2.0, -1.0);
        let matches: Vec<_> = (0..5)
            .flat_map(|i| (0..5).map(move |j| Point2::new(i as f64 * 10.0, j as f64 * 40.0)))
            .map(|p| PointMatch::new(p, t.apply(p).unwrap()))
            .collect();
        let bounds = SamplingBounds::image(320, 240);
        let (h, inliers) =
            ransac_homography_within(&matches, &RansacConfig::default(), bounds).unwrap();
        assert_h_close(&h, &t, 1e-9);
        assert_eq!(inliers.len(), matches.len());
    }

    #[test]
    fn match_file_parsing() {
        let text = "# header\n1 2 3 4\n\n  5.5 6 7 8e0 # trailing\n";
        let m = parse_matches(text).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[1].src, Point2::new(5.5, 6.0));
        assert!(parse_matches("1 2 3\n").is_err());
        assert!(parse_matches("1 2 x 4\n").is_err());
        assert_eq!(parse_matches(&format_matches(&m)).unwrap(), m);
    }

    proptest! {
        #[test]
        fn apply_after_invert_is_identity(
            a in -0.3f64..0.3, tx in -50f64..50.0, ty in -50f64..50.0,
            px in -400f64..400.0, py in -400f64..400.0,
            g in -1e-4f64..1e-4,
        ) {
            let m = Matrix3::new(a.cos() * 1.1, -a.sin(), tx, a.sin(), a.cos() * 0.9, ty, g, -g, 1.0);
            let h = Homography::from_matrix(m).unwrap();
            let inv = h.inverse().unwrap();
            let p = Point2::new(px, py);
            let q = h.apply(p).unwrap();
            let back = inv.apply(q).unwrap();
            prop_assert!((back.x - p.x).abs() < 1e-9 && (back.y - p.y).abs() < 1e-9);
        }
    }
}
