//! Binary masks, rotated boxes and the minimum-area enclosing rectangle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// A boolean raster anchored at `origin`: bit `(i, j)` represents the pixel
/// whose center is `origin + (i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    pub origin: Point2,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, origin: Point2) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
            origin,
        }
    }

    pub fn empty() -> Self {
        Self::new(0, 0, Point2::ZERO)
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>, origin: Point2) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "mask bits {} do not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
            origin,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        origin: Point2,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
            origin,
        }
    }

    /// Mask covering a set of integer pixel coordinates.
    pub fn from_pixels(pixels: &[(i64, i64)]) -> Self {
        if pixels.is_empty() {
            return Self::empty();
        }
        let x0 = pixels.iter().map(|p| p.0).min().unwrap();
        let x1 = pixels.iter().map(|p| p.0).max().unwrap();
        let y0 = pixels.iter().map(|p| p.1).min().unwrap();
        let y1 = pixels.iter().map(|p| p.1).max().unwrap();
        let mut m = Self::new(
            (x1 - x0 + 1) as usize,
            (y1 - y0 + 1) as usize,
            Point2::new(x0 as f64, y0 as f64),
        );
        for &(x, y) in pixels {
            m.set((x - x0) as usize, (y - y0) as usize, true);
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Coordinates of the foreground pixel centers, in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = Point2> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| {
            Point2::new(
                self.origin.x + (i % self.width) as f64,
                self.origin.y + (i / self.width) as f64,
            )
        })
    }

    pub fn translated(&self, by: Point2) -> Self {
        let mut m = self.clone();
        m.origin = m.origin + by;
        m
    }

    /// Integer pixel coordinates of the foreground; the origin is rounded
    /// onto the pixel grid.
    pub fn pixel_set(&self) -> Vec<(i64, i64)> {
        let ox = self.origin.x.round() as i64;
        let oy = self.origin.y.round() as i64;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| (ox + (i % self.width) as i64, oy + (i / self.width) as i64))
            .collect()
    }

    /// Largest 4-connected foreground component (ties go to the component
    /// met first in raster order).
    pub fn largest_component(&self) -> Self {
        let mut label = vec![usize::MAX; self.bits.len()];
        let mut best: Option<(usize, usize)> = None;
        let mut stack = Vec::new();
        let mut next = 0;
        for start in 0..self.bits.len() {
            if !self.bits[start] || label[start] != usize::MAX {
                continue;
            }
            let mut size = 0;
            label[start] = next;
            stack.push(start);
            while let Some(i) = stack.pop() {
                size += 1;
                let (x, y) = (i % self.width, i / self.width);
                let mut visit = |j: usize| {
                    if self.bits[j] && label[j] == usize::MAX {
                        label[j] = next;
                        stack.push(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < self.width {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - self.width);
                }
                if y + 1 < self.height {
                    visit(i + self.width);
                }
            }
            if best.is_none_or(|(_, s)| size > s) {
                best = Some((next, size));
            }
            next += 1;
        }
        let keep = best.map(|(l, _)| l);
        Self {
            width: self.width,
            height: self.height,
            bits: label.iter().map(|&l| Some(l) == keep).collect(),
            origin: self.origin,
        }
    }
}

/// A quadrilateral given by four corners in a consistent winding order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatedBox {
    pub corners: [Point2; 4],
}

impl RotatedBox {
    pub fn new(corners: [Point2; 4]) -> Self {
        Self { corners }
    }

    /// Axis-aligned rectangle with top-left `(x, y)` and extent `w`×`h`.
    pub fn axis_aligned(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new([
            Point2::new(x, y),
            Point2::new(x + w, y),
            Point2::new(x + w, y + h),
            Point2::new(x, y + h),
        ])
    }

    /// Axis-aligned rectangle of size `w`×`h` centered on `c`.
    pub fn centered(c: Point2, w: f64, h: f64) -> Self {
        Self::axis_aligned(c.x - w / 2.0, c.y - h / 2.0, w, h)
    }

    pub fn point(p: Point2) -> Self {
        Self::new([p; 4])
    }

    pub fn center(&self) -> Point2 {
        let s = self.corners.iter().fold(Point2::ZERO, |a, p| a + *p);
        s * 0.25
    }

    /// Unsigned shoelace area.
    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    fn signed_area(&self) -> f64 {
        let c = &self.corners;
        (0..4)
            .map(|i| {
                let (a, b) = (c[i], c[(i + 1) % 4]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            * 0.5
    }

    pub fn is_finite(&self) -> bool {
        self.corners.iter().all(|p| p.is_finite())
    }

    /// Corner-wise image of the box under `f`.
    pub fn map(&self, mut f: impl FnMut(Point2) -> Point2) -> Self {
        Self::new(self.corners.map(&mut f))
    }

    pub fn try_map(&self, mut f: impl FnMut(Point2) -> Result<Point2>) -> Result<Self> {
        let mut out = [Point2::ZERO; 4];
        for (o, c) in out.iter_mut().zip(self.corners) {
            *o = f(c)?;
        }
        Ok(Self::new(out))
    }

    /// Grows a rectangle by `d` on every side, keeping its orientation.
    /// Degenerate boxes grow along the axes (or their one direction).
    pub fn inflated(&self, d: f64) -> Self {
        let c = &self.corners;
        let unit = |v: Point2| {
            let n = v.norm();
            (n > 1e-12).then(|| v * (1.0 / n))
        };
        let e1 = unit(c[1] - c[0])
            .or_else(|| unit(c[2] - c[3]))
            .or_else(|| unit(c[3] - c[0]).map(|e| Point2::new(e.y, -e.x)))
            .unwrap_or(Point2::new(1.0, 0.0));
        let e2 = Point2::new(-e1.y, e1.x);
        let center = self.center();
        let sign = |v: f64, i: usize| if v.abs() > 1e-12 { v.signum() } else if i == 0 || i == 3 { -1.0 } else { 1.0 };
        let mut out = *self;
        for (i, p) in out.corners.iter_mut().enumerate() {
            let r = *p - center;
            let a = sign(r.dot(e1), i);
            let b = sign(r.dot(e2), if i < 2 { 0 } else { 1 });
            *p = *p + e1 * (a * d) + e2 * (b * d);
        }
        out
    }

    /// `(min, max)` of the axis-aligned hull.
    pub fn bounds(&self) -> (Point2, Point2) {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.corners {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        (min, max)
    }

    /// Even-odd crossing test with half-open boundaries, so that the
    /// rectangle `[x, x+w] × [y, y+h]` holds exactly the pixel centers of
    /// `[x, x+w) × [y, y+h)`.
    pub fn contains(&self, p: Point2) -> bool {
        let c = &self.corners;
        let mut inside = false;
        let mut j = 3;
        for i in 0..4 {
            let (a, b) = (c[i], c[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Pixels whose centers fall inside the box.
    pub fn rasterize(&self) -> BinaryMask {
        if !self.is_finite() {
            return BinaryMask::empty();
        }
        let (min, max) = self.bounds();
        let x0 = min.x.floor() as i64;
        let y0 = min.y.floor() as i64;
        let x1 = max.x.ceil() as i64;
        let y1 = max.y.ceil() as i64;
        let (w, h) = ((x1 - x0 + 1) as usize, (y1 - y0 + 1) as usize);
        BinaryMask::from_fn(w, h, Point2::new(x0 as f64, y0 as f64), |x, y| {
            self.contains(Point2::new((x0 + x as i64) as f64, (y0 + y as i64) as f64))
        })
    }
}

/// Andrew's monotone chain; returns the hull counter-clockwise (in a y-up
/// frame) without collinear points.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point2, a: Point2, b: Point2| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for &p in pts.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Minimum-area rectangle enclosing every foreground pixel center.
///
/// One side of the optimal rectangle is collinear with a hull edge, so each
/// hull edge direction is tried as a caliper orientation.
pub fn fit_rotated_box(mask: &BinaryMask) -> Result<RotatedBox> {
    // Only the extreme pixels of each row can be hull vertices.
    let mut points = Vec::new();
    for y in 0..mask.height() {
        let row = &mask.bits()[y * mask.width()..(y + 1) * mask.width()];
        if let (Some(a), Some(b)) = (row.iter().position(|&v| v), row.iter().rposition(|&v| v)) {
            for x in [a, b] {
                points.push(mask.origin + Point2::new(x as f64, y as f64));
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyMask);
    }
    let hull = convex_hull(&points);
    match hull.len() {
        1 => return Ok(RotatedBox::point(hull[0])),
        2 => return Ok(RotatedBox::new([hull[0], hull[1], hull[1], hull[0]])),
        _ => {}
    }
    let mut best: Option<(f64, RotatedBox)> = None;
    for i in 0..hull.len() {
        let edge = hull[(i + 1) % hull.len()] - hull[i];
        let len = edge.norm();
        if len == 0.0 {
            continue;
        }
        let u = edge * (1.0 / len);
        let n = Point2::new(-u.y, u.x);
        let (mut umin, mut umax, mut nmin, mut nmax) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let a = p.dot(u);
            let b = p.dot(n);
            umin = umin.min(a);
            umax = umax.max(a);
            nmin = nmin.min(b);
            nmax = nmax.max(b);
        }
        let area = (umax - umin) * (nmax - nmin);
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            let corner = |a: f64, b: f64| u * a + n * b;
            best = Some((
                area,
                RotatedBox::new([
                    corner(umin, nmin),
                    corner(umax, nmin),
                    corner(umax, nmax),
                    corner(umin, nmax),
                ]),
            ));
        }
    }
    Ok(best.map(|(_, b)| b).expect("hull has at least one edge"))
}

/// Intersection-over-union of two pixel sets given as masks on the grid.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let pa = a.pixel_set();
    let pb = b.pixel_set();
    if pa.is_empty() && pb.is_empty() {
        return 0.0;
    }
    let ma = BinaryMask::from_pixels(&pa);
    let inter = pb
        .iter()
        .filter(|&&(x, y)| {
            let lx = x - ma.origin.x as i64;
            let ly = y - ma.origin.y as i64;
            lx >= 0
                && ly >= 0
                && (lx as usize) < ma.width()
                && (ly as usize) < ma.height()
                && ma.get(lx as usize, ly as usize)
        })
        .count();
    let union = pa.len() + pb.len() - inter;
    inter as f64 / union as f64
}
