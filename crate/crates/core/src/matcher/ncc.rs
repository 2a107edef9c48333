//! Zero-mean normalized cross-correlation.
//!
//! The correlation numerator is computed in the frequency domain and the
//! per-window energy from summed-area tables, so a full response map costs
//! two FFTs regardless of template size.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::Image;

use super::shape::BinaryMask;

const FLAT_EPS: f64 = 1e-10;

/// Correlation scores indexed by template placement: cell `(u, v)` holds the
/// score with the template's top-left pixel on patch pixel `(u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    width: usize,
    height: usize,
    scores: Vec<f64>,
}

impl ResponseMap {
    pub fn new(width: usize, height: usize, scores: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || scores.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "response map {width}x{height} with {} scores",
                scores.len()
            )));
        }
        Ok(Self {
            width,
            height,
            scores: scores.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.scores[v * self.width + u]
    }

    /// First cell (raster order) holding the maximum score.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, s) in self.scores.iter().enumerate() {
            if *s > self.scores[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }

    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax of `(1 - influence) * score + influence * hann(u) * hann(v)`.
    ///
    /// The raised-cosine window favours placements near the patch center,
    /// i.e. near the predicted position.
    pub fn windowed_argmax(&self, influence: f64) -> (usize, usize) {
        if influence <= 0.0 {
            return self.argmax();
        }
        let wx = hann(self.width);
        let wy = hann(self.height);
        let mut best = (0, 0);
        let mut best_score = f64::NEG_INFINITY;
        for v in 0..self.height {
            for u in 0..self.width {
                let s = (1.0 - influence) * self.get(u, v) + influence * wx[u] * wy[v];
                if s > best_score {
                    best_score = s;
                    best = (u, v);
                }
            }
        }
        best
    }

    /// Sub-cell offset of a peak from a parabola through its neighbours,
    /// each component in `[-0.5, 0.5]`.
    pub fn subcell_offset(&self, u: usize, v: usize) -> (f64, f64) {
        let parabola = |l: f64, c: f64, r: f64| {
            let denom = l - 2.0 * c + r;
            if denom < -1e-12 {
                (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        };
        let c = self.get(u, v);
        let du = if u > 0 && u + 1 < self.width {
            parabola(self.get(u - 1, v), c, self.get(u + 1, v))
        } else {
            0.0
        };
        let dv = if v > 0 && v + 1 < self.height {
            parabola(self.get(u, v - 1), c, self.get(u, v + 1))
        } else {
            0.0
        };
        (du, dv)
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = (i + 1) as f64 / (n + 1) as f64;
            0.5 - 0.5 * (2.0 * std::f64::consts::PI * t).cos()
        })
        .collect()
}

/// Summed-area table with a zero guard row and column.
struct Integral {
    stride: usize,
    sum: Vec<f64>,
}

impl Integral {
    fn new(img: &Image, f: impl Fn(f64) -> f64) -> Self {
        let (w, h) = (img.width(), img.height());
        let stride = w + 1;
        let mut sum = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += f(img.get(x, y));
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
            }
        }
        Self { stride, sum }
    }

    #[inline]
    fn window(&self, x: usize, y: usize, w: usize, h: usize) -> f64 {
        let s = self.stride;
        self.sum[(y + h) * s + x + w] - self.sum[y * s + x + w] - self.sum[(y + h) * s + x]
            + self.sum[y * s + x]
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Smallest `m ≥ n` with no prime factor above 5.
fn smooth_size(n: usize) -> usize {
    (n.max(1)..)
        .find(|&m| {
            let mut r = m;
            for f in [2, 3, 5] {
                while r % f == 0 {
                    r /= f;
                }
            }
            r == 1
        })
        .expect("smooth sizes are unbounded")
}

fn transpose(data: &[Complex<f64>], w: usize, h: usize) -> Vec<Complex<f64>> {
    const TILE: usize = 16;
    let mut out = vec![Complex::default(); w * h];
    for y0 in (0..h).step_by(TILE) {
        for x0 in (0..w).step_by(TILE) {
            for y in y0..(y0 + TILE).min(h) {
                for x in x0..(x0 + TILE).min(w) {
                    out[x * h + y] = data[y * w + x];
                }
            }
        }
    }
    out
}

/// Forward 2-D transform of a row-major `w`×`h` grid. The spectrum comes
/// back transposed: bin `(kx, ky)` sits at `kx * h + ky`.
fn fft2_forward(data: &mut [Complex<f64>], w: usize, h: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex<f64>> {
    let row = planner.plan_fft_forward(w);
    let col = planner.plan_fft_forward(h);
    let mut scratch = vec![Complex::default(); row.get_inplace_scratch_len().max(col.get_inplace_scratch_len())];
    row.process_with_scratch(data, &mut scratch);
    let mut t = transpose(data, w, h);
    col.process_with_scratch(&mut t, &mut scratch);
    t
}

/// Inverse of [`fft2_forward`], without the `1/(w·h)` factor.
fn fft2_inverse(spectrum: &mut [Complex<f64>], w: usize, h: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex<f64>> {
    let row = planner.plan_fft_inverse(w);
    let col = planner.plan_fft_inverse(h);
    let mut scratch = vec![Complex::default(); row.get_inplace_scratch_len().max(col.get_inplace_scratch_len())];
    col.process_with_scratch(spectrum, &mut scratch);
    let mut data = transpose(spectrum, h, w);
    row.process_with_scratch(&mut data, &mut scratch);
    data
}

/// Zero-mean NCC of `template` at every placement fully inside `patch`.
pub fn match_template(template: &Image, patch: &Image) -> Result<ResponseMap> {
    let (tw, th) = (template.width(), template.height());
    let (pw, ph) = (patch.width(), patch.height());
    if tw > pw || th > ph {
        return Err(Error::TemplateLargerThanPatch {
            template: (tw, th),
            patch: (pw, ph),
        });
    }
    let n = (tw * th) as f64;
    let t_mean = template.mean();
    let t_energy: f64 = template.data().iter().map(|v| (v - t_mean) * (v - t_mean)).sum();
    if t_energy <= FLAT_EPS * n {
        return Err(Error::ZeroVarianceTemplate);
    }

    // Circular correlation on a zero-padded grid: placements that keep the
    // template inside the patch never wrap. Patch and template share one
    // complex transform as its real and imaginary parts.
    let (gw, gh) = (smooth_size(pw), smooth_size(ph));
    let mut z = vec![Complex::default(); gw * gh];
    for y in 0..ph {
        for x in 0..pw {
            z[y * gw + x].re = patch.get(x, y);
        }
    }
    for y in 0..th {
        for x in 0..tw {
            z[y * gw + x].im = template.get(x, y) - t_mean;
        }
    }
    let prod = PLANNER.with(|p| {
        let p = &mut p.borrow_mut();
        let z = fft2_forward(&mut z, gw, gh, p);
        let mut prod = vec![Complex::default(); gw * gh];
        for kx in 0..gw {
            let mx = (gw - kx) % gw;
            for ky in 0..gh {
                let my = (gh - ky) % gh;
                let a = z[kx * gh + ky];
                let b = z[mx * gh + my].conj();
                let fp = (a + b) * 0.5;
                let ft = (a - b) * Complex::new(0.0, -0.5);
                prod[kx * gh + ky] = fp * ft.conj();
            }
        }
        fft2_inverse(&mut prod, gw, gh, p)
    });
    let scale = 1.0 / (gw * gh) as f64;

    let sum = Integral::new(patch, |v| v);
    let sum2 = Integral::new(patch, |v| v * v);
    let (rw, rh) = (pw - tw + 1, ph - th + 1);
    let mut scores = Vec::with_capacity(rw * rh);
    for v in 0..rh {
        for u in 0..rw {
            let s = sum.window(u, v, tw, th);
            let energy = sum2.window(u, v, tw, th) - s * s / n;
            if energy <= FLAT_EPS * n {
                scores.push(0.0);
                continue;
            }
            let num = prod[v * gw + u].re * scale;
            scores.push(num / (t_energy * energy).sqrt());
        }
    }
    ResponseMap::new(rw, rh, scores)
}

/// Pixels of the template footprint placed at `peak` that agree with the
/// template to within `tolerance`, reduced to the largest 4-connected
/// component. The mask is anchored at the placement.
pub fn segment_response(
    template: &Image,
    patch: &Image,
    peak: (usize, usize),
    tolerance: f64,
) -> BinaryMask {
    let (tw, th) = (template.width(), template.height());
    let (u, v) = peak;
    let origin = crate::geometry::Point2::new(u as f64, v as f64);
    if u + tw > patch.width() || v + th > patch.height() {
        return BinaryMask::new(tw, th, origin);
    }
    BinaryMask::from_fn(tw, th, origin, |x, y| {
        (patch.get(u + x, v + y) - template.get(x, y)).abs() < tolerance
    })
    .largest_component()
}

/// Objectness of a response: its maximum clamped into `[0, 1]`.
pub fn objectness(response: &ResponseMap) -> f64 {
    response.max().clamp(0.0, 1.0)
}
