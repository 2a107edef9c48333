//! Grayscale raster with intensities in `[0, 1]`.
//!
//! Pixel `(i, j)` has its center at coordinate `(i, j)`.

use crate::error::{Error, Result};
use crate::geometry::Point2;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    /// Builds an image from `f(x, y)`; values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Decodes 8-bit samples as `v / 255`.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    /// Quantizes to 8-bit samples.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }

    #[inline]
    fn get_or(&self, x: i64, y: i64, pad: f64) -> f64 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            pad
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    /// Bilinear sample at `p`; neighbours outside the raster read `pad`.
    #[inline]
    pub fn sample(&self, p: Point2, pad: f64) -> f64 {
        let x0 = p.x.floor();
        let y0 = p.y.floor();
        let fx = p.x - x0;
        let fy = p.y - y0;
        let (xi, yi) = (x0 as i64, y0 as i64);
        let top = self.get_or(xi, yi, pad) * (1.0 - fx) + self.get_or(xi + 1, yi, pad) * fx;
        let bottom =
            self.get_or(xi, yi + 1, pad) * (1.0 - fx) + self.get_or(xi + 1, yi + 1, pad) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Bilinear resize that keeps the image center fixed.
    pub fn resized(&self, width: usize, height: usize) -> Image {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let edge = self.data[0];
        Image::from_fn(width, height, |x, y| {
            let p = Point2::new(
                ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64),
                ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64),
            );
            self.sample(p, edge)
        })
    }

    /// Resamples a `width`×`height` window centered on `center`.
    pub fn crop_centered(&self, center: Point2, width: usize, height: usize, pad: f64) -> Image {
        let x0 = center.x - (width as f64 - 1.0) / 2.0;
        let y0 = center.y - (height as f64 - 1.0) / 2.0;
        Image::from_fn(width, height, |x, y| {
            self.sample(Point2::new(x0 + x as f64, y0 + y as f64), pad)
        })
    }

    /// Affine intensity change `alpha * v + beta`, clamped to `[0, 1]`.
    pub fn map_intensity(&self, alpha: f64, beta: f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|v| (alpha * v + beta).clamp(0.0, 1.0))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_validates() {
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(0, 2, vec![]).is_err());
        assert!(Image::new(1, 1, vec![1.5]).is_err());
        assert!(Image::new(1, 2, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn bilinear_sampling() {
        let img = Image::new(2, 2, vec![0.0, 1.0, 0.5, 0.5]).unwrap();
        assert_eq!(img.sample(Point2::new(0.0, 0.0), 0.0), 0.0);
        assert_eq!(img.sample(Point2::new(1.0, 0.0), 0.0), 1.0);
        assert!((img.sample(Point2::new(0.5, 0.5), 0.0) - 0.5).abs() < 1e-15);
        assert_eq!(img.sample(Point2::new(-3.0, 0.0), 0.25), 0.25);
        // Half-way off the left edge blends with the pad value.
        assert!((img.sample(Point2::new(-0.5, 0.0), 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn resize_identity_and_center() {
        let img = Image::from_fn(5, 3, |x, y| (x + 5 * y) as f64 / 20.0);
        assert_eq!(img.resized(5, 3), img);
        let up = img.resized(10, 6);
        assert_eq!(up.width(), 10);
        // Mean is preserved approximately under upsampling of a linear ramp.
        assert!((up.mean() - img.mean()).abs() < 0.02);
    }

    #[test]
    fn u8_round_trip() {
        let bytes: Vec<u8> = (0..=255).collect();
        let img = Image::from_u8(16, 16, &bytes).unwrap();
        assert_eq!(img.to_u8(), bytes);
    }
}
