//! Single-channel images and the operators that act on them.
//!
//! [`Image`] holds intensities in `[0, 1]`; every public operation that
//! returns an `Image` clamps at its boundary. [`Plane`] is the unconstrained
//! real-valued grid used for intermediate quantities such as gradients,
//! adjoint images and SSIM maps.

mod degrade;
mod io;
mod resize;

pub use degrade::{
    blur_adjoint_plane, blur_plane, center_crop_to_multiple, decimate, decimate_plane, degrade,
    degrade_adjoint, degrade_plane, gaussian_blur, gaussian_kernel, zero_insert, Crop,
    DegradationConfig,
};
pub use io::{
    decode_pgm, encode_pgm, read_image, read_pgm, read_png, write_image, write_pgm, write_png,
};
pub use resize::{bicubic_resize, keys_kernel};

use crate::{Error, Result};

/// Row-major real-valued grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("plane dimensions must be positive, got {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "plane dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn dot(&self, other: &Plane) -> f64 {
        assert_eq!(self.dims(), other.dims());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// `self + k·other`.
    pub fn add_scaled(&self, k: f64, other: &Plane) -> Plane {
        assert_eq!(self.dims(), other.dims());
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + k * b).collect(),
        }
    }

    pub fn sub(&self, other: &Plane) -> Plane {
        self.add_scaled(-1.0, other)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Single-channel image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image(Plane);

impl Image {
    /// Rejects non-finite or out-of-range intensities.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        let plane = Plane::new(width, height, pixels)?;
        if let Some(bad) = plane.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(Self(plane))
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self(Plane::filled(width, height, value.clamp(0.0, 1.0)))
    }

    /// Clamps a plane into `[0, 1]`; fails on non-finite samples.
    pub fn from_plane(mut plane: Plane) -> Result<Self> {
        if !plane.is_finite() {
            return Err(Error::Numerical("image has non-finite samples".into()));
        }
        plane.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(Self(plane))
    }

    pub(crate) fn from_plane_unchecked(mut plane: Plane) -> Self {
        plane.data.iter_mut().for_each(|v| *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        Self(plane)
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.0.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0.get(x, y)
    }

    pub fn as_plane(&self) -> &Plane {
        &self.0
    }

    pub fn into_plane(self) -> Plane {
        self.0
    }
}

/// ITU-R BT.601 luma of an 8-bit RGB triple, in `[0, 1]`.
pub fn luminance(r: u8, g: u8, b: u8) -> f64 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0
}
