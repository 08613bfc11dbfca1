//! The degradation model `Y = SHX`: separable Gaussian blur `H` with
//! clamp-to-edge boundaries followed by top-left decimation `S`, and the
//! exact adjoint `HᵀSᵀ`.

use serde::{Deserialize, Serialize};

use super::{Image, Plane};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationConfig {
    /// Decimation factor.
    pub scale: usize,
    /// Standard deviation of the blur in HR pixels; 0 disables blurring.
    pub blur_sigma: f64,
    /// Kernel half-width; `None` means `ceil(3·blur_sigma)`.
    pub blur_radius: Option<usize>,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            scale: 2,
            blur_sigma: 0.8,
            blur_radius: None,
        }
    }
}

impl DegradationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 {
            return Err(Error::invalid("scale must be at least 1"));
        }
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::invalid(format!("blur_sigma must be >= 0, got {}", self.blur_sigma)));
        }
        Ok(())
    }

    pub fn radius(&self) -> usize {
        self.blur_radius
            .unwrap_or_else(|| (3.0 * self.blur_sigma).ceil() as usize)
    }

    pub fn kernel(&self) -> Vec<f64> {
        gaussian_kernel(self.blur_sigma, self.radius())
    }
}

/// Normalised samples of `exp(−i²/2σ²)` for `i ∈ [−radius, radius]`.
/// σ = 0 (or radius 0) gives the identity kernel `[1]`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    if sigma == 0.0 || radius == 0 {
        return vec![1.0];
    }
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Separable convolution with clamp-to-edge boundaries.
pub fn blur_plane(src: &Plane, kernel: &[f64]) -> Plane {
    if kernel.len() == 1 {
        let mut out = src.clone();
        out.data_mut().iter_mut().for_each(|v| *v *= kernel[0]);
        return out;
    }
    let (w, h) = src.dims();
    let r = (kernel.len() / 2) as isize;
    let mut tmp = Plane::zeros(w, h);
    for y in 0..h {
        let row = &src.data()[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, g) in kernel.iter().enumerate() {
                acc += g * row[clamp_index(x as isize + k as isize - r, w)];
            }
            tmp.set(x, y, acc);
        }
    }
    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        for (k, g) in kernel.iter().enumerate() {
            let sy = clamp_index(y as isize + k as isize - r, h);
            let src_row = &tmp.data()[sy * w..(sy + 1) * w];
            let dst_row = &mut out.data_mut()[y * w..(y + 1) * w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += g * s;
            }
        }
    }
    out
}

/// Exact adjoint of [`blur_plane`]: contributions that the forward pass read
/// from clamped (out-of-range) positions are folded back onto the edge pixels.
/// On inputs supported away from the border this is plain correlation with
/// the (symmetric) kernel.
pub fn blur_adjoint_plane(src: &Plane, kernel: &[f64]) -> Plane {
    if kernel.len() == 1 {
        return blur_plane(src, kernel);
    }
    let (w, h) = src.dims();
    let r = (kernel.len() / 2) as isize;
    // Vertical pass first: the forward operator applies it last.
    let mut tmp = Plane::zeros(w, h);
    for y in 0..h {
        for (k, g) in kernel.iter().enumerate() {
            let ty = clamp_index(y as isize + k as isize - r, h);
            for x in 0..w {
                let v = src.get(x, y);
                let idx = ty * w + x;
                tmp.data_mut()[idx] += g * v;
            }
        }
    }
    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let v = tmp.get(x, y);
            for (k, g) in kernel.iter().enumerate() {
                let tx = clamp_index(x as isize + k as isize - r, w);
                out.data_mut()[y * w + tx] += g * v;
            }
        }
    }
    out
}

/// `output(i, j) = input(scale·i, scale·j)`.
pub fn decimate_plane(src: &Plane, scale: usize) -> Result<Plane> {
    let (w, h) = src.dims();
    if scale == 0 || w % scale != 0 || h % scale != 0 {
        return Err(Error::invalid(format!(
            "{w}x{h} is not divisible by scale {scale}; crop first"
        )));
    }
    let (ow, oh) = (w / scale, h / scale);
    let mut data = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            data.push(src.get(scale * x, scale * y));
        }
    }
    Plane::new(ow, oh, data)
}

/// `Sᵀ`: places `src(i, j)` at `(scale·i, scale·j)` of a zero HR grid.
pub fn zero_insert(src: &Plane, scale: usize, hr_width: usize, hr_height: usize) -> Result<Plane> {
    if scale == 0 || hr_width != scale * src.width() || hr_height != scale * src.height() {
        return Err(Error::invalid(format!(
            "HR dims {hr_width}x{hr_height} inconsistent with {}x{} at scale {scale}",
            src.width(),
            src.height()
        )));
    }
    let mut out = Plane::zeros(hr_width, hr_height);
    for y in 0..src.height() {
        for x in 0..src.width() {
            out.set(scale * x, scale * y, src.get(x, y));
        }
    }
    Ok(out)
}

/// Applies `H`.
pub fn gaussian_blur(image: &Image, config: &DegradationConfig) -> Image {
    Image::from_plane_unchecked(blur_plane(image.as_plane(), &config.kernel()))
}

/// Applies `S`.
pub fn decimate(image: &Image, scale: usize) -> Result<Image> {
    Ok(Image::from_plane_unchecked(decimate_plane(image.as_plane(), scale)?))
}

/// `SH` on an unconstrained plane.
pub fn degrade_plane(x: &Plane, config: &DegradationConfig) -> Result<Plane> {
    config.validate()?;
    decimate_plane(&blur_plane(x, &config.kernel()), config.scale)
}

/// `Y = SHX`.
pub fn degrade(x: &Image, config: &DegradationConfig) -> Result<Image> {
    Ok(Image::from_plane_unchecked(degrade_plane(x.as_plane(), config)?))
}

/// `HᵀSᵀy` onto an HR grid of the given size. Not clamped: the result is a
/// gradient term, not a displayable image.
pub fn degrade_adjoint(y: &Plane, hr_width: usize, hr_height: usize, config: &DegradationConfig) -> Result<Plane> {
    config.validate()?;
    let up = zero_insert(y, config.scale, hr_width, hr_height)?;
    Ok(blur_adjoint_plane(&up, &config.kernel()))
}

/// Region kept by [`center_crop_to_multiple`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crop {
    pub left: usize,
    pub top: usize,
    pub width: usize,
    pub height: usize,
    pub original_width: usize,
    pub original_height: usize,
}

impl Crop {
    pub fn is_identity(&self) -> bool {
        self.width == self.original_width && self.height == self.original_height
    }
}

/// Center-crops so both dimensions are multiples of `scale`.
pub fn center_crop_to_multiple(image: &Image, scale: usize) -> Result<(Image, Crop)> {
    let (w, h) = image.dims();
    if scale == 0 || w < scale || h < scale {
        return Err(Error::invalid(format!("cannot crop {w}x{h} to a multiple of {scale}")));
    }
    let (cw, ch) = (w - w % scale, h - h % scale);
    let (left, top) = ((w - cw) / 2, (h - ch) / 2);
    let mut data = Vec::with_capacity(cw * ch);
    for y in top..top + ch {
        data.extend_from_slice(&image.pixels()[y * w + left..y * w + left + cw]);
    }
    let crop = Crop {
        left,
        top,
        width: cw,
        height: ch,
        original_width: w,
        original_height: h,
    };
    Ok((Image(Plane::new(cw, ch, data)?), crop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ramp(w: usize, h: usize) -> Image {
        let data = (0..w * h).map(|i| (i % 97) as f64 / 96.0).collect();
        Image::new(w, h, data).unwrap()
    }

    #[test]
    fn kernels_sum_to_one() {
        for sigma in [0.3, 0.8, 1.5, 2.7] {
            let cfg = DegradationConfig { blur_sigma: sigma, ..Default::default() };
            let k = cfg.kernel();
            assert_eq!(k.len(), 2 * cfg.radius() + 1);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(gaussian_kernel(0.0, 3), vec![1.0]);
        assert_eq!(DegradationConfig::default().radius(), 3);
    }

    #[test]
    fn zero_sigma_blur_is_identity() {
        let img = ramp(7, 5);
        let cfg = DegradationConfig { blur_sigma: 0.0, ..Default::default() };
        assert_eq!(gaussian_blur(&img, &cfg), img);
    }

    #[test]
    fn constant_image_is_preserved() {
        let img = Image::filled(12, 10, 0.37);
        let out = gaussian_blur(&img, &DegradationConfig::default());
        assert!(out.pixels().iter().all(|v| (v - 0.37).abs() < 1e-14));
        let y = degrade(&img, &DegradationConfig::default()).unwrap();
        assert_eq!(y.dims(), (6, 5));
        assert!(y.pixels().iter().all(|v| (v - 0.37).abs() < 1e-14));
    }

    #[test]
    fn impulse_response_is_separable_gaussian() {
        let (w, h) = (20, 20);
        let mut data = vec![0.0; w * h];
        data[10 * w + 10] = 1.0;
        let img = Image::new(w, h, data).unwrap();
        let sigma = 0.8;
        let cfg = DegradationConfig { blur_sigma: sigma, ..Default::default() };
        let out = gaussian_blur(&img, &cfg);
        let g = |d: i64| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp();
        let z: f64 = (-3..=3).map(g).sum();
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let (dx, dy) = (x - 10, y - 10);
                let expected = if dx.abs() <= 3 && dy.abs() <= 3 { g(dx) * g(dy) / (z * z) } else { 0.0 };
                assert!((out.get(x as usize, y as usize) - expected).abs() < 1e-15);
            }
        }
        // Decimated impulse response keeps the even taps.
        let y = degrade(&img, &cfg).unwrap();
        for (yy, xx) in [(5usize, 5usize), (4, 5), (5, 6), (4, 4)] {
            let (dx, dy) = (2 * xx as i64 - 10, 2 * yy as i64 - 10);
            assert!((y.get(xx, yy) - g(dx) * g(dy) / (z * z)).abs() < 1e-15);
        }
    }

    #[test]
    fn decimation_examples() {
        let img = ramp(4, 4);
        assert_eq!(decimate(&img, 1).unwrap(), img);
        let d = decimate(&img, 2).unwrap();
        assert_eq!(d.pixels(), &[img.get(0, 0), img.get(2, 0), img.get(0, 2), img.get(2, 2)]);
        assert!(decimate(&ramp(5, 4), 2).is_err());
        let cfg = DegradationConfig { blur_sigma: 0.0, ..Default::default() };
        assert_eq!(degrade(&img, &cfg).unwrap(), d);
    }

    #[test]
    fn adjoint_edge_cases() {
        let cfg = DegradationConfig::default();
        let z = degrade_adjoint(&Plane::zeros(4, 3), 8, 6, &cfg).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(degrade_adjoint(&Plane::zeros(4, 3), 8, 7, &cfg).is_err());
        let ident = DegradationConfig { scale: 1, blur_sigma: 0.0, blur_radius: None };
        let p = ramp(5, 4).into_plane();
        assert_eq!(degrade_adjoint(&p, 5, 4, &ident).unwrap(), p);
    }

    #[test]
    fn adjoint_is_exact_even_at_borders() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = DegradationConfig::default();
        let u = Plane::new(10, 8, (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let v = Plane::new(5, 4, (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let lhs = degrade_plane(&u, &cfg).unwrap().dot(&v);
        let rhs = u.dot(&degrade_adjoint(&v, 10, 8, &cfg).unwrap());
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn adjoint_pairing_on_border_zero_vectors(seed in any::<u64>(), half_w in 6usize..12, half_h in 6usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = DegradationConfig::default();
            let (w, h) = (2 * half_w, 2 * half_h);
            let border = 4;
            let mut u = Plane::zeros(w, h);
            for y in border..h - border {
                for x in border..w - border {
                    u.set(x, y, rng.gen_range(0.0..1.0));
                }
            }
            let mut v = Plane::zeros(half_w, half_h);
            for y in 2..half_h - 2 {
                for x in 2..half_w - 2 {
                    v.set(x, y, rng.gen_range(-1.0..1.0));
                }
            }
            let u_img = Image::new(w, h, u.data().to_vec()).unwrap();
            let lhs = degrade(&u_img, &cfg).unwrap().as_plane().dot(&v);
            let rhs = u.dot(&degrade_adjoint(&v, w, h, &cfg).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()).max(1e-12));
        }

        #[test]
        fn zero_insert_then_decimate_is_identity(w in 1usize..9, h in 1usize..9, s in 1usize..4, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = Plane::new(w, h, (0..w * h).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let up = zero_insert(&y, s, s * w, s * h).unwrap();
            prop_assert_eq!(decimate_plane(&up, s).unwrap(), y);
        }
    }

    #[test]
    fn center_crop() {
        let img = ramp(7, 6);
        let (c, crop) = center_crop_to_multiple(&img, 2).unwrap();
        assert_eq!(c.dims(), (6, 6));
        assert_eq!((crop.left, crop.top), (0, 0));
        assert!(!crop.is_identity());
        let img = ramp(9, 9);
        let (c, crop) = center_crop_to_multiple(&img, 4).unwrap();
        assert_eq!(c.dims(), (8, 8));
        assert_eq!((crop.left, crop.top), (0, 0));
        assert_eq!(c.get(0, 0), img.get(0, 0));
        let (c, crop) = center_crop_to_multiple(&ramp(8, 6), 2).unwrap();
        assert!(crop.is_identity());
        assert_eq!(c, ramp(8, 6));
    }
}
