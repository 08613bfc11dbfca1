//! Keys bicubic resampling.

use super::{Image, Plane};
use crate::{Error, Result};

const KEYS_A: f64 = -0.5;

/// Keys cubic convolution kernel with `a = −0.5`.
pub fn keys_kernel(t: f64) -> f64 {
    let t = t.abs();
    let a = KEYS_A;
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Four (index, weight) taps per output sample. Output sample `d` sits at
/// input coordinate `d·in/out`, so pixel 0 is shared by both grids; this is
/// the alignment of top-left decimation.
fn taps(in_len: usize, out_len: usize) -> Vec<[(usize, f64); 4]> {
    let ratio = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|d| {
            let src = d as f64 * ratio;
            let base = src.floor();
            let mut t = [(0usize, 0.0); 4];
            for (k, tap) in t.iter_mut().enumerate() {
                let i = base as isize - 1 + k as isize;
                let w = keys_kernel(src - i as f64);
                *tap = (i.clamp(0, in_len as isize - 1) as usize, w);
            }
            t
        })
        .collect()
}

/// Resamples to `out_width × out_height` with clamped coordinates; the
/// result is clamped to `[0, 1]`.
pub fn bicubic_resize(image: &Image, out_width: usize, out_height: usize) -> Result<Image> {
    if out_width == 0 || out_height == 0 {
        return Err(Error::invalid(format!(
            "output dimensions must be positive, got {out_width}x{out_height}"
        )));
    }
    let (w, h) = image.dims();
    let tx = taps(w, out_width);
    let ty = taps(h, out_height);
    let src = image.pixels();

    let mut rows = vec![0.0; out_width * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (x, t) in tx.iter().enumerate() {
            rows[y * out_width + x] = t.iter().map(|&(i, wt)| wt * row[i]).sum();
        }
    }
    let mut out = vec![0.0; out_width * out_height];
    for (y, t) in ty.iter().enumerate() {
        let dst = &mut out[y * out_width..(y + 1) * out_width];
        for &(i, wt) in t {
            let src_row = &rows[i * out_width..(i + 1) * out_width];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += wt * s;
            }
        }
    }
    Ok(Image::from_plane_unchecked(Plane::new(out_width, out_height, out)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_partition_of_unity() {
        for i in 0..20 {
            let f = i as f64 / 20.0;
            let s: f64 = (-1..=2).map(|k| keys_kernel(f - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
        assert_eq!(keys_kernel(0.0), 1.0);
        assert_eq!(keys_kernel(1.0), 0.0);
        assert_eq!(keys_kernel(2.0), 0.0);
        assert_eq!(keys_kernel(0.5), 0.5625);
        assert_eq!(keys_kernel(1.5), -0.0625);
    }

    #[test]
    fn constant_and_identity() {
        let c = Image::filled(5, 3, 0.3);
        let up = bicubic_resize(&c, 13, 8).unwrap();
        assert_eq!(up.dims(), (13, 8));
        assert!(up.pixels().iter().all(|v| (v - 0.3).abs() < 1e-12));

        let data: Vec<f64> = (0..35).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
        let img = Image::new(7, 5, data).unwrap();
        let same = bicubic_resize(&img, 7, 5).unwrap();
        for (a, b) in same.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(bicubic_resize(&img, 0, 5).is_err());
    }

    #[test]
    fn ramp_upscale_by_two() {
        let vals: Vec<f64> = (0..8).map(|i| 0.1 * i as f64).collect();
        let img = Image::new(8, 1, vals.clone()).unwrap();
        let up = bicubic_resize(&img, 16, 1).unwrap();
        for i in 1..6 {
            assert!((up.get(2 * i, 0) - vals[i]).abs() < 1e-12);
            // −1/16, 9/16, 9/16, −1/16 on a line is the linear midpoint.
            let hand = -0.0625 * vals[i - 1] + 0.5625 * vals[i] + 0.5625 * vals[i + 1] - 0.0625 * vals[i + 2];
            assert!((up.get(2 * i + 1, 0) - hand).abs() < 1e-12);
            assert!((up.get(2 * i + 1, 0) - 0.5 * (vals[i] + vals[i + 1])).abs() < 1e-12);
        }
    }

    #[test]
    fn output_is_clamped() {
        let img = Image::new(4, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let up = bicubic_resize(&img, 8, 1).unwrap();
        assert!(up.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
