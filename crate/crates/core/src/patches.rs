//! Overlapping square patches: grid planning, extraction, mean handling and
//! overlap-averaged merging.

use serde::{Deserialize, Serialize};

use crate::imaging::{Image, Plane};
use crate::{Error, Result};

/// Anchors of overlapping `patch_size × patch_size` blocks covering an image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub image_width: usize,
    pub image_height: usize,
    pub patch_size: usize,
    pub stride: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn axis_anchors(dim: usize, p: usize, s: usize) -> Vec<usize> {
    let mut a: Vec<usize> = (0..).map(|k| k * s).take_while(|&v| v + p <= dim).collect();
    let flush = dim - p;
    if a.last() != Some(&flush) {
        a.push(flush);
    }
    a
}

/// Anchors at `0, s, 2s, …` (while the patch fits) plus a flush anchor at
/// `dim − p`, per axis, with `s = patch_size − overlap`.
pub fn plan_grid(width: usize, height: usize, patch_size: usize, overlap: usize) -> Result<PatchGrid> {
    if patch_size == 0 {
        return Err(Error::invalid("patch size must be positive"));
    }
    if overlap >= patch_size {
        return Err(Error::invalid(format!(
            "overlap {overlap} must be smaller than patch size {patch_size}"
        )));
    }
    if patch_size > width.min(height) {
        return Err(Error::invalid(format!(
            "patch size {patch_size} exceeds image {width}x{height}"
        )));
    }
    let stride = patch_size - overlap;
    Ok(PatchGrid {
        image_width: width,
        image_height: height,
        patch_size,
        stride,
        rows: axis_anchors(height, patch_size, stride),
        cols: axis_anchors(width, patch_size, stride),
    })
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row_anchors(&self) -> &[usize] {
        &self.rows
    }

    pub fn col_anchors(&self) -> &[usize] {
        &self.cols
    }

    /// `(row, col)` anchors in row-major order.
    pub fn positions(&self) -> Vec<(usize, usize)> {
        self.rows
            .iter()
            .flat_map(|&r| self.cols.iter().map(move |&c| (r, c)))
            .collect()
    }

    pub fn patch_len(&self) -> usize {
        self.patch_size * self.patch_size
    }

    /// The same layout on an image `scale` times larger: anchors, patch size
    /// and stride all multiplied by `scale`.
    pub fn scaled(&self, scale: usize) -> PatchGrid {
        PatchGrid {
            image_width: self.image_width * scale,
            image_height: self.image_height * scale,
            patch_size: self.patch_size * scale,
            stride: self.stride * scale,
            rows: self.rows.iter().map(|v| v * scale).collect(),
            cols: self.cols.iter().map(|v| v * scale).collect(),
        }
    }

    /// Number of patches covering each pixel, row-major.
    pub fn coverage(&self) -> Vec<u32> {
        let w = self.image_width;
        let mut cov = vec![0u32; w * self.image_height];
        for (r, c) in self.positions() {
            for y in r..r + self.patch_size {
                for v in &mut cov[y * w + c..y * w + c + self.patch_size] {
                    *v += 1;
                }
            }
        }
        cov
    }
}

/// Row-major patch samples plus the mean removed from them (0 if none).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchVector {
    pub values: Vec<f64>,
    pub mean: f64,
    pub anchor: (usize, usize),
}

fn check_dims(grid: &PatchGrid, w: usize, h: usize) -> Result<()> {
    if (grid.image_width, grid.image_height) != (w, h) {
        return Err(Error::invalid(format!(
            "grid planned for {}x{}, image is {w}x{h}",
            grid.image_width, grid.image_height
        )));
    }
    Ok(())
}

pub fn extract(image: &Image, grid: &PatchGrid) -> Result<Vec<PatchVector>> {
    extract_plane(image.as_plane(), grid)
}

pub fn extract_plane(plane: &Plane, grid: &PatchGrid) -> Result<Vec<PatchVector>> {
    let (w, h) = plane.dims();
    check_dims(grid, w, h)?;
    let p = grid.patch_size;
    let data = plane.data();
    Ok(grid
        .positions()
        .into_iter()
        .map(|(r, c)| {
            let mut values = Vec::with_capacity(p * p);
            for y in r..r + p {
                values.extend_from_slice(&data[y * w + c..y * w + c + p]);
            }
            PatchVector { values, mean: 0.0, anchor: (r, c) }
        })
        .collect())
}

/// Subtracts the arithmetic mean; the returned patch records it.
pub fn remove_mean(patch: &PatchVector) -> (PatchVector, f64) {
    let mean = if patch.values.is_empty() {
        0.0
    } else {
        patch.values.iter().sum::<f64>() / patch.values.len() as f64
    };
    let values = patch.values.iter().map(|v| v - mean).collect();
    (PatchVector { values, mean, anchor: patch.anchor }, mean)
}

pub fn add_mean(patch: &PatchVector, mean: f64) -> PatchVector {
    PatchVector {
        values: patch.values.iter().map(|v| v + mean).collect(),
        mean: 0.0,
        anchor: patch.anchor,
    }
}

/// Averages overlapping patches, clamped to `[0, 1]`.
pub fn merge(patches: &[PatchVector], grid: &PatchGrid) -> Result<Image> {
    Image::from_plane(merge_plane(patches, grid)?)
}

/// Unclamped overlap average. Each pixel accumulates deviations from the
/// first patch that covers it, so agreeing patches reproduce their common
/// value bit-exactly; accumulation runs in grid order.
pub fn merge_plane(patches: &[PatchVector], grid: &PatchGrid) -> Result<Plane> {
    if patches.len() != grid.len() {
        return Err(Error::invalid(format!(
            "{} patches for a grid of {}",
            patches.len(),
            grid.len()
        )));
    }
    let (w, h, p) = (grid.image_width, grid.image_height, grid.patch_size);
    let mut base = vec![0.0; w * h];
    let mut dev = vec![0.0; w * h];
    let mut count = vec![0u32; w * h];
    for (patch, (r, c)) in patches.iter().zip(grid.positions()) {
        if patch.anchor != (r, c) || patch.values.len() != p * p {
            return Err(Error::invalid(format!(
                "patch at {:?} with {} values does not match grid anchor {:?}",
                patch.anchor,
                patch.values.len(),
                (r, c)
            )));
        }
        for dy in 0..p {
            for dx in 0..p {
                let i = (r + dy) * w + c + dx;
                let v = patch.values[dy * p + dx];
                if count[i] == 0 {
                    base[i] = v;
                } else {
                    dev[i] += v - base[i];
                }
                count[i] += 1;
            }
        }
    }
    let mut out = Vec::with_capacity(w * h);
    for i in 0..w * h {
        if count[i] == 0 {
            return Err(Error::Invariant(format!("pixel {i} not covered by the grid")));
        }
        out.push(base[i] + dev[i] / count[i] as f64);
    }
    Plane::new(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let data = (0..w * h)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        Image::new(w, h, data).unwrap()
    }

    #[test]
    fn grid_examples() {
        let g = plan_grid(9, 9, 5, 1).unwrap();
        assert_eq!(g.row_anchors(), &[0, 4]);
        assert_eq!(g.len(), 4);
        let g = plan_grid(10, 10, 5, 1).unwrap();
        assert_eq!(g.col_anchors(), &[0, 4, 5]);
        assert_eq!(g.len(), 9);
        let g = plan_grid(6, 6, 6, 2).unwrap();
        assert_eq!(g.positions(), vec![(0, 0)]);
        assert!(plan_grid(4, 9, 5, 1).is_err());
        assert!(plan_grid(9, 9, 5, 5).is_err());
        let g = plan_grid(10, 7, 5, 1).unwrap();
        assert_eq!(g.positions()[..3], [(0, 0), (0, 4), (0, 5)]);
    }

    #[test]
    fn scaled_grid_matches_patch_geometry() {
        let g = plan_grid(10, 9, 5, 1).unwrap().scaled(2);
        assert_eq!((g.image_width, g.image_height, g.patch_size, g.stride), (20, 18, 10, 8));
        assert_eq!(g.col_anchors(), &[0, 8, 10]);
        assert_eq!(g.row_anchors(), &[0, 8]);
    }

    #[test]
    fn extract_small_cases() {
        let img = Image::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let g = plan_grid(2, 2, 2, 0).unwrap();
        let p = extract(&img, &g).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].values, img.pixels());
        let c = Image::filled(9, 7, 0.25);
        let g = plan_grid(9, 7, 3, 1).unwrap();
        assert!(extract(&c, &g).unwrap().iter().all(|p| p.values.iter().all(|&v| v == 0.25)));
        assert!(extract(&c, &plan_grid(7, 9, 3, 1).unwrap()).is_err());
    }

    #[test]
    fn mean_handling() {
        let p = PatchVector { values: vec![0.3; 4], mean: 0.0, anchor: (0, 0) };
        let (z, m) = remove_mean(&p);
        assert_eq!(m, 0.3);
        assert!(z.values.iter().all(|&v| v.abs() < 1e-16));
        let zero = PatchVector { values: vec![0.0; 4], mean: 0.0, anchor: (0, 0) };
        assert_eq!(remove_mean(&zero).1, 0.0);
    }

    #[test]
    fn merge_two_overlapping_patches() {
        let g = plan_grid(3, 2, 2, 1).unwrap();
        assert_eq!(g.len(), 2);
        let a = PatchVector { values: vec![0.2; 4], mean: 0.0, anchor: (0, 0) };
        let b = PatchVector { values: vec![0.6; 4], mean: 0.0, anchor: (0, 1) };
        let m = merge(&[a.clone(), b], &g).unwrap();
        assert_eq!(m.get(0, 0), 0.2);
        assert!((m.get(1, 1) - 0.4).abs() < 1e-15);
        assert_eq!(m.get(2, 0), 0.6);
        assert!(merge(&[a], &g).is_err());
    }

    #[test]
    fn merge_clamps() {
        let g = plan_grid(2, 2, 2, 0).unwrap();
        let p = PatchVector { values: vec![-1.0, 0.5, 2.0, 1.0], mean: 0.0, anchor: (0, 0) };
        assert_eq!(merge(&[p], &g).unwrap().pixels(), &[0.0, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn disjoint_grid_tiles() {
        let img = noise(10, 10, 3);
        let g = plan_grid(10, 10, 5, 0).unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.coverage().iter().all(|&c| c == 1));
        assert_eq!(merge(&extract(&img, &g).unwrap(), &g).unwrap(), img);
    }

    proptest! {
        #[test]
        fn round_trip_and_coverage(w in 8usize..40, h in 8usize..40, seed in any::<u64>(),
                                   (p, overlap) in prop_oneof![Just((5usize, 1usize)), Just((5, 0)), Just((7, 3)), Just((5, 3)), Just((8, 7))]) {
            let img = noise(w, h, seed);
            let g = plan_grid(w, h, p, overlap).unwrap();
            let patches = extract(&img, &g).unwrap();
            prop_assert_eq!(patches.len(), g.len());
            prop_assert_eq!(merge(&patches, &g).unwrap(), img);
            // A flush anchor can add one more patch per axis.
            let aligned = (w - p) % g.stride == 0 && (h - p) % g.stride == 0;
            let per_axis = p.div_ceil(g.stride) as u32 + u32::from(!aligned);
            let bound = per_axis.pow(2);
            let cov = g.coverage();
            prop_assert!(cov.iter().all(|&c| c >= 1 && c <= bound));
        }

        #[test]
        fn mean_round_trip(values in proptest::collection::vec(0.0f64..1.0, 1..100)) {
            let p = PatchVector { values: values.clone(), mean: 0.0, anchor: (0, 0) };
            let (z, m) = remove_mean(&p);
            let back = add_mean(&z, m);
            for (a, b) in back.values.iter().zip(&values) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }
    }
}
