//! PSNR, SSIM and comparison tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::imaging::{blur_plane, gaussian_kernel, Image, Plane};
use crate::{Error, Result};

fn check_same_dims(a: &Image, b: &Image) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!(
            "image dimensions differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_same_dims(a, b)?;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.pixels().len() as f64)
}

/// `10·log₁₀(peak²/MSE)`; identical images give `+∞`.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::invalid(format!("peak must be positive, got {peak}")));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window_size: usize,
    pub window_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window_size: 11,
            window_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size % 2 == 0 {
            return Err(Error::invalid(format!("window_size must be odd, got {}", self.window_size)));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::invalid("k1 and k2 must be positive"));
        }
        if !(self.window_sigma > 0.0 && self.dynamic_range > 0.0) {
            return Err(Error::invalid("window_sigma and dynamic_range must be positive"));
        }
        Ok(())
    }
}

/// Per-pixel SSIM with Gaussian windows clamped at the border, and its mean
/// over all pixels. Map values are clamped to `[−1, 1]`.
pub fn ssim_map(a: &Image, b: &Image, config: &SsimConfig) -> Result<(f64, Plane)> {
    check_same_dims(a, b)?;
    config.validate()?;
    let (w, h) = a.dims();
    if w < config.window_size || h < config.window_size {
        return Err(Error::invalid(format!(
            "image {w}x{h} smaller than the {0}x{0} window",
            config.window_size
        )));
    }
    let kernel = gaussian_kernel(config.window_sigma, config.window_size / 2);
    let pa = a.as_plane();
    let pb = b.as_plane();
    let product = |f: &dyn Fn(f64, f64) -> f64| {
        let data = pa.data().iter().zip(pb.data()).map(|(&x, &y)| f(x, y)).collect();
        Plane::new(w, h, data).expect("same dims")
    };
    let mu_a = blur_plane(pa, &kernel);
    let mu_b = blur_plane(pb, &kernel);
    let e_aa = blur_plane(&product(&|x, _| x * x), &kernel);
    let e_bb = blur_plane(&product(&|_, y| y * y), &kernel);
    let e_ab = blur_plane(&product(&|x, y| x * y), &kernel);

    let c1 = (config.k1 * config.dynamic_range).powi(2);
    let c2 = (config.k2 * config.dynamic_range).powi(2);
    let mut map = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let (ma, mb) = (mu_a.data()[i], mu_b.data()[i]);
        let va = e_aa.data()[i] - ma * ma;
        let vb = e_bb.data()[i] - mb * mb;
        let cov = e_ab.data()[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        map.push((num / den).clamp(-1.0, 1.0));
    }
    let mean = map.iter().sum::<f64>() / map.len() as f64;
    Ok((mean, Plane::new(w, h, map)?))
}

pub fn ssim(a: &Image, b: &Image, config: &SsimConfig) -> Result<f64> {
    Ok(ssim_map(a, b, config)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub average: ComparisonRow,
}

pub const AVERAGE_ROW: &str = "Average";

impl ComparisonTable {
    pub fn from_rows(rows: Vec<ComparisonRow>) -> Self {
        let n = rows.len().max(1) as f64;
        let average = ComparisonRow {
            name: AVERAGE_ROW.into(),
            psnr: rows.iter().map(|r| r.psnr).sum::<f64>() / n,
            ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
        };
        Self { rows, average }
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| name | PSNR(dB) | SSIM |\n|---|---:|---:|\n");
        for r in self.rows.iter().chain(std::iter::once(&self.average)) {
            let _ = writeln!(s, "| {} | {} | {:.4} |", r.name, fmt_psnr(r.psnr), r.ssim);
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,psnr_db,ssim\n");
        for r in self.rows.iter().chain(std::iter::once(&self.average)) {
            let _ = writeln!(s, "{},{},{}", csv_field(&r.name), sig6(r.psnr), sig6(r.ssim));
        }
        s
    }

    /// Parses the output of [`ComparisonTable::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("name,psnr_db,ssim") {
            return Err(Error::format("csv header", "expected name,psnr_db,ssim"));
        }
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let (name, rest) = split_name(line)?;
            let mut it = rest.split(',');
            let parse = |v: Option<&str>, field| {
                v.and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| Error::format(field, format!("bad value in line {line:?}")))
            };
            let psnr = parse(it.next(), "psnr_db")?;
            let ssim = parse(it.next(), "ssim")?;
            rows.push(ComparisonRow { name, psnr, ssim });
        }
        let average = rows
            .pop()
            .filter(|r| r.name == AVERAGE_ROW)
            .ok_or_else(|| Error::format("csv", "missing Average row"))?;
        Ok(Self { rows, average })
    }
}

fn split_name(line: &str) -> Result<(String, &str)> {
    if let Some(rest) = line.strip_prefix('"') {
        let mut name = String::new();
        let mut chars = rest.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            if c == '"' {
                if let Some(&(_, '"')) = chars.peek() {
                    name.push('"');
                    chars.next();
                } else {
                    let tail = &rest[i + 1..];
                    let tail = tail.strip_prefix(',').ok_or_else(|| Error::format("csv", "bad quoting"))?;
                    return Ok((name, tail));
                }
            } else {
                name.push(c);
            }
        }
        Err(Error::format("csv", "unterminated quote"))
    } else {
        let (n, r) = line
            .split_once(',')
            .ok_or_else(|| Error::format("csv", format!("too few fields in {line:?}")))?;
        Ok((n.to_string(), r))
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub(crate) fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.2}")
    }
}

/// Six significant digits in plain decimal notation; `inf` for infinities.
pub(crate) fn sig6(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// One row per candidate plus the average row.
pub fn compare(reference: &Image, candidates: &[(String, Image)], peak: f64, config: &SsimConfig) -> Result<ComparisonTable> {
    let rows = candidates
        .iter()
        .map(|(name, img)| {
            Ok(ComparisonRow {
                name: name.clone(),
                psnr: psnr(reference, img, peak)?,
                ssim: ssim(reference, img, config)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonTable::from_rows(rows))
}
