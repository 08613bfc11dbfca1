//! Binary PGM (P5, maxval 255) and 8-bit PNG.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use super::{luminance, Image};
use crate::{Error, Result};

/// Parses a binary P5 file with maxval 255; byte `b` maps to `b / 255`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let magic = cur.token().ok_or_else(|| Error::format("magic", "empty file"))?;
    match magic {
        b"P5" => {}
        b"P1" | b"P2" | b"P3" | b"P4" | b"P6" => {
            return Err(Error::UnsupportedFormat(format!(
                "{} netpbm files are not supported; expected binary P5",
                String::from_utf8_lossy(magic)
            )))
        }
        _ => return Err(Error::format("magic", "not a PGM file")),
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format("dimensions", format!("{width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::format("maxval", format!("expected 255, got {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::format("header", "missing separator before raster")),
    }
    let n = width * height;
    let raster = &bytes[cur.pos..];
    if raster.len() < n {
        return Err(Error::format(
            "payload",
            format!("truncated: expected {n} bytes, found {}", raster.len()),
        ));
    }
    let pixels = raster[..n].iter().map(|&b| b as f64 / 255.0).collect();
    Image::new(width, height, pixels)
}

/// Encodes as `P5\n{w} {h}\n255\n` followed by `round(v·255)` bytes.
pub fn encode_pgm(image: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.pixels().iter().map(|&v| to_byte(v)));
    out
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, field: &'static str) -> Result<usize> {
        let tok = self
            .token()
            .ok_or_else(|| Error::format(field, "truncated header"))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(field, format!("not a number: {:?}", String::from_utf8_lossy(tok))))
    }
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn write_pgm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}

/// Reads an 8- or 16-bit PNG; colour images are reduced to BT.601 luma.
pub fn read_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(file);
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format("png", e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format("png", e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(Error::UnsupportedFormat("indexed PNG after expansion".into()))
        }
    };
    let pixels = data
        .chunks_exact(channels)
        .map(|px| match channels {
            1 | 2 => px[0] as f64 / 255.0,
            _ => luminance(px[0], px[1], px[2]).clamp(0.0, 1.0),
        })
        .collect();
    Image::new(w, h, pixels)
}

/// Writes an 8-bit grayscale PNG.
pub fn write_png(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), image.width() as u32, image.height() as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = image.pixels().iter().map(|&v| to_byte(v)).collect();
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::format("png", e.to_string()))?;
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::format("png", e.to_string()))?;
    writer.finish().map_err(|e| Error::format("png", e.to_string()))
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Dispatches on the extension: `.png` is PNG, anything else PGM.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    if is_png(path) {
        read_png(path)
    } else {
        read_pgm(path)
    }
}

pub fn write_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_png(path) {
        write_png(image, path)
    } else {
        write_pgm(image, path)
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_two_by_two() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0, 128, 255, 64]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.pixels(), &[0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0]);
        assert_eq!(encode_pgm(&img), bytes);
    }

    #[test]
    fn header_comments_and_errors() {
        let mut bytes = b"P5 # comment\n3 # w\n1\n255\n".to_vec();
        bytes.extend([1, 2, 3]);
        assert_eq!(decode_pgm(&bytes).unwrap().dims(), (3, 1));

        assert!(matches!(decode_pgm(b"P2\n1 1\n255\n0\n"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(decode_pgm(b"XX\n1 1\n255\n0"), Err(Error::Format { field: "magic", .. })));
        assert!(matches!(decode_pgm(b"P5\n1 1\n65535\n\0\0"), Err(Error::Format { field: "maxval", .. })));
        assert!(matches!(decode_pgm(b"P5\n2 2\n255\n\0\0"), Err(Error::Format { field: "payload", .. })));
        assert!(matches!(decode_pgm(b"P5\n2"), Err(Error::Format { .. })));
        assert!(matches!(decode_pgm(b""), Err(Error::Format { .. })));
    }

    #[test]
    fn every_byte_value_round_trips() {
        let mut bytes = b"P5\n16 16\n255\n".to_vec();
        bytes.extend(0..=255u8);
        assert_eq!(encode_pgm(&decode_pgm(&bytes).unwrap()), bytes);
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::new(3, 2, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        let pgm = dir.path().join("a.pgm");
        write_image(&img, &pgm).unwrap();
        let back = read_image(&pgm).unwrap();
        let png = dir.path().join("a.png");
        write_image(&back, &png).unwrap();
        assert_eq!(read_image(&png).unwrap(), back);
        assert_eq!(encode_pgm(&read_image(&pgm).unwrap()), fs::read(&pgm).unwrap());
        match read_image(dir.path().join("missing.pgm")) {
            Err(Error::Io { path, .. }) => assert!(path.ends_with("missing.pgm")),
            other => panic!("{other:?}"),
        }
    }
}
