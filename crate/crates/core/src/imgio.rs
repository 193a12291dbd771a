//! Image container and file IO.
//!
//! Three on-disk formats:
//! - Float dump (`.f32`): magic `FRGB`, u32 width, u32 height, then
//!   row-major RGB as little-endian f32. Lossless for rendered output and
//!   the canonical format for ground-truth data and environment maps.
//! - PNG (`.png`, feature `png`): 8-bit sRGB; values are linearized on
//!   load and sRGB-encoded on save.
//! - RGBE (`.hdr`): Radiance-style header `#?RADIANCE`,
//!   `FORMAT=32-bit_rle_rgbe`, resolution line `-Y <h> +X <w>`, followed by
//!   one byte-quadruple (r, g, b, shared exponent) per pixel, row-major and
//!   uncompressed; new-style RLE scanlines are accepted on read.

use std::io::{Read, Write};
use std::path::Path;

use crate::{Error, Result, Vec3};

/// Row-major RGB image, linear values.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Vec3>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![Vec3::zeros(); width * height],
        }
    }

    pub fn constant(width: usize, height: usize, v: Vec3) -> Self {
        Self {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> Vec3 {
        self.data[y * self.width + x]
    }

    pub fn at_mut(&mut self, x: usize, y: usize) -> &mut Vec3 {
        &mut self.data[y * self.width + x]
    }

    /// Rec. 709 luminance per pixel.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|p| 0.2126 * p.x + 0.7152 * p.y + 0.0722 * p.z)
            .collect()
    }
}

/// Linear value to sRGB-encoded value, both nominally in [0, 1].
pub fn srgb_encode(u: f64) -> f64 {
    if u <= 0.003_130_8 {
        12.92 * u
    } else {
        1.055 * u.max(0.0).powf(1.0 / 2.4) - 0.055
    }
}

/// Derivative of [`srgb_encode`] (defined one-sidedly at the junction).
pub fn srgb_encode_deriv(u: f64) -> f64 {
    if u <= 0.003_130_8 {
        12.92
    } else {
        (1.055 / 2.4) * u.max(1e-12).powf(1.0 / 2.4 - 1.0)
    }
}

/// sRGB-encoded value to linear.
pub fn srgb_decode(s: f64) -> f64 {
    if s <= 0.040_45 {
        s / 12.92
    } else {
        ((s + 0.055) / 1.055).powf(2.4)
    }
}

const F32_MAGIC: &[u8; 4] = b"FRGB";

/// Writes the float dump format (values cast to f32).
pub fn write_f32_dump(path: &Path, img: &Image) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(F32_MAGIC)?;
    f.write_all(&(img.width as u32).to_le_bytes())?;
    f.write_all(&(img.height as u32).to_le_bytes())?;
    for p in &img.data {
        for c in [p.x, p.y, p.z] {
            f.write_all(&(c as f32).to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Reads the float dump format.
pub fn read_f32_dump(path: &Path) -> Result<Image> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != F32_MAGIC {
        return Err(Error::Format(format!("{}: bad float dump magic", path.display())));
    }
    let mut b4 = [0u8; 4];
    f.read_exact(&mut b4)?;
    let width = u32::from_le_bytes(b4) as usize;
    f.read_exact(&mut b4)?;
    let height = u32::from_le_bytes(b4) as usize;
    if width == 0 || height == 0 || width.saturating_mul(height) > (1 << 26) {
        return Err(Error::Format(format!("{}: unreasonable dimensions", path.display())));
    }
    let mut data = Vec::with_capacity(width * height);
    let mut buf = vec![0u8; width * 12];
    for _ in 0..height {
        f.read_exact(&mut buf)?;
        for px in buf.chunks_exact(12) {
            let r = f32::from_le_bytes(px[0..4].try_into().unwrap()) as f64;
            let g = f32::from_le_bytes(px[4..8].try_into().unwrap()) as f64;
            let b = f32::from_le_bytes(px[8..12].try_into().unwrap()) as f64;
            data.push(Vec3::new(r, g, b));
        }
    }
    Ok(Image { width, height, data })
}

#[cfg(feature = "png")]
/// Writes an 8-bit sRGB PNG (linear input is sRGB-encoded and quantized).
pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Format(e.to_string()))?;
    let mut bytes = Vec::with_capacity(img.data.len() * 3);
    for p in &img.data {
        for c in [p.x, p.y, p.z] {
            bytes.push((srgb_encode(c.clamp(0.0, 1.0)) * 255.0).round() as u8);
        }
    }
    writer.write_image_data(&bytes).map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

#[cfg(feature = "png")]
/// Reads a PNG and linearizes it from sRGB.
pub fn read_png(path: &Path) -> Result<Image> {
    let file = std::fs::File::open(path)?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| Error::Format(e.to_string()))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Format(e.to_string()))?;
    let width = info.width as usize;
    let height = info.height as usize;
    let channels = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        other => return Err(Error::Format(format!("unsupported PNG color type {other:?}"))),
    };
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format("only 8-bit PNG is supported".into()));
    }
    let mut data = Vec::with_capacity(width * height);
    for px in buf[..width * height * channels].chunks_exact(channels) {
        let (r, g, b) = match channels {
            1 | 2 => (px[0], px[0], px[0]),
            _ => (px[0], px[1], px[2]),
        };
        data.push(Vec3::new(
            srgb_decode(r as f64 / 255.0),
            srgb_decode(g as f64 / 255.0),
            srgb_decode(b as f64 / 255.0),
        ));
    }
    Ok(Image { width, height, data })
}

fn rgbe_encode(p: &Vec3) -> [u8; 4] {
    let m = p.x.max(p.y).max(p.z);
    if m < 1e-32 {
        return [0, 0, 0, 0];
    }
    let (frac, exp) = {
        let e = m.log2().floor() as i32 + 1;
        (2f64.powi(-e) * 256.0, e)
    };
    [
        (p.x * frac).min(255.0) as u8,
        (p.y * frac).min(255.0) as u8,
        (p.z * frac).min(255.0) as u8,
        (exp + 128) as u8,
    ]
}

fn rgbe_decode(b: [u8; 4]) -> Vec3 {
    if b[3] == 0 {
        return Vec3::zeros();
    }
    let f = 2f64.powi(b[3] as i32 - 128 - 8);
    Vec3::new(b[0] as f64 * f, b[1] as f64 * f, b[2] as f64 * f)
}

/// Writes an uncompressed RGBE file.
pub fn write_rgbe(path: &Path, img: &Image) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {} +X {}\n", img.height, img.width)?;
    for p in &img.data {
        f.write_all(&rgbe_encode(p))?;
    }
    f.flush()?;
    Ok(())
}

/// Reads an RGBE file (uncompressed or new-style RLE scanlines).
pub fn read_rgbe(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    let mut pos = 0usize;
    let mut line = || -> Result<String> {
        let start = pos;
        while pos < bytes.len() && bytes[pos] != b'\n' {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(Error::Format("truncated RGBE header".into()));
        }
        let s = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        pos += 1;
        Ok(s)
    };
    let first = line()?;
    if !first.starts_with("#?") {
        return Err(Error::Format("missing RGBE signature".into()));
    }
    // Header lines until the blank separator.
    loop {
        let l = line()?;
        if l.is_empty() {
            break;
        }
    }
    let res = line()?;
    let parts: Vec<&str> = res.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "-Y" || parts[2] != "+X" {
        return Err(Error::Format(format!("unsupported RGBE resolution line: {res}")));
    }
    let height: usize = parts[1].parse().map_err(|_| Error::Format("bad height".into()))?;
    let width: usize = parts[3].parse().map_err(|_| Error::Format("bad width".into()))?;

    let mut data = Vec::with_capacity(width * height);
    let body = &bytes[pos..];
    let mut off = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if off + n > body.len() {
            return Err(Error::Format("truncated RGBE data".into()));
        }
        let s = &body[off..off + n];
        off += n;
        Ok(s)
    };
    for _ in 0..height {
        let head = take(4)?;
        let head: [u8; 4] = head.try_into().unwrap();
        let is_rle = head[0] == 2 && head[1] == 2 && ((head[2] as usize) << 8 | head[3] as usize) == width && width >= 8;
        if is_rle {
            // Four separated component planes, run-length encoded.
            let mut planes = vec![0u8; 4 * width];
            for c in 0..4 {
                let mut x = 0usize;
                while x < width {
                    let code = take(1)?[0] as usize;
                    if code > 128 {
                        let run = code - 128;
                        let v = take(1)?[0];
                        for _ in 0..run {
                            planes[c * width + x] = v;
                            x += 1;
                        }
                    } else {
                        let lit = take(code)?.to_vec();
                        for v in lit {
                            planes[c * width + x] = v;
                            x += 1;
                        }
                    }
                }
            }
            for x in 0..width {
                data.push(rgbe_decode([
                    planes[x],
                    planes[width + x],
                    planes[2 * width + x],
                    planes[3 * width + x],
                ]));
            }
        } else {
            data.push(rgbe_decode(head));
            for _ in 1..width {
                let q: [u8; 4] = take(4)?.try_into().unwrap();
                data.push(rgbe_decode(q));
            }
        }
    }
    Ok(Image { width, height, data })
}

/// Loads an image by extension: `.f32` float dump, `.hdr` RGBE, `.png` PNG.
pub fn load_image(path: &Path) -> Result<Image> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("f32") => read_f32_dump(path),
        Some("hdr") => read_rgbe(path),
        #[cfg(feature = "png")]
        Some("png") => read_png(path),
        other => Err(Error::Format(format!(
            "unsupported image extension {other:?} for {}",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir() -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("surfel-imgio-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    fn gradient(w: usize, h: usize) -> Image {
        let mut img = Image::new(w, h);
        for y in 0..h {
            for x in 0..w {
                *img.at_mut(x, y) = Vec3::new(
                    x as f64 / w as f64,
                    y as f64 / h as f64,
                    ((x + y) % 7) as f64 / 7.0,
                );
            }
        }
        img
    }

    #[test]
    fn f32_dump_roundtrip_bit_exact() {
        let path = tmpdir().join("img.f32");
        let img = gradient(13, 7);
        write_f32_dump(&path, &img).unwrap();
        let back = read_f32_dump(&path).unwrap();
        write_f32_dump(&path, &back).unwrap();
        let back2 = read_f32_dump(&path).unwrap();
        assert_eq!(back, back2);
        // First write already quantizes to f32, so re-reading matches it.
        for (a, b) in img.data.iter().zip(&back.data) {
            assert_eq!(a.x as f32, b.x as f32);
        }
    }

    #[test]
    fn srgb_roundtrip() {
        for v in [0.0, 0.001, 0.0031308, 0.01, 0.2, 0.5, 1.0] {
            let e = srgb_encode(v);
            assert!((srgb_decode(e) - v).abs() < 1e-9, "v={v}");
        }
    }

    #[test]
    fn rgbe_roundtrip_within_quantization() {
        let path = tmpdir().join("img.hdr");
        let img = gradient(9, 5);
        write_rgbe(&path, &img).unwrap();
        let back = read_rgbe(&path).unwrap();
        assert_eq!(back.width, 9);
        assert_eq!(back.height, 5);
        for (a, b) in img.data.iter().zip(&back.data) {
            // RGBE has a shared 8-bit mantissa: ~1/256 relative error.
            let m = a.x.max(a.y).max(a.z);
            assert!((a - b).norm() <= m / 64.0 + 1e-9);
        }
    }

    #[cfg(feature = "png")]
    #[test]
    fn png_roundtrip_within_8bit() {
        let path = tmpdir().join("img.png");
        let img = gradient(8, 8);
        write_png(&path, &img).unwrap();
        let back = read_png(&path).unwrap();
        for (a, b) in img.data.iter().zip(&back.data) {
            for c in 0..3 {
                assert!((srgb_encode(a[c]) - srgb_encode(b[c])).abs() < 1.0 / 255.0 + 1e-6);
            }
        }
    }
}
