//! Raster file formats: PFM (float, source of truth), NPY float32, PGM masks.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Image, Mask};

/// Single-channel little-endian PFM. Rows are stored bottom-up as the format requires.
pub fn encode_pfm(img: &Image) -> Vec<u8> {
    let (w, h) = img.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(img.get(x, y) as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Image> {
    let bad = |m: &str| Error::parse("PFM", m.to_string());
    let mut fields = Vec::new();
    let mut pos = 0;
    // header is three whitespace-separated tokens groups: magic, "w h", scale
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    pos += 1; // single whitespace byte before the raster
    if fields[0] != "Pf" {
        return Err(bad("only single-channel 'Pf' files are supported"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| bad("bad scale"))?;
    let little = scale < 0.0;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() < w * h * 4 {
        return Err(bad("truncated raster"));
    }
    let mut img = Image::zeros(w, h);
    for (i, chunk) in raster.chunks_exact(4).take(w * h).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        img.set(i % w, h - 1 - i / w, v as f64);
    }
    Ok(img)
}

pub fn write_pfm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pfm(img))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    decode_pfm(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// NPY v1.0, `<f4`, C order, shape `(height, width)`, rows top-down.
pub fn encode_npy(img: &Image) -> Vec<u8> {
    let (w, h) = img.dims();
    let mut header = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': ({h}, {w}), }}");
    // magic(6) + version(2) + len(2) + header + '\n' must be a multiple of 64
    let pad = (64 - (10 + header.len() + 1) % 64) % 64;
    header.push_str(&" ".repeat(pad));
    header.push('\n');
    let mut out = Vec::with_capacity(10 + header.len() + w * h * 4);
    out.extend_from_slice(b"\x93NUMPY\x01\x00");
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in img.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn write_npy(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    write_bytes(path.as_ref(), &encode_npy(img))
}

/// Binary PGM, 255 where the mask is set.
pub fn encode_pgm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.data().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

pub fn write_pgm(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pgm(mask))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_keeps_orientation() {
        let img = Image::from_fn(5, 3, |x, y| (x + 10 * y) as f64 + 0.25);
        let back = decode_pfm(&encode_pfm(&img)).unwrap();
        assert_eq!(back, img);
        // first stored row is the bottom one
        let bytes = encode_pfm(&img);
        let header_len = b"Pf\n5 3\n-1.0\n".len();
        let first = f32::from_le_bytes(bytes[header_len..header_len + 4].try_into().unwrap());
        assert_eq!(first, 20.25);
    }

    #[test]
    fn pfm_rejects_color_and_truncation() {
        assert!(decode_pfm(b"PF\n1 1\n-1.0\n").is_err());
        assert!(decode_pfm(b"Pf\n2 2\n-1.0\n\0\0\0\0").is_err());
    }

    #[test]
    fn npy_header_aligned() {
        let bytes = encode_npy(&Image::zeros(7, 3));
        let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + hlen) % 64, 0);
        assert_eq!(bytes.len(), 10 + hlen + 7 * 3 * 4);
        assert!(std::str::from_utf8(&bytes[10..10 + hlen]).unwrap().contains("(3, 7)"));
    }

    #[test]
    fn pgm_layout() {
        let mut m = Mask::new(2, 2, false);
        m.set(1, 0, true);
        let b = encode_pgm(&m);
        assert_eq!(&b[b.len() - 4..], &[0, 255, 0, 0]);
    }
}
