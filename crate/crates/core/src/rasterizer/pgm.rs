//! 8-bit binary PGM (P5) masks: 255 = inside, 0 = outside.
//!
//! Soft values are quantized on save as `round(v * 255)` (ties away from
//! zero). On load, an image containing only 0 and 255 becomes a binary mask;
//! anything else becomes a soft mask with `v = byte / 255`.

use std::path::Path;

use super::mask::{MaskKind, SilhouetteMask};
use crate::error::{Error, Result};

pub fn encode_pgm(mask: &SilhouetteMask) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", mask.width(), mask.height());
    let mut out = Vec::with_capacity(header.len() + mask.values().len());
    out.extend_from_slice(header.as_bytes());
    out.extend(mask.values().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn decode_pgm(bytes: &[u8], context: &str) -> Result<SilhouetteMask> {
    let mut pos = 0usize;
    let mut fields = [0u32; 3];
    if bytes.get(..2) != Some(b"P5") {
        return Err(Error::parse(context, "missing P5 magic number"));
    }
    pos += 2;
    for (slot, name) in fields.iter_mut().zip(["width", "height", "maxval"]) {
        // Skip whitespace and '#' comments between header tokens.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let token = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *slot = token.parse().map_err(|_| Error::parse(context, format!("bad {name} field in header")))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::parse(context, format!("only 8-bit masks (maxval 255) are supported, got {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::parse(context, "zero-sized image"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::parse(context, "header not terminated by whitespace"));
    }
    pos += 1;
    let n = width as usize * height as usize;
    let raster = &bytes[pos..];
    if raster.len() < n {
        return Err(Error::parse(context, format!("raster truncated: {} of {n} bytes", raster.len())));
    }
    let raster = &raster[..n];
    let binary = raster.iter().all(|b| *b == 0 || *b == 255);
    let values = raster.iter().map(|b| *b as f64 / 255.0).collect();
    let kind = if binary { MaskKind::Binary } else { MaskKind::Soft { sigma_px: 0.0 } };
    SilhouetteMask::from_values(width, height, values, kind)
}

pub fn write_pgm(mask: &SilhouetteMask, path: &Path) -> Result<()> {
    std::fs::write(path, encode_pgm(mask)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<SilhouetteMask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let m = SilhouetteMask::from_fn(7, 5, |x, y| (x + y) % 3 == 0);
        let back = decode_pgm(&encode_pgm(&m), "m.pgm").unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn soft_values_round_to_nearest() {
        let m = SilhouetteMask::from_values(3, 1, vec![0.5, 0.2, 1.0 / 255.0 * 0.49], MaskKind::Soft { sigma_px: 2.0 }).unwrap();
        let bytes = encode_pgm(&m);
        assert_eq!(&bytes[bytes.len() - 3..], &[128, 51, 0]);
        let back = decode_pgm(&bytes, "s.pgm").unwrap();
        assert!(matches!(back.kind(), MaskKind::Soft { .. }));
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([0, 255]);
        let m = decode_pgm(&bytes, "c.pgm").unwrap();
        assert_eq!(m.values(), &[0.0, 1.0]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0", "a").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00\x00", "b").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\x00\x00", "c").is_err());
    }
}
