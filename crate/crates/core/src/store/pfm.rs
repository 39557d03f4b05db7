//! Grayscale Portable FloatMap (`Pf`) reading and writing.
//!
//! Files are written little-endian with scale `-1.0`. PFM stores rows
//! bottom-to-top; [`Raster`] is top-to-bottom, so rows are flipped on both
//! load and store.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Raster;

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)
}

pub fn write_pfm(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pfm(raster)).map_err(|e| Error::io(path, e))
}

pub fn encode_pfm(raster: &Raster) -> Vec<u8> {
    let (w, h) = raster.dims();
    let header = format!("Pf\n{w} {h}\n-1.0\n");
    let mut out = Vec::with_capacity(header.len() + 4 * w * h);
    out.extend_from_slice(header.as_bytes());
    for y in (0..h).rev() {
        for v in raster.row(y) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::PfmFormat {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn skip_whitespace(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_whitespace();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            self.pos = start;
            return self.fail("unexpected end of header");
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).or_else(|_| {
            self.pos = start;
            self.fail("header token is not ASCII")
        })
    }
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Raster> {
    let mut cur = Cursor { bytes, pos: 0 };

    let magic = cur.token()?;
    match magic {
        "Pf" => {}
        "PF" => {
            cur.pos = 0;
            return cur.fail("color PFM (PF) is not supported; expected grayscale Pf");
        }
        other => {
            cur.pos = 0;
            return cur.fail(format!("bad magic {other:?}"));
        }
    }

    let mut dim = |name: &str| -> Result<usize> {
        cur.skip_whitespace();
        let at = cur.pos;
        let tok = cur.token()?;
        match tok.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::PfmFormat {
                offset: at,
                message: format!("invalid {name} {tok:?}"),
            }),
        }
    };
    let width = dim("width")?;
    let height = dim("height")?;

    cur.skip_whitespace();
    let scale_at = cur.pos;
    let scale_tok = cur.token()?;
    let scale: f32 = match scale_tok.parse() {
        Ok(s) if s != 0.0 && f32::is_finite(s) => s,
        _ => {
            cur.pos = scale_at;
            return cur.fail(format!("invalid scale {scale_tok:?}"));
        }
    };
    // Exactly one whitespace byte separates the header from the payload.
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return cur.fail("missing separator after scale");
    }
    cur.pos += 1;

    let n = width * height;
    let payload = &bytes[cur.pos..];
    if payload.len() < 4 * n {
        return cur.fail(format!(
            "payload too short: need {} bytes, have {}",
            4 * n,
            payload.len()
        ));
    }

    let little_endian = scale < 0.0;
    let mut data = vec![0f32; n];
    for (i, chunk) in payload[..4 * n].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (file_row, x) = (i / width, i % width);
        let y = height - 1 - file_row;
        let index = y * width + x;
        if !v.is_finite() {
            return Err(Error::PfmData { index, value: v });
        }
        data[index] = v;
    }
    Raster::new(width, height, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_pixel_layout() {
        let r = Raster::new(1, 1, vec![0.5]).unwrap();
        let bytes = encode_pfm(&r);
        let header = b"Pf\n1 1\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 4);
        assert_eq!(&bytes[header.len()..], &0.5f32.to_le_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().data(), &[0.5]);
    }

    #[test]
    fn payload_size_and_row_flip() {
        let r = Raster::new(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let bytes = encode_pfm(&r);
        let header_len = "Pf\n2 3\n-1.0\n".len();
        assert_eq!(bytes.len() - header_len, 24);
        // first stored row is the bottom row
        assert_eq!(&bytes[header_len..header_len + 4], &5f32.to_le_bytes());
    }

    #[test]
    fn big_endian_input() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-2f32).to_be_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().data(), &[1.5, -2.0]);
    }

    #[test]
    fn color_header_rejected() {
        let mut bytes = b"PF\n1 1\n-1.0\n".to_vec();
        bytes.extend_from_slice(&[0u8; 12]);
        match decode_pfm(&bytes) {
            Err(Error::PfmFormat { offset, message }) => {
                assert_eq!(offset, 0);
                assert!(message.contains("PF"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_header_offsets() {
        match decode_pfm(b"Pf\n2 x\n-1.0\n") {
            Err(Error::PfmFormat { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            decode_pfm(b"Pf\n1 1\n-1.0\n\0\0"),
            Err(Error::PfmFormat { .. })
        ));
    }

    #[test]
    fn nan_names_pixel() {
        let mut bytes = b"Pf\n2 2\n-1.0\n".to_vec();
        for v in [0.0f32, 0.0, f32::NAN, 0.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        // stored rows run bottom to top, so file pixel 2 is raster (0, 0)
        match decode_pfm(&bytes) {
            Err(Error::PfmData { index, .. }) => assert_eq!(index, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unwritable_path() {
        let r = Raster::zeros(1, 1);
        let err = write_pfm(&r, "/nonexistent-dir/x.pfm").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    proptest! {
        #[test]
        fn round_trip_bit_exact(
            (w, h, data) in (1usize..9, 1usize..9).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(
                    any::<f32>().prop_filter("finite", |v| v.is_finite()), w * h))
            })
        ) {
            let r = Raster::new(w, h, data).unwrap();
            let back = decode_pfm(&encode_pfm(&r)).unwrap();
            prop_assert_eq!(back.dims(), r.dims());
            for (a, b) in back.data().iter().zip(r.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
