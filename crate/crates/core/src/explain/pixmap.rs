//! Binary portable graymap (P5) and pixmap (P6) files with 8-bit samples.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Image, Mask};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pixmap {
    pub width: usize,
    pub height: usize,
    /// 1 for P5, 3 for P6.
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Pixmap {
    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Input("truncated pixmap header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let channels = match fields[0].as_str() {
            "P5" => 1,
            "P6" => 3,
            other => return Err(Error::Input(format!("unsupported pixmap kind {other}"))),
        };
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Input(format!("bad pixmap header field {s:?}")))
        };
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(Error::Input(format!(
                "only 8-bit pixmaps are supported, maxval {maxval}"
            )));
        }
        let len = width * height * channels;
        if bytes.len() < pos || bytes.len() - pos != len {
            return Err(Error::Input(format!(
                "pixmap raster has {} bytes, expected {len}",
                bytes.len().saturating_sub(pos)
            )));
        }
        Ok(Pixmap {
            width,
            height,
            channels,
            data: bytes[pos..].to_vec(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Pixmap::decode(&fs::read(path)?)
    }

    pub fn from_image(image: &Image) -> Result<Self> {
        if image.channels != 1 && image.channels != 3 {
            return Err(Error::Input(format!(
                "{} channels cannot be stored as a pixmap",
                image.channels
            )));
        }
        Ok(Pixmap {
            width: image.width,
            height: image.height,
            channels: image.channels,
            data: image.data.iter().map(|&v| quantize(v)).collect(),
        })
    }

    pub fn to_image(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&b| b as f64 / 255.0).collect(),
        }
    }

    /// Binary mask from a graymap holding only 0 and 255.
    pub fn to_mask(&self) -> Result<Mask> {
        if self.channels != 1 {
            return Err(Error::Input("masks must be graymaps".into()));
        }
        Mask::from_levels(self.height, self.width, &self.data)
    }

    pub fn from_mask(mask: &Mask) -> Self {
        Pixmap {
            width: mask.width,
            height: mask.height,
            channels: 1,
            data: mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_comment() {
        let p = Pixmap {
            width: 2,
            height: 1,
            channels: 3,
            data: vec![0, 10, 20, 30, 40, 255],
        };
        assert_eq!(Pixmap::decode(&p.encode()).unwrap(), p);
        let mut with_comment = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        with_comment.extend_from_slice(&p.data);
        assert_eq!(Pixmap::decode(&with_comment).unwrap(), p);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Pixmap::decode(b"P3\n1 1\n255\n1 2 3").is_err());
        assert!(Pixmap::decode(b"P5\n2 2\n255\n\x00\x01").is_err());
        assert!(Pixmap::decode(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(Pixmap::decode(b"P5\n1").is_err());
    }

    #[test]
    fn mask_levels() {
        let p = Pixmap {
            width: 2,
            height: 1,
            channels: 1,
            data: vec![0, 255],
        };
        assert_eq!(p.to_mask().unwrap().data, vec![false, true]);
        let bad = Pixmap {
            data: vec![0, 128],
            ..p
        };
        assert!(matches!(bad.to_mask(), Err(Error::Input(_))));
    }
}
