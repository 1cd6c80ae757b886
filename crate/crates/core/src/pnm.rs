//! Binary PPM (`P6`) and PGM (`P5`) images with 8-bit samples.
//!
//! Files are written with the minimal header `P6\n<w> <h>\n255\n` (or `P5`)
//! followed by raw row-major samples, RGB-interleaved for PPM. The reader
//! accepts any whitespace between header fields and `#` comments.

use std::fs;
use std::path::Path;

use crate::error::{ModelError, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (RGB) samples per pixel.
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0; width * height * channels],
        }
    }

    pub fn header(&self) -> String {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        format!("{magic}\n{} {}\n255\n", self.width, self.height)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.header().into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if self.channels != 1 && self.channels != 3 {
            return Err(ModelError::Usage(format!("cannot write {}-channel image", self.channels)));
        }
        fs::write(path, self.encode()).map_err(|e| ModelError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| ModelError::io(path, e))?;
        Self::decode(&bytes).map_err(|msg| ModelError::format(path, msg))
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0;
        let mut field = || -> std::result::Result<String, String> {
            loop {
                match bytes.get(pos) {
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(_) => break,
                    None => return Err("truncated header".into()),
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
                pos += 1;
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let channels = match field()?.as_str() {
            "P6" => 3,
            "P5" => 1,
            m => return Err(format!("unsupported magic {m:?}")),
        };
        let num = |s: String| s.parse::<usize>().map_err(|_| format!("bad header number {s:?}"));
        let width = num(field()?)?;
        let height = num(field()?)?;
        let maxval = num(field()?)?;
        if maxval != 255 {
            return Err(format!("unsupported maxval {maxval}"));
        }
        // exactly one whitespace byte separates the header from the samples
        let start = pos + 1;
        let n = width * height * channels;
        if bytes.len() < start + n {
            return Err(format!("expected {n} sample bytes, found {}", bytes.len().saturating_sub(start)));
        }
        Ok(Self {
            width,
            height,
            channels,
            data: bytes[start..start + n].to_vec(),
        })
    }
}
