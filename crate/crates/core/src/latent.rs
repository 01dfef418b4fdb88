//! Latent tensors and the GSLT binary container.
//!
//! GSLT layout (all integers little-endian):
//!
//! ```text
//! offset  size        field
//! 0       4           magic "GSLT" (0x47 0x53 0x4C 0x54)
//! 4       1           version, 0x01
//! 5       4           c  (u32)
//! 9       4           h  (u32)
//! 13      4           w  (u32)
//! 17      4*c*h*w     values, IEEE-754 binary32, channel-major then row-major
//! ```

use std::io::{self, Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{CapacityConfig, MAX_ELEMENTS};
use crate::error::{Error, Result};

pub const GSLT_MAGIC: [u8; 4] = *b"GSLT";
pub const GSLT_VERSION: u8 = 0x01;
pub const GSLT_HEADER_LEN: usize = 17;

/// A `c x h x w` latent, stored flat in canonical (channel, row, column) order.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl LatentTensor {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        let expected = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Error::config("latent dimensions overflow"))?;
        if values.len() != expected {
            return Err(Error::LengthMismatch { expected, actual: values.len() });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericDomain(format!("non-finite latent value at index {pos}")));
        }
        Ok(LatentTensor { channels, height, width, values })
    }

    /// I.i.d. N(0, 1) latent shaped for `cfg`.
    pub fn standard_normal<R: Rng + ?Sized>(cfg: &CapacityConfig, rng: &mut R) -> Self {
        let values = (0..cfg.elements()).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect();
        LatentTensor { channels: cfg.channels(), height: cfg.height(), width: cfg.width(), values }
    }

    pub(crate) fn from_parts_unchecked(cfg: &CapacityConfig, values: Vec<f32>) -> Self {
        debug_assert_eq!(values.len(), cfg.elements());
        LatentTensor { channels: cfg.channels(), height: cfg.height(), width: cfg.width(), values }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, ch: usize, y: usize, x: usize) -> f32 {
        self.values[(ch * self.height + y) * self.width + x]
    }

    /// Errors unless the tensor shape equals the configured latent shape.
    pub fn check_shape(&self, cfg: &CapacityConfig) -> Result<()> {
        if self.shape() != (cfg.channels(), cfg.height(), cfg.width()) {
            return Err(Error::config(format!(
                "latent is {}x{}x{}, configuration expects {}x{}x{}",
                self.channels,
                self.height,
                self.width,
                cfg.channels(),
                cfg.height(),
                cfg.width()
            )));
        }
        Ok(())
    }

    /// Applies `f` to every value, rejecting results that are not finite.
    pub fn try_map(&self, mut f: impl FnMut(usize, f32) -> f32) -> Result<Self> {
        let values: Vec<f32> = self.values.iter().enumerate().map(|(i, &v)| f(i, v)).collect();
        LatentTensor::new(self.channels, self.height, self.width, values)
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn write_gslt<W: Write>(&self, mut out: W) -> Result<()> {
        let dim = |d: usize| -> Result<[u8; 4]> {
            u32::try_from(d).map(u32::to_le_bytes).map_err(|_| Error::format("dimension does not fit in u32"))
        };
        let mut buf = Vec::with_capacity(GSLT_HEADER_LEN + 4 * self.values.len());
        buf.extend_from_slice(&GSLT_MAGIC);
        buf.push(GSLT_VERSION);
        buf.extend_from_slice(&dim(self.channels)?);
        buf.extend_from_slice(&dim(self.height)?);
        buf.extend_from_slice(&dim(self.width)?);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn to_gslt_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_gslt(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_gslt<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; GSLT_HEADER_LEN];
        input.read_exact(&mut header).map_err(truncated)?;
        if header[..4] != GSLT_MAGIC {
            return Err(Error::format(format!("bad GSLT magic {:02x?}", &header[..4])));
        }
        if header[4] != GSLT_VERSION {
            return Err(Error::format(format!("unsupported GSLT version {:#04x}", header[4])));
        }
        let word = |at: usize| u32::from_le_bytes(header[at..at + 4].try_into().unwrap()) as usize;
        let (c, h, w) = (word(5), word(9), word(13));
        let n = c
            .checked_mul(h)
            .and_then(|v| v.checked_mul(w))
            .filter(|&n| n <= MAX_ELEMENTS)
            .ok_or_else(|| Error::format(format!("GSLT dimensions {c}x{h}x{w} too large")))?;
        let mut raw = vec![0u8; 4 * n];
        input.read_exact(&mut raw).map_err(truncated)?;
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(Error::format("trailing bytes after GSLT payload"));
        }
        let values = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        LatentTensor::new(c, h, w, values).map_err(|e| match e {
            Error::NumericDomain(msg) => Error::format(msg),
            other => other,
        })
    }

    pub fn from_gslt_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_gslt(bytes)
    }
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::format("truncated GSLT data")
    } else {
        Error::Io(e)
    }
}
