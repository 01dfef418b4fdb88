use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest supported number of bits per latent element.
pub const MAX_BITS_PER_ELEMENT: u32 = 8;

/// Upper bound on `c * h * w`, keeping stream indices within `u32`.
pub const MAX_ELEMENTS: usize = 1 << 28;

/// Latent shape plus the diffusion factors that fix the payload capacity.
///
/// The payload of `k = l*c*h*w / (f_c * f_hw^2)` bits is tiled `f_c` times
/// along channels and `f_hw` times along each spatial axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CapacityConfig {
    channels: usize,
    height: usize,
    width: usize,
    channel_factor: usize,
    spatial_factor: usize,
    bits_per_element: u32,
}

impl CapacityConfig {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        channel_factor: usize,
        spatial_factor: usize,
        bits_per_element: u32,
    ) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::config("latent dimensions must be positive"));
        }
        if channel_factor == 0 || spatial_factor == 0 {
            return Err(Error::config("diffusion factors must be positive"));
        }
        if !(1..=MAX_BITS_PER_ELEMENT).contains(&bits_per_element) {
            return Err(Error::config(format!(
                "bits per element must be in 1..={MAX_BITS_PER_ELEMENT}, got {bits_per_element}"
            )));
        }
        if !channels.is_multiple_of(channel_factor) {
            return Err(Error::config(format!("channel factor {channel_factor} does not divide {channels} channels")));
        }
        if !height.is_multiple_of(spatial_factor) || !width.is_multiple_of(spatial_factor) {
            return Err(Error::config(format!("spatial factor {spatial_factor} does not divide {height}x{width}")));
        }
        let elements = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .filter(|&v| v <= MAX_ELEMENTS)
            .ok_or_else(|| Error::config("latent tensor too large"))?;
        debug_assert!(elements * bits_per_element as usize <= u32::MAX as usize);
        Ok(CapacityConfig { channels, height, width, channel_factor, spatial_factor, bits_per_element })
    }

    /// 4x64x64 latent, f_c = 1, f_hw = 8, l = 1: a 256-bit payload replicated 64 times.
    pub fn stable_diffusion_default() -> Self {
        CapacityConfig::new(4, 64, 64, 1, 8, 1).unwrap()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channel_factor(&self) -> usize {
        self.channel_factor
    }

    pub fn spatial_factor(&self) -> usize {
        self.spatial_factor
    }

    pub fn bits_per_element(&self) -> u32 {
        self.bits_per_element
    }

    /// Number of latent elements, `c*h*w`.
    pub fn elements(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Length of the diffused and randomized bit streams, `l*c*h*w`.
    pub fn stream_bits(&self) -> usize {
        self.elements() * self.bits_per_element as usize
    }

    /// Replication count `R = f_c * f_hw^2`.
    pub fn replication(&self) -> usize {
        self.channel_factor * self.spatial_factor * self.spatial_factor
    }

    /// Payload capacity `k`.
    pub fn payload_bits(&self) -> usize {
        self.stream_bits() / self.replication()
    }

    /// Shape of one payload tile: (bit planes, channels, rows, cols).
    pub fn tile_shape(&self) -> (usize, usize, usize, usize) {
        (
            self.bits_per_element as usize,
            self.channels / self.channel_factor,
            self.height / self.spatial_factor,
            self.width / self.spatial_factor,
        )
    }
}

impl Default for CapacityConfig {
    fn default() -> Self {
        CapacityConfig::stable_diffusion_default()
    }
}

impl fmt::Display for CapacityConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{},fc={},fhw={},l={}",
            self.channels, self.height, self.width, self.channel_factor, self.spatial_factor, self.bits_per_element
        )
    }
}

/// Parses `CxHxW[,fc=N][,fhw=N][,l=N]`; omitted factors default to 1.
impl FromStr for CapacityConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(',');
        let dims: Vec<&str> = parts.next().unwrap_or("").split('x').collect();
        if dims.len() != 3 {
            return Err(Error::format(format!("expected CxHxW in {s:?}")));
        }
        let num = |t: &str| -> Result<usize> {
            t.trim().parse().map_err(|_| Error::format(format!("not an unsigned integer: {t:?}")))
        };
        let (c, h, w) = (num(dims[0])?, num(dims[1])?, num(dims[2])?);
        let (mut fc, mut fhw, mut l) = (1, 1, 1);
        for part in parts {
            let (key, value) =
                part.split_once('=').ok_or_else(|| Error::format(format!("expected key=value, got {part:?}")))?;
            match key.trim() {
                "fc" => fc = num(value)?,
                "fhw" => fhw = num(value)?,
                "l" => l = num(value)?,
                other => return Err(Error::format(format!("unknown config key {other:?}"))),
            }
        }
        let l = u32::try_from(l).map_err(|_| Error::config("bits per element out of range"))?;
        CapacityConfig::new(c, h, w, fc, fhw, l)
    }
}
