use std::fmt;
use std::str::FromStr;

use rand::{CryptoRng, RngCore};

use crate::cipher::{KEY_LEN, NONCE_LEN};
use crate::config::CapacityConfig;
use crate::error::{Error, Result};

/// Stream-cipher key and nonce used to randomize the diffused watermark.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    pub key: [u8; KEY_LEN],
    pub nonce: [u8; NONCE_LEN],
}

impl KeyMaterial {
    pub fn new(key: [u8; KEY_LEN], nonce: [u8; NONCE_LEN]) -> Self {
        KeyMaterial { key, nonce }
    }

    /// Fresh key and nonce from the thread-local CSPRNG (OS seeded).
    pub fn generate() -> Self {
        Self::from_rng(&mut rand::rng())
    }

    pub fn from_rng<R: CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut key = [0u8; KEY_LEN];
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut key);
        rng.fill_bytes(&mut nonce);
        KeyMaterial { key, nonce }
    }

    /// Deterministic keys for simulations. Not for production embeds.
    pub fn from_any_rng<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut key = [0u8; KEY_LEN];
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut key);
        rng.fill_bytes(&mut nonce);
        KeyMaterial { key, nonce }
    }

    pub fn key_hex(&self) -> String {
        hex::encode(self.key)
    }

    pub fn nonce_hex(&self) -> String {
        hex::encode(self.nonce)
    }

    pub fn from_hex(key: &str, nonce: &str) -> Result<Self> {
        Ok(KeyMaterial { key: decode_fixed(key, "key")?, nonce: decode_fixed(nonce, "nonce")? })
    }
}

impl fmt::Debug for KeyMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyMaterial").field("key", &"<redacted>").field("nonce", &self.nonce_hex()).finish()
    }
}

fn decode_fixed<const N: usize>(s: &str, what: &str) -> Result<[u8; N]> {
    let bytes = hex::decode(s.trim()).map_err(|e| Error::format(format!("{what}: {e}")))?;
    bytes.try_into().map_err(|v: Vec<u8>| Error::format(format!("{what}: expected {N} bytes, got {}", v.len())))
}

/// Key material plus the capacity configuration it was issued for, stored as
/// `key=value` lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRecord {
    pub key: KeyMaterial,
    pub config: CapacityConfig,
}

impl fmt::Display for KeyRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cfg = &self.config;
        writeln!(f, "# gaussian-shading key record")?;
        writeln!(f, "key={}", self.key.key_hex())?;
        writeln!(f, "nonce={}", self.key.nonce_hex())?;
        writeln!(f, "c={}", cfg.channels())?;
        writeln!(f, "h={}", cfg.height())?;
        writeln!(f, "w={}", cfg.width())?;
        writeln!(f, "fc={}", cfg.channel_factor())?;
        writeln!(f, "fhw={}", cfg.spatial_factor())?;
        writeln!(f, "l={}", cfg.bits_per_element())
    }
}

impl FromStr for KeyRecord {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut key = None;
        let mut nonce = None;
        let mut dims = [None::<usize>; 6];
        const NAMES: [&str; 6] = ["c", "h", "w", "fc", "fhw", "l"];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("line {}: expected key=value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "key" => key = Some(v.to_string()),
                "nonce" => nonce = Some(v.to_string()),
                _ => {
                    let slot = NAMES
                        .iter()
                        .position(|&n| n == k)
                        .ok_or_else(|| Error::format(format!("line {}: unknown field {k:?}", lineno + 1)))?;
                    dims[slot] =
                        Some(v.parse().map_err(|_| {
                            Error::format(format!("line {}: {k} is not an unsigned integer", lineno + 1))
                        })?);
                }
            }
        }
        let missing = |what: &str| Error::format(format!("key record is missing {what:?}"));
        let key = KeyMaterial::from_hex(&key.ok_or_else(|| missing("key"))?, &nonce.ok_or_else(|| missing("nonce"))?)?;
        let mut vals = [0usize; 6];
        for (i, d) in dims.iter().enumerate() {
            vals[i] = d.ok_or_else(|| missing(NAMES[i]))?;
        }
        let l = u32::try_from(vals[5]).map_err(|_| Error::config("bits per element out of range"))?;
        let config = CapacityConfig::new(vals[0], vals[1], vals[2], vals[3], vals[4], l)?;
        Ok(KeyRecord { key, config })
    }
}
