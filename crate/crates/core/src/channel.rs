//! Latent-space degradation models.
//!
//! These stand in for the generate, attack, invert round trip of a real
//! diffusion pipeline. They are models: they reproduce trends such as the
//! replication/robustness trade-off, not the magnitudes of image-space attacks.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::latent::LatentTensor;
use crate::special::{binomial_pmf, binomial_tail_at_least};

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec {
    /// Additive i.i.d. N(0, sigma^2) noise.
    GaussianNoise { sigma: f64 },
    /// Negate each component independently with probability `flip_rate`.
    SignFlip { flip_rate: f64 },
    /// Redraw an axis-aligned spatial block covering `region_fraction` of the
    /// h x w plane (all channels) from N(0, 1).
    RegionRerandomize { region_fraction: f64 },
    /// Children applied left to right.
    Compose(Vec<ChannelSpec>),
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::usage(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        match self {
            ChannelSpec::GaussianNoise { sigma } => {
                if sigma.is_finite() && *sigma >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::usage(format!("noise sigma must be finite and >= 0, got {sigma}")))
                }
            }
            ChannelSpec::SignFlip { flip_rate } => unit("flip rate", *flip_rate),
            ChannelSpec::RegionRerandomize { region_fraction } => unit("region fraction", *region_fraction),
            ChannelSpec::Compose(children) => {
                if children.is_empty() {
                    return Err(Error::usage("composed channel has no stages"));
                }
                children.iter().try_for_each(ChannelSpec::validate)
            }
        }
    }

    /// True when the channel leaves every latent bit-exactly unchanged.
    pub fn is_identity(&self) -> bool {
        match self {
            ChannelSpec::GaussianNoise { sigma } => *sigma == 0.0,
            ChannelSpec::SignFlip { flip_rate } => *flip_rate == 0.0,
            ChannelSpec::RegionRerandomize { region_fraction } => *region_fraction == 0.0,
            ChannelSpec::Compose(children) => children.iter().all(ChannelSpec::is_identity),
        }
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelSpec::GaussianNoise { sigma } => write!(f, "gauss:{sigma}"),
            ChannelSpec::SignFlip { flip_rate } => write!(f, "flip:{flip_rate}"),
            ChannelSpec::RegionRerandomize { region_fraction } => write!(f, "region:{region_fraction}"),
            ChannelSpec::Compose(children) => {
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str("+")?;
                    }
                    write!(f, "{c}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses expressions such as `flip:0.4`, `gauss:1.0`, `region:0.25` and
/// their `+`-joined compositions; `none` is the identity.
impl FromStr for ChannelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut stages = Vec::new();
        for term in s.split('+') {
            let term = term.trim();
            if term.eq_ignore_ascii_case("none") || term.eq_ignore_ascii_case("clean") {
                stages.push(ChannelSpec::SignFlip { flip_rate: 0.0 });
                continue;
            }
            let (name, value) =
                term.split_once(':').ok_or_else(|| Error::usage(format!("channel term {term:?} is not name:value")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::usage(format!("channel parameter {value:?} is not a number")))?;
            let stage = match name.trim() {
                "gauss" | "gaussian" | "gaussian_noise" => ChannelSpec::GaussianNoise { sigma: v },
                "flip" | "sign_flip" => ChannelSpec::SignFlip { flip_rate: v },
                "region" | "region_rerandomize" => ChannelSpec::RegionRerandomize { region_fraction: v },
                other => return Err(Error::usage(format!("unknown channel {other:?}"))),
            };
            stages.push(stage);
        }
        let spec = if stages.len() == 1 { stages.pop().unwrap() } else { ChannelSpec::Compose(stages) };
        spec.validate()?;
        Ok(spec)
    }
}

/// Block height and width covering about `fraction` of an `h x w` plane.
pub fn region_block(h: usize, w: usize, fraction: f64) -> (usize, usize) {
    if fraction <= 0.0 {
        return (0, 0);
    }
    if fraction >= 1.0 {
        return (h, w);
    }
    let bh = ((h as f64 * fraction.sqrt()).round() as usize).clamp(1, h);
    let bw = ((fraction * (h * w) as f64 / bh as f64).round() as usize).clamp(1, w);
    (bh, bw)
}

pub fn apply_channel<R: Rng + ?Sized>(z: &LatentTensor, spec: &ChannelSpec, rng: &mut R) -> Result<LatentTensor> {
    spec.validate()?;
    let mut out = z.clone();
    apply_in_place(&mut out, spec, rng);
    // re-check finiteness (large sigma could in principle overflow f32)
    let (c, h, w) = out.shape();
    LatentTensor::new(c, h, w, out.into_values())
}

fn apply_in_place<R: Rng + ?Sized>(z: &mut LatentTensor, spec: &ChannelSpec, rng: &mut R) {
    match spec {
        ChannelSpec::GaussianNoise { sigma } => {
            if *sigma == 0.0 {
                return;
            }
            for v in z.values_mut() {
                let n: f64 = rng.sample(StandardNormal);
                *v = (*v as f64 + sigma * n) as f32;
            }
        }
        ChannelSpec::SignFlip { flip_rate } => {
            if *flip_rate == 0.0 {
                return;
            }
            for v in z.values_mut() {
                if rng.random_bool(*flip_rate) {
                    *v = -*v;
                }
            }
        }
        ChannelSpec::RegionRerandomize { region_fraction } => {
            let (c, h, w) = z.shape();
            let (bh, bw) = region_block(h, w, *region_fraction);
            if bh == 0 || bw == 0 {
                return;
            }
            let y0 = rng.random_range(0..=h - bh);
            let x0 = rng.random_range(0..=w - bw);
            let values = z.values_mut();
            for ch in 0..c {
                for y in y0..y0 + bh {
                    for x in x0..x0 + bw {
                        values[(ch * h + y) * w + x] = rng.sample::<f64, _>(StandardNormal) as f32;
                    }
                }
            }
        }
        ChannelSpec::Compose(children) => {
            for child in children {
                apply_in_place(z, child, rng);
            }
        }
    }
}

/// `P(Binomial(R, 1 - flip_rate) > R/2)`: the probability that a payload
/// bit survives voting when each of its `R` copies flips independently.
///
/// This is exact for payload bits equal to 1. A 0 bit also survives a tie
/// (see [`expected_payload_accuracy_sign_flip`]), so for even `R` this is a
/// lower bound on the average accuracy.
pub fn predicted_bit_accuracy_sign_flip(flip_rate: f64, replication: usize) -> f64 {
    let r = replication as u64;
    binomial_tail_at_least(r, 1.0 - flip_rate, r / 2 + 1)
}

/// Mean post-voting bit accuracy for uniformly random payloads: adds half the
/// tie probability to [`predicted_bit_accuracy_sign_flip`] when `R` is even.
pub fn expected_payload_accuracy_sign_flip(flip_rate: f64, replication: usize) -> f64 {
    let r = replication as u64;
    let strict = predicted_bit_accuracy_sign_flip(flip_rate, replication);
    if r.is_multiple_of(2) {
        strict + 0.5 * binomial_pmf(r, 1.0 - flip_rate, r / 2)
    } else {
        strict
    }
}

/// Per-component sign error of `z + n` with `z, n` independent N(0, 1) and
/// N(0, sigma^2): `arccos(1 / sqrt(1 + sigma^2)) / pi`.
pub fn gaussian_sign_error_rate(sigma: f64) -> f64 {
    (1.0 / (1.0 + sigma * sigma).sqrt()).acos() / std::f64::consts::PI
}
