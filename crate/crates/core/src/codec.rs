//! The watermark codec.
//!
//! Embedding: payload `s` --diffuse--> `s^d` --XOR keystream--> `m` --sample--> `z`.
//! Extraction runs the inverse chain and majority-votes the replicated copies.
//!
//! Stream layout: latent element `j` (flattened channel-major, then row-major)
//! carries stream bits `j*l .. j*l + l`, most significant bit first. Keystream
//! bytes are expanded to bits most significant bit first.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::cipher::{self, INITIAL_COUNTER};
use crate::config::CapacityConfig;
use crate::error::{Error, Result};
use crate::key::KeyMaterial;
use crate::latent::LatentTensor;
use crate::normal;

/// Cap on candidate draws in [`rejection_sample_reference`].
pub const REJECTION_ITERATION_CAP: usize = 1_000_000;

/// Smallest admissible uniform draw; the largest is `1 - U_MIN`.
pub const U_MIN: f64 = 1.0 / 9_007_199_254_740_992.0; // 2^-53

macro_rules! bit_sequence {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash)]
        pub struct $name {
            bits: Vec<u8>,
        }

        impl $name {
            /// Wraps a sequence of 0/1 values.
            pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
                if let Some(pos) = bits.iter().position(|&b| b > 1) {
                    return Err(Error::usage(format!("bit {pos} is {}, expected 0 or 1", bits[pos])));
                }
                Ok($name { bits })
            }

            pub fn bits(&self) -> &[u8] {
                &self.bits
            }

            pub fn into_bits(self) -> Vec<u8> {
                self.bits
            }

            pub fn len(&self) -> usize {
                self.bits.len()
            }

            pub fn is_empty(&self) -> bool {
                self.bits.is_empty()
            }
        }
    };
}

bit_sequence! {
    /// The k-bit watermark identifying a model or user.
    WatermarkPayload
}

bit_sequence! {
    /// The payload tiled across the whole latent, `l*c*h*w` bits.
    DiffusedWatermark
}

bit_sequence! {
    /// Diffused watermark XOR keystream; uniformly distributed bits.
    RandomizedStream
}

impl WatermarkPayload {
    pub fn random<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Self {
        let mut bits = vec![0u8; k];
        let mut word = 0u64;
        for (i, b) in bits.iter_mut().enumerate() {
            if i % 64 == 0 {
                word = rng.random();
            }
            *b = ((word >> (i % 64)) & 1) as u8;
        }
        WatermarkPayload { bits }
    }

    /// Hex encoding, bits packed most significant first, zero padded to a byte.
    pub fn to_hex(&self) -> String {
        hex::encode(pack_bits(&self.bits))
    }

    /// Parses the encoding produced by [`WatermarkPayload::to_hex`] for a `k`-bit payload.
    pub fn from_hex(s: &str, k: usize) -> Result<Self> {
        let bytes = hex::decode(s.trim()).map_err(|e| Error::format(format!("payload hex: {e}")))?;
        if bytes.len() != k.div_ceil(8) {
            return Err(Error::LengthMismatch { expected: k, actual: bytes.len() * 8 });
        }
        let bits = unpack_bits(&bytes, bytes.len() * 8);
        if bits[k..].iter().any(|&b| b != 0) {
            return Err(Error::format("payload hex has nonzero padding bits"));
        }
        Ok(WatermarkPayload { bits: bits[..k].to_vec() })
    }
}

fn pack_bits(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8).map(|chunk| chunk.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (b << (7 - i)))).collect()
}

fn unpack_bits(bytes: &[u8], n: usize) -> Vec<u8> {
    (0..n).map(|j| (bytes[j / 8] >> (7 - j % 8)) & 1).collect()
}

/// The first `n` keystream bits for `key`, starting at the initial block counter.
pub fn keystream_bits(key: &KeyMaterial, n: usize) -> Vec<u8> {
    let bytes = cipher::keystream(&key.key, &key.nonce, INITIAL_COUNTER, n.div_ceil(8));
    unpack_bits(&bytes, n)
}

/// Precomputed replication map between payload bits and stream positions.
///
/// Stream bit-plane `b` of element `(ch, y, x)` holds payload bit
/// `(b, ch mod c/f_c, y mod h/f_hw, x mod w/f_hw)`; that element belongs to copy
/// `(ch div c/f_c, y div h/f_hw, x div w/f_hw)`.
#[derive(Debug, Clone)]
pub struct Tiling {
    k: usize,
    copies: usize,
    /// `positions[r * k + b]` is the stream position of copy `r` of payload bit `b`.
    positions: Vec<u32>,
}

impl Tiling {
    pub fn new(cfg: &CapacityConfig) -> Self {
        let (l, cb, hb, wb) = cfg.tile_shape();
        let (h, w) = (cfg.height(), cfg.width());
        let f = cfg.spatial_factor();
        let k = cfg.payload_bits();
        let copies = cfg.replication();
        let mut positions = vec![0u32; cfg.stream_bits()];
        for ch in 0..cfg.channels() {
            for y in 0..h {
                for x in 0..w {
                    let elem = (ch * h + y) * w + x;
                    let copy = ((ch / cb) * f + y / hb) * f + x / wb;
                    for plane in 0..l {
                        let bit = ((plane * cb + ch % cb) * hb + y % hb) * wb + x % wb;
                        positions[copy * k + bit] = (elem * l + plane) as u32;
                    }
                }
            }
        }
        Tiling { k, copies, positions }
    }

    pub fn payload_bits(&self) -> usize {
        self.k
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn positions(&self) -> &[u32] {
        &self.positions
    }

    /// Reorders a stream so copy `r` occupies `[r*k, (r+1)*k)`.
    pub fn to_copy_major(&self, stream: &[u8]) -> Vec<u8> {
        debug_assert_eq!(stream.len(), self.positions.len());
        self.positions.iter().map(|&p| stream[p as usize]).collect()
    }

    /// Majority vote over a copy-major stream, optionally XORed with a
    /// copy-major keystream first.
    pub fn vote_copy_major(&self, copy_major: &[u8], keystream: Option<&[u8]>) -> Vec<u8> {
        debug_assert_eq!(copy_major.len(), self.positions.len());
        if self.copies <= u8::MAX as usize {
            self.vote_with::<u8>(copy_major, keystream)
        } else {
            self.vote_with::<u32>(copy_major, keystream)
        }
    }

    /// Words per payload bit in the packed bit-major layout.
    pub fn packed_words(&self) -> usize {
        self.copies.div_ceil(64)
    }

    /// Packs a stream bit-major: bit `r % 64` of word
    /// `b * packed_words() + r / 64` is copy `r` of payload bit `b`.
    pub fn pack_bit_major(&self, stream: &[u8]) -> Vec<u64> {
        debug_assert_eq!(stream.len(), self.positions.len());
        let words = self.packed_words();
        let mut packed = vec![0u64; self.k * words];
        for (r, row) in self.positions.chunks_exact(self.k).enumerate() {
            let (word, shift) = (r / 64, r % 64);
            for (b, &p) in row.iter().enumerate() {
                packed[b * words + word] |= u64::from(stream[p as usize]) << shift;
            }
        }
        packed
    }

    /// Majority vote of `stream XOR keystream`, both packed by
    /// [`Tiling::pack_bit_major`], yielding one decoded bit per payload bit.
    pub fn vote_packed<'a>(&'a self, stream: &'a [u64], keystream: &'a [u64]) -> impl Iterator<Item = u8> + 'a {
        let words = self.packed_words();
        let copies = self.copies as u32;
        stream.chunks_exact(words).zip(keystream.chunks_exact(words)).map(move |(a, b)| {
            let ones: u32 = a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum();
            u8::from(2 * ones > copies)
        })
    }

    fn vote_with<C>(&self, copy_major: &[u8], keystream: Option<&[u8]>) -> Vec<u8>
    where
        C: Copy + Default + From<u8> + std::ops::AddAssign + Into<u64>,
    {
        let k = self.k;
        let mut ones = vec![C::default(); k];
        match keystream {
            Some(ks) => {
                for (row, ks_row) in copy_major.chunks_exact(k).zip(ks.chunks_exact(k)) {
                    for ((acc, &a), &b) in ones.iter_mut().zip(row).zip(ks_row) {
                        *acc += C::from(a ^ b);
                    }
                }
            }
            None => {
                for row in copy_major.chunks_exact(k) {
                    for (acc, &a) in ones.iter_mut().zip(row) {
                        *acc += C::from(a);
                    }
                }
            }
        }
        let copies = self.copies as u64;
        ones.into_iter().map(|n| u8::from(2 * n.into() > copies)).collect()
    }
}

/// Codec bound to one capacity configuration, caching its tiling.
#[derive(Debug, Clone)]
pub struct Codec {
    cfg: CapacityConfig,
    tiling: Tiling,
}

impl Codec {
    pub fn new(cfg: CapacityConfig) -> Self {
        Codec { tiling: Tiling::new(&cfg), cfg }
    }

    pub fn config(&self) -> &CapacityConfig {
        &self.cfg
    }

    pub fn tiling(&self) -> &Tiling {
        &self.tiling
    }

    pub fn diffuse(&self, s: &WatermarkPayload) -> Result<DiffusedWatermark> {
        let k = self.tiling.k;
        if s.len() != k {
            return Err(Error::LengthMismatch { expected: k, actual: s.len() });
        }
        let mut bits = vec![0u8; self.cfg.stream_bits()];
        for (idx, &pos) in self.tiling.positions.iter().enumerate() {
            bits[pos as usize] = s.bits[idx % k];
        }
        Ok(DiffusedWatermark { bits })
    }

    pub fn reduce(&self, sd: &DiffusedWatermark) -> Result<WatermarkPayload> {
        self.check_stream(sd.len())?;
        let bits = self.tiling.vote_copy_major(&self.tiling.to_copy_major(&sd.bits), None);
        Ok(WatermarkPayload { bits })
    }

    pub fn sample<R: Rng + ?Sized>(&self, m: &RandomizedStream, rng: &mut R) -> Result<LatentTensor> {
        self.sample_with(m, std::iter::repeat_with(|| UniformDraw::from_rng(rng)))
    }

    /// [`Codec::sample`] with caller-supplied uniform draws, one per element.
    pub fn sample_with<I>(&self, m: &RandomizedStream, draws: I) -> Result<LatentTensor>
    where
        I: IntoIterator<Item = UniformDraw>,
    {
        self.check_stream(m.len())?;
        let l = self.cfg.bits_per_element();
        let mut draws = draws.into_iter();
        let mut values = Vec::with_capacity(self.cfg.elements());
        for group in m.bits.chunks_exact(l as usize) {
            let i = group.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
            let u = draws.next().ok_or_else(|| Error::NumericDomain("uniform draw source exhausted".into()))?;
            values.push(sample_element(i, l, u));
        }
        Ok(LatentTensor::from_parts_unchecked(&self.cfg, values))
    }

    pub fn recover(&self, z: &LatentTensor) -> Result<RandomizedStream> {
        z.check_shape(&self.cfg)?;
        let l = self.cfg.bits_per_element();
        let mut bits = Vec::with_capacity(self.cfg.stream_bits());
        for &v in z.values() {
            if !v.is_finite() {
                return Err(Error::NumericDomain("non-finite latent value".into()));
            }
            let i = recover_element(v, l);
            bits.extend((0..l).rev().map(|s| ((i >> s) & 1) as u8));
        }
        Ok(RandomizedStream { bits })
    }

    pub fn embed<R: Rng + ?Sized>(&self, s: &WatermarkPayload, key: &KeyMaterial, rng: &mut R) -> Result<LatentTensor> {
        let sd = self.diffuse(s)?;
        self.sample(&randomize(&sd, key), rng)
    }

    pub fn extract(&self, z: &LatentTensor, key: &KeyMaterial) -> Result<WatermarkPayload> {
        let m = self.recover(z)?;
        self.reduce(&derandomize(&m, key))
    }

    fn check_stream(&self, len: usize) -> Result<()> {
        let expected = self.cfg.stream_bits();
        if len != expected {
            return Err(Error::LengthMismatch { expected, actual: len });
        }
        Ok(())
    }
}

/// A uniform draw clamped to `[2^-53, 1 - 2^-53]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct UniformDraw(f64);

impl UniformDraw {
    /// Accepts `u` in the open interval (0, 1).
    pub fn new(u: f64) -> Result<Self> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::NumericDomain(format!("uniform draw {u} outside (0, 1)")));
        }
        Ok(Self::clamped(u))
    }

    pub fn clamped(u: f64) -> Self {
        UniformDraw(u.clamp(U_MIN, 1.0 - U_MIN))
    }

    pub fn from_rng<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::clamped(rng.random::<f64>())
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `ppf((u + i) / 2^l)` rounded to `f32`, guaranteed to recover to `i`.
pub fn sample_element(i: u32, l: u32, u: UniformDraw) -> f32 {
    let cells = (1u64 << l) as f64;
    debug_assert!((i as f64) < cells);
    let u = u.value();
    let p = ((u + i as f64) / cells).min(1.0 - U_MIN);
    let z = normal::ppf(p) as f32;
    // Near a cell edge the f32 rounding or the ~1e-16 cdf/ppf error can push z
    // into a neighbouring cell.
    let window = cells * 1e-7;
    if (u < window || u > 1.0 - window) && recover_element(z, l) != i {
        return snap_into_cell(z, i, l);
    }
    z
}

/// The value closest to `z` that recovers to `i`, found by bisecting towards
/// the cell's median.
fn snap_into_cell(z: f32, i: u32, l: u32) -> f32 {
    let cells = (1u64 << l) as f64;
    let (mut bad, mut good) = (z, normal::ppf((i as f64 + 0.5) / cells) as f32);
    debug_assert_eq!(recover_element(good, l), i);
    loop {
        let mid = ((bad as f64 + good as f64) / 2.0) as f32;
        if mid == bad || mid == good {
            return good;
        }
        if recover_element(mid, l) == i {
            good = mid;
        } else {
            bad = mid;
        }
    }
}

/// `min(floor(2^l * cdf(z)), 2^l - 1)`.
pub fn recover_element(z: f32, l: u32) -> u32 {
    let top = (1u32 << l) - 1;
    let scaled = normal::cdf(z as f64) * (1u64 << l) as f64;
    (scaled as u32).min(top)
}

pub fn diffuse_payload(s: &WatermarkPayload, cfg: &CapacityConfig) -> Result<DiffusedWatermark> {
    Codec::new(*cfg).diffuse(s)
}

/// XOR with the ChaCha20 keystream; an involution.
pub fn randomize(sd: &DiffusedWatermark, key: &KeyMaterial) -> RandomizedStream {
    RandomizedStream { bits: xor_keystream(&sd.bits, key) }
}

pub fn derandomize(m: &RandomizedStream, key: &KeyMaterial) -> DiffusedWatermark {
    DiffusedWatermark { bits: xor_keystream(&m.bits, key) }
}

fn xor_keystream(bits: &[u8], key: &KeyMaterial) -> Vec<u8> {
    bits.iter().zip(keystream_bits(key, bits.len())).map(|(&a, b)| a ^ b).collect()
}

pub fn sample_latent<R: Rng + ?Sized>(m: &RandomizedStream, cfg: &CapacityConfig, rng: &mut R) -> Result<LatentTensor> {
    Codec::new(*cfg).sample(m, rng)
}

pub fn recover_integers(z: &LatentTensor, cfg: &CapacityConfig) -> Result<RandomizedStream> {
    Codec::new(*cfg).recover(z)
}

pub fn reduce_payload(sd: &DiffusedWatermark, cfg: &CapacityConfig) -> Result<WatermarkPayload> {
    Codec::new(*cfg).reduce(sd)
}

/// Draws N(0, 1) candidates until one lands in `(ppf(i/2^l), ppf((i+1)/2^l)]`.
///
/// Independent of the inverse-cdf path apart from the cell edges; used as a
/// distributional reference for [`sample_element`].
pub fn rejection_sample_reference<R: Rng + ?Sized>(i: u32, l: u32, rng: &mut R) -> Result<f64> {
    if l == 0 || l > 31 || i >= (1u32 << l) {
        return Err(Error::usage(format!("interval {i} out of range for l = {l}")));
    }
    let cells = (1u64 << l) as f64;
    let lower = normal::ppf(i as f64 / cells);
    let upper = normal::ppf((i + 1) as f64 / cells);
    for _ in 0..REJECTION_ITERATION_CAP {
        let x: f64 = rng.sample(StandardNormal);
        if x > lower && x <= upper {
            return Ok(x);
        }
    }
    Err(Error::NumericDomain(format!(
        "rejection sampler found no draw in cell {i} after {REJECTION_ITERATION_CAP} tries"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn cfg(c: usize, h: usize, w: usize, fc: usize, fhw: usize, l: u32) -> CapacityConfig {
        CapacityConfig::new(c, h, w, fc, fhw, l).unwrap()
    }

    #[test]
    fn packed_vote_matches_byte_vote() {
        let mut rng = StdRng::seed_from_u64(21);
        // R = 64, 128, 27, 1
        for c in [cfg(4, 64, 64, 1, 8, 1), cfg(2, 32, 32, 2, 8, 1), cfg(3, 12, 12, 3, 3, 2), cfg(1, 4, 4, 1, 1, 1)] {
            let t = Tiling::new(&c);
            let n = c.stream_bits();
            let m: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let ks: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let want = t.vote_copy_major(&t.to_copy_major(&m), Some(&t.to_copy_major(&ks)));
            let got: Vec<u8> = t.vote_packed(&t.pack_bit_major(&m), &t.pack_bit_major(&ks)).collect();
            assert_eq!(got, want, "{c}");
        }
    }

    #[test]
    fn default_diffusion_replicates_each_bit_64_times() {
        let cfg = CapacityConfig::default();
        let mut rng = StdRng::seed_from_u64(3);
        let s = WatermarkPayload::random(256, &mut rng);
        let sd = diffuse_payload(&s, &cfg).unwrap();
        assert_eq!(sd.len(), 16384);
        let tiling = Tiling::new(&cfg);
        let mut seen = vec![0usize; 256];
        for (idx, &pos) in tiling.positions().iter().enumerate() {
            assert_eq!(sd.bits()[pos as usize], s.bits()[idx % 256]);
            seen[idx % 256] += 1;
        }
        assert!(seen.iter().all(|&n| n == 64));
        let ones = sd.bits().iter().filter(|&&b| b == 1).count();
        let payload_ones = s.bits().iter().filter(|&&b| b == 1).count();
        assert_eq!(ones, 64 * payload_ones);
    }

    #[test]
    fn diffusion_follows_modulo_tiling() {
        let cfg = cfg(4, 8, 8, 2, 2, 2);
        let (l, cb, hb, wb) = cfg.tile_shape();
        let mut rng = StdRng::seed_from_u64(9);
        let s = WatermarkPayload::random(cfg.payload_bits(), &mut rng);
        let sd = diffuse_payload(&s, &cfg).unwrap();
        for ch in 0..4 {
            for y in 0..8 {
                for x in 0..8 {
                    for b in 0..l {
                        let elem = (ch * 8 + y) * 8 + x;
                        let want = s.bits()[((b * cb + ch % cb) * hb + y % hb) * wb + x % wb];
                        assert_eq!(sd.bits()[elem * l + b], want);
                    }
                }
            }
        }
    }

    #[test]
    fn unit_replication_is_identity() {
        let cfg = cfg(2, 3, 5, 1, 1, 1);
        let s = WatermarkPayload::random(30, &mut StdRng::seed_from_u64(1));
        assert_eq!(diffuse_payload(&s, &cfg).unwrap().bits(), s.bits());
    }

    #[test]
    fn single_bit_payload_fills_everything() {
        let cfg = cfg(2, 2, 2, 2, 2, 1);
        let s = WatermarkPayload::from_bits(vec![1]).unwrap();
        assert_eq!(diffuse_payload(&s, &cfg).unwrap().bits(), &[1u8; 8]);
    }

    #[test]
    fn diffuse_rejects_wrong_length() {
        let s = WatermarkPayload::from_bits(vec![0; 255]).unwrap();
        assert!(matches!(
            diffuse_payload(&s, &CapacityConfig::default()),
            Err(Error::LengthMismatch { expected: 256, actual: 255 })
        ));
        assert!(WatermarkPayload::from_bits(vec![0, 2]).is_err());
    }

    #[test]
    fn randomize_all_zero_gives_keystream() {
        let key = KeyMaterial::new([5; 32], [6; 12]);
        let zero = DiffusedWatermark::from_bits(vec![0; 1000]).unwrap();
        let m = randomize(&zero, &key);
        assert_eq!(m.bits(), &keystream_bits(&key, 1000)[..]);
        let zero_m = RandomizedStream::from_bits(vec![0; 1000]).unwrap();
        assert_eq!(derandomize(&zero_m, &key).bits(), m.bits());
    }

    #[test]
    fn keystream_bits_are_msb_first() {
        let key = KeyMaterial::new([0; 32], [0; 12]);
        // first RFC 8439 A.1 keystream byte is 0x76 = 0b0111_0110
        assert_eq!(&keystream_bits(&key, 8)[..], &[0, 1, 1, 1, 0, 1, 1, 0]);
    }

    #[test]
    fn randomize_is_an_involution() {
        let mut rng = StdRng::seed_from_u64(11);
        let key = KeyMaterial::from_any_rng(&mut rng);
        let sd = DiffusedWatermark::from_bits((0..4096).map(|_| rng.random_range(0..2)).collect()).unwrap();
        let m = randomize(&sd, &key);
        assert_ne!(m.bits(), sd.bits());
        assert_eq!(derandomize(&m, &key), sd);
    }

    #[test]
    fn wrong_key_decrypts_to_noise() {
        let mut rng = StdRng::seed_from_u64(12);
        let n = 16384;
        let sd = DiffusedWatermark::from_bits((0..n).map(|_| rng.random_range(0..2)).collect()).unwrap();
        for _ in 0..20 {
            let k1 = KeyMaterial::from_any_rng(&mut rng);
            let k2 = KeyMaterial::from_any_rng(&mut rng);
            let back = derandomize(&randomize(&sd, &k1), &k2);
            let agree = back.bits().iter().zip(sd.bits()).filter(|(a, b)| a == b).count() as f64;
            let sigma = (n as f64 * 0.25).sqrt();
            assert!((agree - n as f64 / 2.0).abs() < 3.0 * sigma + 1.0, "agreement {agree}");
        }
    }

    #[test]
    fn sample_element_examples() {
        // l=1, i=1, u -> 0: ppf(0.5) = 0
        assert_eq!(sample_element(1, 1, UniformDraw::clamped(0.0)), 0.0);
        let z = sample_element(0, 1, UniformDraw::new(0.5).unwrap());
        assert!((z as f64 + 0.674_489_750_196_081_7).abs() < 1e-7);
        let z = sample_element(3, 2, UniformDraw::new(0.5).unwrap());
        assert!((z as f64 - 1.150_349_380_376_008).abs() < 1e-7);
    }

    #[test]
    fn recover_element_examples() {
        assert_eq!(recover_element(0.0, 1), 1);
        assert_eq!(recover_element(-0.674_490, 1), 0);
        assert_eq!(recover_element(3.0, 2), 3);
        assert_eq!(recover_element(f32::MAX, 3), 7);
        assert_eq!(recover_element(-f32::MAX, 3), 0);
    }

    #[test]
    fn uniform_draw_domain() {
        assert!(UniformDraw::new(0.0).is_err());
        assert!(UniformDraw::new(1.0).is_err());
        assert!(UniformDraw::new(f64::NAN).is_err());
        assert_eq!(UniformDraw::new(1e-300).unwrap().value(), U_MIN);
        assert_eq!(UniformDraw::clamped(1.0).value(), 1.0 - U_MIN);
    }

    #[test]
    fn sample_with_rejects_exhausted_draws() {
        let cfg = cfg(1, 2, 2, 1, 1, 1);
        let m = RandomizedStream::from_bits(vec![0, 1, 0, 1]).unwrap();
        let draws = vec![UniformDraw::new(0.5).unwrap(); 3];
        assert!(matches!(Codec::new(cfg).sample_with(&m, draws), Err(Error::NumericDomain(_))));
    }

    #[test]
    fn edge_draws_stay_in_their_cell() {
        for l in 1..=8u32 {
            for i in 0..(1u32 << l) {
                for u in [0.0, U_MIN, 1e-300, 1e-12, 0.5, 1.0 - 1e-12, 1.0 - U_MIN, 1.0] {
                    let z = sample_element(i, l, UniformDraw::clamped(u));
                    assert!(z.is_finite());
                    assert_eq!(recover_element(z, l), i, "l={l} i={i} u={u}");
                }
            }
        }
    }

    #[test]
    fn recover_rejects_wrong_shape() {
        let z = LatentTensor::new(1, 2, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(recover_integers(&z, &CapacityConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn reduce_uses_strict_majority() {
        let cfg = CapacityConfig::default();
        let codec = Codec::new(cfg);
        let tiling = codec.tiling();
        // payload bit 0 gets 33 ones, bit 1 gets exactly 32, everything else 0
        let mut bits = vec![0u8; cfg.stream_bits()];
        for r in 0..64 {
            if r < 33 {
                bits[tiling.positions()[r * 256] as usize] = 1;
            }
            if r < 32 {
                bits[tiling.positions()[r * 256 + 1] as usize] = 1;
            }
        }
        let s = codec.reduce(&DiffusedWatermark::from_bits(bits).unwrap()).unwrap();
        assert_eq!(s.bits()[0], 1);
        assert_eq!(s.bits()[1], 0);
        assert!(s.bits()[2..].iter().all(|&b| b == 0));
    }

    #[test]
    fn clean_diffuse_reduce_round_trip() {
        let cfg = CapacityConfig::default();
        let codec = Codec::new(cfg);
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..1000 {
            let s = WatermarkPayload::random(256, &mut rng);
            assert_eq!(codec.reduce(&codec.diffuse(&s).unwrap()).unwrap(), s);
        }
    }

    #[test]
    fn payload_hex() {
        let s = WatermarkPayload::from_bits(vec![1, 0, 1, 1, 0, 0, 0, 0, 1, 1]).unwrap();
        assert_eq!(s.to_hex(), "b0c0");
        assert_eq!(WatermarkPayload::from_hex("b0c0", 10).unwrap(), s);
        assert!(matches!(WatermarkPayload::from_hex("b0c1", 10), Err(Error::Format(_))));
        assert!(matches!(WatermarkPayload::from_hex("b0", 10), Err(Error::LengthMismatch { .. })));
        assert!(matches!(WatermarkPayload::from_hex("zz", 8), Err(Error::Format(_))));
    }

    #[test]
    fn rejection_reference_respects_interval() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..1000 {
            assert!(rejection_sample_reference(0, 1, &mut rng).unwrap() <= 0.0);
        }
        assert!(rejection_sample_reference(4, 2, &mut rng).is_err());
    }

    #[test]
    fn rejection_reference_half_normal_mean() {
        let mut rng = StdRng::seed_from_u64(6);
        let n = 100_000;
        let mean = (0..n).map(|_| rejection_sample_reference(1, 1, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - normal::half_normal_mean()).abs() < 0.01, "mean {mean}");
    }
}
