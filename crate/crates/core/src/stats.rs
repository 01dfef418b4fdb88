//! Detection and traceability statistics.
//!
//! Under the null hypothesis (no watermark, or a different key) the extracted
//! payload bits are i.i.d. fair coins, so the number of bits matching a
//! reference payload is Binomial(k, 1/2). A latent is flagged when the match
//! count *exceeds* the threshold `tau`, which makes the false positive rate
//! exactly `P(Acc > tau) = I_{1/2}(tau + 1, k - tau)`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::codec::{keystream_bits, Codec, WatermarkPayload};
use crate::config::CapacityConfig;
use crate::error::{Error, Result};
use crate::key::KeyMaterial;
use crate::latent::LatentTensor;
use crate::special::regularized_incomplete_beta;

/// Number of positions where `a` and `b` agree.
pub fn acc_count(a: &WatermarkPayload, b: &WatermarkPayload) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), actual: b.len() });
    }
    Ok(a.bits().iter().zip(b.bits()).filter(|(x, y)| x == y).count())
}

/// `P(Acc > tau)` for `Acc ~ Binomial(k, 1/2)`.
pub fn fpr_detection(tau: usize, k: usize) -> Result<f64> {
    if tau > k {
        return Err(Error::usage(format!("threshold {tau} exceeds payload length {k}")));
    }
    if tau == k {
        return Ok(0.0);
    }
    Ok(regularized_incomplete_beta((tau + 1) as f64, (k - tau) as f64, 0.5))
}

/// Probability that at least one of `n_users` independent tests with
/// per-test rate `fpr` fires: `1 - (1 - fpr)^N`.
pub fn compound_fpr(fpr: f64, n_users: usize) -> f64 {
    if n_users == 1 {
        return fpr;
    }
    -(n_users as f64 * (-fpr).ln_1p()).exp_m1()
}

/// First-order approximation `N * fpr` of [`compound_fpr`].
pub fn compound_fpr_approx(fpr: f64, n_users: usize) -> f64 {
    n_users as f64 * fpr
}

/// Calibrated threshold for k-bit payloads checked against `n_users` references.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionPolicy {
    pub k: usize,
    pub target_fpr: f64,
    pub n_users: usize,
    pub tau: usize,
}

impl DetectionPolicy {
    /// Flags a match count strictly above `tau`.
    pub fn is_detected(&self, acc: usize) -> bool {
        acc > self.tau
    }

    /// Compound false positive rate actually achieved at `tau`.
    pub fn achieved_fpr(&self) -> f64 {
        compound_fpr(fpr_detection(self.tau, self.k).unwrap_or(0.0), self.n_users)
    }
}

/// Minimal `tau` whose compound false positive rate is at most `target_fpr`.
pub fn solve_threshold(k: usize, target_fpr: f64, n_users: usize) -> Result<DetectionPolicy> {
    if k == 0 {
        return Err(Error::usage("payload length must be positive"));
    }
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(Error::usage(format!("target FPR {target_fpr} outside (0, 1)")));
    }
    if n_users == 0 {
        return Err(Error::usage("registry must contain at least one user"));
    }
    let rate = |tau: usize| compound_fpr(fpr_detection(tau, k).expect("tau <= k"), n_users);
    // the compound rate is non-increasing in tau
    let (mut lo, mut hi) = (0usize, k);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if rate(mid) <= target_fpr {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    if lo == k {
        return Err(Error::Infeasible(format!(
            "target FPR {target_fpr:e} over {n_users} user(s) needs more than {k} payload bits"
        )));
    }
    Ok(DetectionPolicy { k, target_fpr, n_users, tau: lo })
}

/// Outcome of a detection or trace query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchReport {
    pub acc: usize,
    pub tau: usize,
    pub k: usize,
    pub detected: bool,
    pub traced_user: Option<u64>,
}

impl fmt::Display for MatchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "acc={}", self.acc)?;
        writeln!(f, "k={}", self.k)?;
        writeln!(f, "tau={}", self.tau)?;
        writeln!(f, "bit_accuracy={:.6}", self.acc as f64 / self.k as f64)?;
        writeln!(f, "detected={}", self.detected)?;
        match self.traced_user {
            Some(id) => writeln!(f, "traced_user={id}"),
            None => writeln!(f, "traced_user=none"),
        }
    }
}

impl FromStr for MatchReport {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut acc = None;
        let mut tau = None;
        let mut k = None;
        let mut detected = None;
        let mut traced_user = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::format(format!("expected key=value, got {line:?}")))?;
            let bad = || Error::format(format!("bad value for {key}: {value:?}"));
            match key {
                "acc" => acc = Some(value.parse().map_err(|_| bad())?),
                "tau" => tau = Some(value.parse().map_err(|_| bad())?),
                "k" => k = Some(value.parse().map_err(|_| bad())?),
                "detected" => detected = Some(value.parse().map_err(|_| bad())?),
                "traced_user" if value == "none" => traced_user = None,
                "traced_user" => traced_user = Some(value.parse().map_err(|_| bad())?),
                _ => {}
            }
        }
        let missing = |what: &str| Error::format(format!("report is missing {what}"));
        Ok(MatchReport {
            acc: acc.ok_or_else(|| missing("acc"))?,
            tau: tau.ok_or_else(|| missing("tau"))?,
            k: k.ok_or_else(|| missing("k"))?,
            detected: detected.ok_or_else(|| missing("detected"))?,
            traced_user,
        })
    }
}

fn check_policy(policy: &DetectionPolicy, cfg: &CapacityConfig) -> Result<()> {
    if policy.k != cfg.payload_bits() {
        return Err(Error::usage(format!(
            "policy is for {}-bit payloads, configuration carries {}",
            policy.k,
            cfg.payload_bits()
        )));
    }
    Ok(())
}

/// Extracts under `key` and compares against the reference payload `s`.
pub fn detect(
    z: &LatentTensor,
    key: &KeyMaterial,
    s: &WatermarkPayload,
    codec: &Codec,
    policy: &DetectionPolicy,
) -> Result<MatchReport> {
    check_policy(policy, codec.config())?;
    let extracted = codec.extract(z, key)?;
    let acc = acc_count(s, &extracted)?;
    Ok(MatchReport { acc, tau: policy.tau, k: policy.k, detected: policy.is_detected(acc), traced_user: None })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    pub user_id: u64,
    pub payload: WatermarkPayload,
    pub key: KeyMaterial,
}

/// Users with their watermark payloads and keys.
///
/// Text form: one `user_id,payload_hex,key_hex,nonce_hex` record per line;
/// blank lines and `#` comments are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRegistry {
    entries: Vec<RegistryEntry>,
}

impl UserRegistry {
    pub fn new(entries: Vec<RegistryEntry>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !ids.insert(e.user_id) {
                return Err(Error::usage(format!("duplicate user id {}", e.user_id)));
            }
        }
        if let Some(first) = entries.first() {
            let k = first.payload.len();
            if let Some(bad) = entries.iter().find(|e| e.payload.len() != k) {
                return Err(Error::LengthMismatch { expected: k, actual: bad.payload.len() });
            }
        }
        Ok(UserRegistry { entries })
    }

    /// `n` users with ids `0..n`, independent random payloads and keys.
    pub fn generate<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Self {
        let entries = (0..n as u64)
            .map(|user_id| RegistryEntry {
                user_id,
                payload: WatermarkPayload::random(k, rng),
                key: KeyMaterial::from_any_rng(rng),
            })
            .collect();
        UserRegistry { entries }
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, user_id: u64) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| e.user_id == user_id)
    }

    pub fn parse(text: &str, k: usize) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let ctx = |e: Error| Error::format(format!("registry line {}: {e}", lineno + 1));
            if fields.len() != 4 {
                return Err(ctx(Error::format("expected user_id,payload,key,nonce")));
            }
            let user_id = fields[0].parse().map_err(|_| ctx(Error::format("bad user id")))?;
            let payload = WatermarkPayload::from_hex(fields[1], k).map_err(ctx)?;
            let key = KeyMaterial::from_hex(fields[2], fields[3]).map_err(ctx)?;
            entries.push(RegistryEntry { user_id, payload, key });
        }
        UserRegistry::new(entries)
    }
}

impl fmt::Display for UserRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# user_id,payload,key,nonce")?;
        for e in &self.entries {
            writeln!(f, "{},{},{},{}", e.user_id, e.payload.to_hex(), e.key.key_hex(), e.key.nonce_hex())?;
        }
        Ok(())
    }
}

struct PreparedUser {
    user_id: u64,
    payload: Vec<u8>,
    keystream: Vec<u64>,
}

/// A registry with every user's keystream expanded once and packed bit-major,
/// so tracing a latent costs one recovery plus one packed vote per user.
pub struct Tracer {
    codec: Codec,
    policy: DetectionPolicy,
    users: Vec<PreparedUser>,
}

impl Tracer {
    pub fn new(registry: &UserRegistry, codec: Codec, policy: DetectionPolicy) -> Result<Self> {
        if registry.is_empty() {
            return Err(Error::usage("registry is empty"));
        }
        check_policy(&policy, codec.config())?;
        if policy.n_users != registry.len() {
            return Err(Error::usage(format!(
                "policy was solved for {} users, registry holds {}",
                policy.n_users,
                registry.len()
            )));
        }
        let n = codec.config().stream_bits();
        let users = registry
            .entries()
            .iter()
            .map(|e| {
                if e.payload.len() != policy.k {
                    return Err(Error::LengthMismatch { expected: policy.k, actual: e.payload.len() });
                }
                Ok(PreparedUser {
                    user_id: e.user_id,
                    payload: e.payload.bits().to_vec(),
                    keystream: codec.tiling().pack_bit_major(&keystream_bits(&e.key, n)),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Tracer { codec, policy, users })
    }

    pub fn policy(&self) -> &DetectionPolicy {
        &self.policy
    }

    /// Match count against every user, in registry order.
    pub fn scores(&self, z: &LatentTensor) -> Result<Vec<(u64, usize)>> {
        let m = self.codec.recover(z)?;
        let tiling = self.codec.tiling();
        let m = tiling.pack_bit_major(m.bits());
        Ok(self
            .users
            .iter()
            .map(|u| {
                let voted = tiling.vote_packed(&m, &u.keystream);
                let acc = voted.zip(&u.payload).filter(|(a, b)| a == *b).count();
                (u.user_id, acc)
            })
            .collect())
    }

    pub fn trace(&self, z: &LatentTensor) -> Result<MatchReport> {
        let (best_user, best_acc) = self
            .scores(z)?
            .into_iter()
            .reduce(|best, cur| if cur.1 > best.1 || (cur.1 == best.1 && cur.0 < best.0) { cur } else { best })
            .expect("registry is nonempty");
        let detected = self.policy.is_detected(best_acc);
        Ok(MatchReport {
            acc: best_acc,
            tau: self.policy.tau,
            k: self.policy.k,
            detected,
            traced_user: detected.then_some(best_user),
        })
    }
}

/// Attributes `z` to the best-matching registry user, if any clears `tau`.
pub fn trace(
    z: &LatentTensor,
    registry: &UserRegistry,
    cfg: &CapacityConfig,
    policy: &DetectionPolicy,
) -> Result<MatchReport> {
    Tracer::new(registry, Codec::new(*cfg), *policy)?.trace(z)
}

/// Summary statistics of two samples for a pooled-variance t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestInput {
    pub mean_s: f64,
    pub mean_0: f64,
    pub sd_s: f64,
    pub sd_0: f64,
    pub n_s: usize,
    pub n_0: usize,
}

/// `|mean_s - mean_0| / sqrt(S* (1/n_s + 1/n_0))` with pooled variance `S*`.
///
/// Zero pooled variance gives 0 for equal means and `+inf` otherwise.
pub fn two_sample_t(x: &TTestInput) -> Result<f64> {
    if x.n_s < 2 || x.n_0 < 2 {
        return Err(Error::usage("each sample needs at least two observations"));
    }
    if !(x.sd_s >= 0.0 && x.sd_0 >= 0.0) {
        return Err(Error::usage("standard deviations must be non-negative"));
    }
    let (ns, n0) = (x.n_s as f64, x.n_0 as f64);
    let pooled = ((ns - 1.0) * x.sd_s * x.sd_s + (n0 - 1.0) * x.sd_0 * x.sd_0) / (ns + n0 - 2.0);
    let diff = (x.mean_s - x.mean_0).abs();
    if pooled == 0.0 {
        return Ok(if diff == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(diff / (pooled * (1.0 / ns + 1.0 / n0)).sqrt())
}

/// Two-sided critical value of Student's t with `df` degrees of freedom.
pub fn t_critical(alpha: f64, df: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) || df == 0 {
        return Err(Error::usage("need 0 < alpha < 1 and df >= 1"));
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::usage(e.to_string()))?;
    Ok(dist.inverse_cdf(1.0 - alpha / 2.0))
}
