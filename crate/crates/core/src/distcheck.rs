//! Statistical self-test of distribution preservation: watermarked latent
//! components must be indistinguishable from N(0, 1), and the position of
//! each component inside its cell must be U(0, 1).

use std::fmt::Write as _;

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::codec::{recover_element, Codec, WatermarkPayload};
use crate::config::CapacityConfig;
use crate::error::{Error, Result};
use crate::gof::{ks_one_sample, KsResult};
use crate::key::KeyMaterial;
use crate::normal;
use crate::sweep::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistcheckPlan {
    pub config: CapacityConfig,
    pub embeds_per_run: usize,
    pub runs: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Fraction of runs that must not reject.
    pub required_pass_fraction: f64,
}

impl Default for DistcheckPlan {
    fn default() -> Self {
        DistcheckPlan {
            config: CapacityConfig::default(),
            embeds_per_run: 100,
            runs: 10,
            seed: 0,
            alpha: 0.01,
            required_pass_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistcheckRun {
    pub run: usize,
    pub samples: usize,
    pub normal: KsResult,
    pub residual: KsResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistcheckReport {
    pub plan: DistcheckPlan,
    pub runs: Vec<DistcheckRun>,
}

impl DistcheckReport {
    pub fn required_passes(&self) -> usize {
        (self.plan.required_pass_fraction * self.plan.runs as f64 - 1e-9).ceil() as usize
    }

    pub fn normal_passes(&self) -> usize {
        self.runs.iter().filter(|r| !r.normal.rejects(self.plan.alpha)).count()
    }

    pub fn residual_passes(&self) -> usize {
        self.runs.iter().filter(|r| !r.residual.rejects(self.plan.alpha)).count()
    }

    pub fn passed(&self) -> bool {
        self.normal_passes() >= self.required_passes() && self.residual_passes() >= self.required_passes()
    }

    pub fn to_dsv(&self) -> String {
        let p = &self.plan;
        let mut out = String::new();
        let _ = writeln!(out, "# gaussian-shading distcheck");
        let _ = writeln!(
            out,
            "# config={} embeds_per_run={} runs={} seed={} alpha={}",
            p.config, p.embeds_per_run, p.runs, p.seed, p.alpha
        );
        let _ = writeln!(
            out,
            "# normal: one-sample KS of latent values vs N(0,1); residual: KS of in-cell position vs U(0,1)"
        );
        let _ = writeln!(out, "run\tsamples\tks_normal\tp_normal\tnormal\tks_residual\tp_residual\tresidual");
        let verdict = |r: &KsResult| if r.rejects(p.alpha) { "reject" } else { "pass" };
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6e}\t{:.6}\t{}\t{:.6e}\t{:.6}\t{}",
                r.run,
                r.samples,
                r.normal.statistic,
                r.normal.p_value,
                verdict(&r.normal),
                r.residual.statistic,
                r.residual.p_value,
                verdict(&r.residual)
            );
        }
        let _ = writeln!(
            out,
            "# normal_passes={}/{} residual_passes={}/{} required={} result={}",
            self.normal_passes(),
            p.runs,
            self.residual_passes(),
            p.runs,
            self.required_passes(),
            if self.passed() { "PASS" } else { "FAIL" }
        );
        out
    }
}

/// Pooled latent values and in-cell residuals `2^l cdf(z) - i` for `embeds`
/// random payload/key pairs.
pub fn pooled_samples(codec: &Codec, embeds: usize, rng: &mut StdRng) -> Result<(Vec<f64>, Vec<f64>)> {
    let cfg = codec.config();
    let l = cfg.bits_per_element();
    let cells = (1u64 << l) as f64;
    let mut values = Vec::with_capacity(embeds * cfg.elements());
    let mut residuals = Vec::with_capacity(embeds * cfg.elements());
    for _ in 0..embeds {
        let payload = WatermarkPayload::random(cfg.payload_bits(), rng);
        let key = KeyMaterial::from_any_rng(rng);
        let z = codec.embed(&payload, &key, rng)?;
        for &v in z.values() {
            let i = recover_element(v, l);
            values.push(v as f64);
            residuals.push(cells * normal::cdf(v as f64) - i as f64);
        }
    }
    Ok((values, residuals))
}

pub fn run_distcheck(plan: &DistcheckPlan) -> Result<DistcheckReport> {
    if plan.runs == 0 || plan.embeds_per_run == 0 {
        return Err(Error::usage("distcheck needs runs >= 1 and embeds >= 1"));
    }
    let codec = Codec::new(plan.config);
    let mut runs = Vec::with_capacity(plan.runs);
    for run in 0..plan.runs {
        let mut rng = StdRng::seed_from_u64(derive_seed(plan.seed, run as u64));
        let (values, residuals) = pooled_samples(&codec, plan.embeds_per_run, &mut rng)?;
        runs.push(DistcheckRun {
            run,
            samples: values.len(),
            normal: ks_one_sample(&values, normal::cdf)?,
            residual: ks_one_sample(&residuals, |x| x.clamp(0.0, 1.0))?,
        });
    }
    Ok(DistcheckReport { plan: *plan, runs })
}
