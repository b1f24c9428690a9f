//! Fluctuations of the conditional maximum M_n - x and the regime picture.
//!
//! Writing s = |Delta|, b = b_n and psi = psi(x), the scale of M_n - x is set
//! by how s compares with b and psi:
//!
//! | band                     | regime              | statistic           | reference                        |
//! |--------------------------|---------------------|---------------------|----------------------------------|
//! | s <= b / rho             | `StableNegH`        | (M - x + c) / b     | (s U - (S_{n-1} - c)) / b        |
//! | b / rho < s < rho b      | `CriticalStable(a)` | (M - x + c) / b     | a U - (S_{n-1} - c) / b          |
//! | rho b <= s <= psi / rho  | `Uniform`           | (M - x) / s         | U[0, 1]                          |
//! | psi / rho < s < rho psi  | `CriticalResidual(a)` | (M - x) / psi     | Lambda given Lambda <= a         |
//! | s >= rho psi or s = inf  | `ResidualLambda`    | (M - x) / psi       | Lambda                           |
//!
//! c is the centering (n - 1) mean and Lambda is the residual-life limit:
//! 1 - (1 + u)^{-alpha} for Frechet laws, 1 - e^{-u} for Gumbel laws.

use rand::Rng;
use serde::Serialize;

use crate::dist::{CounterexampleParams, MdaClass, TailedDistribution};
use crate::error::{Error, Result};
use crate::order_swap::swap_max_last_in_place;
use crate::rng::{chunk_sizes, domain, run_chunks, stream};
use crate::sampler::{rejection_conditional, ConditioningEvent, ProposalKind, SamplerOptions};
use crate::thresholds::{b_n, NormalizationPlan};

pub use crate::stats::{ks_critical, ks_one_sample, ks_two_sample};

pub const DEFAULT_RHO: f64 = 10.0;
pub const DEFAULT_KS_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "a")]
pub enum Regime {
    StableNegH,
    CriticalStable(f64),
    Uniform,
    CriticalResidual(f64),
    ResidualLambda,
}

impl Regime {
    pub fn name(&self) -> String {
        match self {
            Regime::StableNegH => "StableNegH".into(),
            Regime::CriticalStable(a) => format!("CriticalStable({a:.4})"),
            Regime::Uniform => "Uniform".into(),
            Regime::CriticalResidual(a) => format!("CriticalResidual({a:.4})"),
            Regime::ResidualLambda => "ResidualLambda".into(),
        }
    }

    fn uses_stable_scale(&self) -> bool {
        matches!(self, Regime::StableNegH | Regime::CriticalStable(_))
    }
}

/// Scales b_n (0 for n = 1) and psi(x) used by the classification.
pub fn plan_for(dist: &TailedDistribution, n: usize, x: f64) -> Result<NormalizationPlan> {
    let (b, centering) = if n >= 2 { b_n(dist, n)? } else { (0.0, 0.0) };
    let psi_x = dist.residual_scale_psi(x)?;
    Ok(NormalizationPlan { b_n: b, centering, psi_x })
}

/// Place |Delta| in the band picture; `AmbiguousScale` when the b_n bands and
/// the psi bands overlap at this |Delta|.
pub fn classify_regime(dist: &TailedDistribution, n: usize, event: &ConditioningEvent, rho: f64) -> Result<Regime> {
    if !(rho > 1.0) {
        return Err(Error::param("rho", "must exceed 1"));
    }
    let plan = plan_for(dist, n, event.x)?;
    classify_with_plan(&plan, event.delta_len, rho)
}

pub fn classify_with_plan(plan: &NormalizationPlan, delta_len: f64, rho: f64) -> Result<Regime> {
    if delta_len.is_infinite() {
        return Ok(Regime::ResidualLambda);
    }
    let (b, psi, s) = (plan.b_n, plan.psi_x, delta_len);
    #[derive(PartialEq)]
    enum Side {
        Low,
        Critical,
        High,
    }
    let b_side = if s <= b / rho {
        Side::Low
    } else if s < rho * b {
        Side::Critical
    } else {
        Side::High
    };
    let psi_side = if s >= rho * psi {
        Side::High
    } else if s > psi / rho {
        Side::Critical
    } else {
        Side::Low
    };
    match (b_side, psi_side) {
        (Side::Low, Side::Low) => Ok(Regime::StableNegH),
        (Side::Critical, Side::Low) => Ok(Regime::CriticalStable(s / b)),
        (Side::High, Side::Low) => Ok(Regime::Uniform),
        (Side::High, Side::Critical) => Ok(Regime::CriticalResidual(s / psi)),
        (Side::High, Side::High) => Ok(Regime::ResidualLambda),
        _ => Err(Error::AmbiguousScale { delta: s, b_n: b, psi }),
    }
}

/// Closed-form reference laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ReferenceCdf {
    Uniform,
    /// 1 - (1 + u)^{-alpha}, optionally conditioned to [0, a]
    Frechet { alpha: f64, cap: Option<f64> },
    /// 1 - e^{-u}, optionally conditioned to [0, a]
    Gumbel { cap: Option<f64> },
}

impl ReferenceCdf {
    pub fn cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let base = |t: f64| match self {
            ReferenceCdf::Uniform => t.min(1.0),
            ReferenceCdf::Frechet { alpha, .. } => 1.0 - (1.0 + t).powf(-alpha),
            ReferenceCdf::Gumbel { .. } => -(-t).exp_m1(),
        };
        match self {
            ReferenceCdf::Uniform => base(u),
            ReferenceCdf::Frechet { cap, .. } | ReferenceCdf::Gumbel { cap } => match cap {
                None => base(u),
                Some(a) => (base(u.min(*a)) / base(*a)).min(1.0),
            },
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ReferenceCdf::Uniform => "U[0,1]".into(),
            ReferenceCdf::Frechet { alpha, cap: None } => format!("1-(1+u)^-{alpha}"),
            ReferenceCdf::Frechet { alpha, cap: Some(a) } => format!("1-(1+u)^-{alpha} on [0,{a}]"),
            ReferenceCdf::Gumbel { cap: None } => "1-exp(-u)".into(),
            ReferenceCdf::Gumbel { cap: Some(a) } => format!("1-exp(-u) on [0,{a}]"),
        }
    }
}

/// Either a simulated reference sample or a closed-form CDF.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Sample(Vec<f64>),
    Cdf(ReferenceCdf),
}

impl Reference {
    pub fn describe(&self, regime: &Regime) -> String {
        match self {
            Reference::Sample(v) => match regime {
                Regime::CriticalStable(a) => format!("simulated {a:.4} U - (S_(n-1) - c)/b_n, {} draws", v.len()),
                _ => format!("simulated (s U - (S_(n-1) - c))/b_n, {} draws", v.len()),
            },
            Reference::Cdf(c) => c.describe(),
        }
    }
}

fn residual_cdf(dist: &TailedDistribution, cap: Option<f64>) -> Result<ReferenceCdf> {
    match dist.mda_class() {
        MdaClass::Frechet => {
            let alpha = dist
                .tail_index()
                .ok_or_else(|| Error::MethodMismatch("Frechet law without a tail index".into()))?;
            Ok(ReferenceCdf::Frechet { alpha, cap })
        }
        MdaClass::Gumbel => Ok(ReferenceCdf::Gumbel { cap }),
        MdaClass::None => Err(Error::NoMdaClass),
    }
}

/// Scale dividing M_n - x in `regime`.
pub fn regime_scale(regime: &Regime, plan: &NormalizationPlan, delta_len: f64) -> f64 {
    match regime {
        Regime::StableNegH | Regime::CriticalStable(_) => plan.b_n,
        Regime::Uniform => delta_len,
        Regime::CriticalResidual(_) | Regime::ResidualLambda => plan.psi_x,
    }
}

/// Reference law for `regime`. Stable-type regimes are simulated as
/// (s U - (S_{n-1} - c)) / b_n with streams disjoint from conditional draws.
#[allow(clippy::too_many_arguments)]
pub fn reference_sample(
    regime: &Regime,
    dist: &TailedDistribution,
    n: usize,
    delta_len: f64,
    plan: &NormalizationPlan,
    batch: u64,
    seed: u64,
    workers: usize,
) -> Result<Reference> {
    match regime {
        Regime::StableNegH | Regime::CriticalStable(_) => {
            if n < 2 || !(plan.b_n > 0.0) {
                return Err(Error::param("n", "stable references need n >= 2"));
            }
            let a = match regime {
                Regime::CriticalStable(a) => *a,
                _ => delta_len / plan.b_n,
            };
            let sizes = chunk_sizes(batch, 4096);
            let parts = run_chunks(workers, sizes.len() as u64, |c| {
                let mut rng = stream(seed, domain::REFERENCE, c);
                (0..sizes[c as usize])
                    .map(|_| {
                        let s: f64 = (0..n - 1).map(|_| dist.sample(&mut rng)).sum();
                        let u: f64 = rng.gen();
                        a * u - (s - plan.centering) / plan.b_n
                    })
                    .collect::<Vec<f64>>()
            });
            Ok(Reference::Sample(parts.into_iter().flatten().collect()))
        }
        Regime::Uniform => Ok(Reference::Cdf(ReferenceCdf::Uniform)),
        Regime::ResidualLambda => Ok(Reference::Cdf(residual_cdf(dist, None)?)),
        Regime::CriticalResidual(a) => Ok(Reference::Cdf(residual_cdf(dist, Some(*a))?)),
    }
}

/// Conditional draws of the maximum.
#[derive(Debug, Clone)]
pub struct FluctSample {
    /// M_n - x per draw
    pub raw: Vec<f64>,
    /// sum of the other n - 1 coordinates of the swapped vector
    pub others: Vec<f64>,
    /// the regime statistic
    pub scaled: Vec<f64>,
    pub scale: f64,
    pub accept_rate: f64,
    pub proposal: ProposalKind,
}

/// Draw from the conditional law and return (M_n - x) scaled for `regime`.
#[allow(clippy::too_many_arguments)]
pub fn max_fluct_sample(
    dist: &TailedDistribution,
    n: usize,
    event: &ConditioningEvent,
    plan: &NormalizationPlan,
    regime: &Regime,
    batch: u64,
    seed: u64,
    opts: &SamplerOptions,
) -> Result<FluctSample> {
    let s = rejection_conditional(dist, n, event, batch, seed, opts)?;
    let scale = regime_scale(regime, plan, event.delta_len);
    let shift = if regime.uses_stable_scale() { plan.centering } else { 0.0 };
    let mut raw = Vec::with_capacity(s.len());
    let mut others = Vec::with_capacity(s.len());
    let mut w = vec![0.0; n];
    for v in s.vectors() {
        w.copy_from_slice(v);
        swap_max_last_in_place(&mut w)?;
        raw.push(w[n - 1] - event.x);
        others.push(w[..n - 1].iter().sum());
    }
    let scaled = raw.iter().map(|r| (r + shift) / scale).collect();
    Ok(FluctSample { raw, others, scaled, scale, accept_rate: s.acceptance_rate(), proposal: s.proposal })
}

#[derive(Debug, Clone, Copy)]
pub struct FluctOptions {
    pub batch: u64,
    pub ref_batch: u64,
    pub seed: u64,
    pub rho: f64,
    pub threshold: f64,
    pub sampler: SamplerOptions,
}

impl Default for FluctOptions {
    fn default() -> Self {
        FluctOptions {
            batch: 10_000,
            ref_batch: 10_000,
            seed: 0,
            rho: DEFAULT_RHO,
            threshold: DEFAULT_KS_THRESHOLD,
            sampler: SamplerOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeVerdict {
    pub dist: String,
    pub n: usize,
    pub x: f64,
    pub delta: f64,
    pub regime: Regime,
    pub regime_name: String,
    pub scale: f64,
    pub b_n: f64,
    pub psi_x: f64,
    pub reference: String,
    pub ks_stat: f64,
    pub threshold: f64,
    pub passed: bool,
    pub cond_samples: usize,
    /// 0 when the reference is a closed-form CDF
    pub ref_samples: usize,
    pub accept_rate: f64,
    pub seed: u64,
}

/// Classify (unless `regime` is given), simulate and compare with the reference.
pub fn verify_regime(
    dist: &TailedDistribution,
    n: usize,
    event: &ConditioningEvent,
    regime: Option<Regime>,
    opts: &FluctOptions,
) -> Result<(RegimeVerdict, FluctSample, Reference)> {
    let plan = plan_for(dist, n, event.x)?;
    let regime = match regime {
        Some(r) => r,
        None => classify_with_plan(&plan, event.delta_len, opts.rho)?,
    };
    let fs = max_fluct_sample(dist, n, event, &plan, &regime, opts.batch, opts.seed, &opts.sampler)?;
    let reference =
        reference_sample(&regime, dist, n, event.delta_len, &plan, opts.ref_batch, opts.seed, opts.sampler.workers)?;
    let (ks_stat, ref_samples) = match &reference {
        Reference::Sample(r) => (ks_two_sample(&fs.scaled, r)?, r.len()),
        Reference::Cdf(c) => (ks_one_sample(&fs.scaled, |u| c.cdf(u))?, 0),
    };
    let verdict = RegimeVerdict {
        dist: dist.spec().to_string(),
        n,
        x: event.x,
        delta: event.delta_len,
        regime,
        regime_name: regime.name(),
        scale: fs.scale,
        b_n: plan.b_n,
        psi_x: plan.psi_x,
        reference: reference.describe(&regime),
        ks_stat,
        threshold: opts.threshold,
        passed: ks_stat < opts.threshold,
        cond_samples: fs.scaled.len(),
        ref_samples,
        accept_rate: fs.accept_rate,
        seed: opts.seed,
    };
    Ok((verdict, fs, reference))
}

/// mu[x_k + c_k [lo, hi)] / mu[x_k + (0, c_k]] with x_k = d_k.
pub fn counterexample_mass_ratio(params: &CounterexampleParams, k: u64, window: (f64, f64)) -> Result<f64> {
    let (lo, hi) = window;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || hi < lo {
        return Err(Error::param("window", "need 0 <= lo <= hi <= 1"));
    }
    params.validate().map_err(|(k, m)| Error::param(k, m))?;
    let (x, c) = (params.d(k), params.c(k));
    let denom = params.tail(x) - params.tail(x + c);
    if !(denom > 0.0) {
        return Err(Error::ZeroNormalizer);
    }
    let num = params.tail(x + lo * c) - params.tail(x + hi * c);
    Ok(num.max(0.0) / denom)
}
