//! Sum-tail probabilities, the density-based TV decomposition, ratio scans
//! and the product-limit check on the small coordinates.

use serde::Serialize;

use crate::dist::TailedDistribution;
use crate::error::{Error, Result};
use crate::lattice::{convolve, convolve_n, exact_sum_probability, Pmf, DEFAULT_SUPPORT_CAP};
use crate::order_swap::swap_max_last_in_place;
use crate::rng::{domain, run_chunks, stream};
use crate::sampler::{
    count_in_window, rejection_conditional, rejection_fixed_budget, ConditioningEvent, ProposalKind, SamplerOptions,
};
use crate::stats::{ks_one_sample, ks_two_sample, spearman};

/// Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    /// number of proposals
    pub samples: u64,
    pub seed: u64,
    pub workers: usize,
    pub proposal: ProposalKind,
}

impl McOptions {
    pub fn new(samples: u64, seed: u64) -> McOptions {
        McOptions { samples, seed, workers: 1, proposal: ProposalKind::Auto }
    }

    fn sampler(&self) -> SamplerOptions {
        SamplerOptions { workers: self.workers, proposal: self.proposal, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Exact,
    Mc(McOptions),
}

/// A probability with its standard error (0 when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub exact: bool,
}

pub const MIN_MC_SAMPLES: u64 = 1000;

/// P[S_n in x + Delta].
pub fn sum_tail(dist: &TailedDistribution, n: usize, event: &ConditioningEvent, method: Method) -> Result<Estimate> {
    event.check(dist)?;
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    if n == 1 {
        return Ok(Estimate { value: dist.mass(event.x, event.delta_len), stderr: 0.0, exact: true });
    }
    match method {
        Method::Exact => {
            if !dist.is_lattice() {
                return Err(Error::MethodMismatch(format!("exact sums need a lattice law, got {}", dist.spec())));
            }
            let value = exact_sum_probability(dist, n, event, DEFAULT_SUPPORT_CAP)?;
            Ok(Estimate { value, stderr: 0.0, exact: true })
        }
        Method::Mc(o) => {
            if o.samples < MIN_MC_SAMPLES {
                return Err(Error::param("samples", format!("need at least {MIN_MC_SAMPLES}")));
            }
            let s = rejection_fixed_budget(dist, n, event, o.samples, o.seed, &o.sampler())?;
            let (value, stderr) = s.event_probability(dist);
            Ok(Estimate { value, stderr, exact: false })
        }
    }
}

/// The two terms of int |f1 - f2| d mu^n, where
/// f1 = 1{S_n in x + Delta} / P[S_n in x + Delta] and f2 = N / (n mu(x + Delta)).
///
/// With r = P[S_n in x + Delta] / (n mu(x + Delta)) >= 1/2 the L1 distance is
/// 2 (1 - r)^+ P[N = 1 | E] + 2 P[N = 0 | E]; for Delta infinite N = 0 on E
/// means M_n <= x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TvReport {
    pub n: usize,
    pub event: ConditioningEvent,
    pub sum_prob: f64,
    pub single_mass: f64,
    pub ratio: f64,
    pub term_ratio: f64,
    pub term_collective: f64,
    pub tv_l1: f64,
    pub tv_sup: f64,
    pub se_ratio: f64,
    pub se_collective: f64,
    /// covariance of the two term estimates (same batch)
    pub cov_terms: f64,
    pub se_tv_l1: f64,
    pub exact: bool,
    pub accept_rate: f64,
    pub proposals: u64,
    pub accepted: u64,
}

impl TvReport {
    pub fn se_tv_sup(&self) -> f64 {
        0.5 * self.se_tv_l1
    }
}

fn check_window(ratio: f64) -> Result<()> {
    if ratio > 0.5 {
        Ok(())
    } else {
        Err(Error::ValidityWindowViolated { ratio })
    }
}

/// Exact decomposition for a finite lattice law by restricted convolutions.
pub fn tv_decomposition_pmf(p: &Pmf, n: usize, event: &ConditioningEvent) -> Result<TvReport> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    let inside = |k: i64| event.contains(k as f64);
    let single = p.event_mass(event);
    let full = convolve_n(p, n, DEFAULT_SUPPORT_CAP)?;
    let sum_prob = full.event_mass(event);
    if !(sum_prob > 0.0) || !(single > 0.0) {
        return Err(Error::ZeroMassEvent);
    }
    let ratio = sum_prob / (n as f64 * single);
    check_window(ratio)?;
    let outside = p.restrict(|k| !inside(k));
    let window = p.restrict(inside);
    let rest = convolve_n(&outside, n - 1, DEFAULT_SUPPORT_CAP)?;
    let p_none = convolve(&rest, &outside).event_mass(event);
    let p_one = n as f64 * convolve(&rest, &window).event_mass(event);
    let term_ratio = 2.0 * (1.0 - ratio).max(0.0) * p_one / sum_prob;
    let term_collective = 2.0 * p_none / sum_prob;
    let tv_l1 = term_ratio + term_collective;
    Ok(TvReport {
        n,
        event: *event,
        sum_prob,
        single_mass: single,
        ratio,
        term_ratio,
        term_collective,
        tv_l1,
        tv_sup: 0.5 * tv_l1,
        se_ratio: 0.0,
        se_collective: 0.0,
        cov_terms: 0.0,
        se_tv_l1: 0.0,
        exact: true,
        accept_rate: 1.0,
        proposals: 0,
        accepted: 0,
    })
}

pub fn tv_decomposition(
    dist: &TailedDistribution,
    n: usize,
    event: &ConditioningEvent,
    method: Method,
) -> Result<TvReport> {
    event.check(dist)?;
    match method {
        Method::Exact => {
            let upper = match (dist.is_lattice(), dist.support_upper()) {
                (true, Some(u)) => u,
                _ => {
                    return Err(Error::MethodMismatch(format!(
                        "exact decomposition needs a lattice law with bounded support (e.g. zeta with kmax), got {}",
                        dist.spec()
                    )))
                }
            };
            if dist.loc() != 0.0 {
                return Err(Error::MethodMismatch("exact decomposition needs an unshifted lattice".into()));
            }
            let p = Pmf::from_dist(dist, upper as i64)?;
            tv_decomposition_pmf(&p, n, event)
        }
        Method::Mc(o) => tv_decomposition_mc(dist, n, event, &o),
    }
}

fn tv_decomposition_mc(dist: &TailedDistribution, n: usize, event: &ConditioningEvent, o: &McOptions) -> Result<TvReport> {
    if o.samples < MIN_MC_SAMPLES {
        return Err(Error::param("samples", format!("need at least {MIN_MC_SAMPLES}")));
    }
    let single = dist.mass(event.x, event.delta_len);
    if !(single > 0.0) {
        return Err(Error::ZeroMassEvent);
    }
    let s = rejection_fixed_budget(dist, n, event, o.samples, o.seed, &o.sampler())?;
    let (p_hat, se_p) = s.event_probability(dist);
    let nm = n as f64 * single;
    let ratio = p_hat / nm;
    check_window(ratio)?;
    let a = s.accepted as f64;
    let (mut c0, mut c1) = (0u64, 0u64);
    for v in s.vectors() {
        match count_in_window(event, v) {
            0 => c0 += 1,
            1 => c1 += 1,
            _ => {}
        }
    }
    let (pi0, pi1) = (c0 as f64 / a, c1 as f64 / a);
    let gap = (1.0 - ratio).max(0.0);
    let term_ratio = 2.0 * gap * pi1;
    let term_collective = 2.0 * pi0;
    let var_pi1 = pi1 * (1.0 - pi1) / a;
    let var_pi0 = pi0 * (1.0 - pi0) / a;
    // delta method; the ratio estimate contributes only while r < 1
    let d_ratio = if ratio < 1.0 { 2.0 * pi1 / nm } else { 0.0 };
    let var_ratio = 4.0 * gap * gap * var_pi1 + d_ratio * d_ratio * se_p * se_p;
    let var_coll = 4.0 * var_pi0;
    let cov_terms = -4.0 * gap * pi0 * pi1 / a;
    let var_l1 = (var_ratio + var_coll + 2.0 * cov_terms).max(0.0);
    let tv_l1 = term_ratio + term_collective;
    Ok(TvReport {
        n,
        event: *event,
        sum_prob: p_hat,
        single_mass: single,
        ratio,
        term_ratio,
        term_collective,
        tv_l1,
        tv_sup: 0.5 * tv_l1,
        se_ratio: var_ratio.sqrt(),
        se_collective: var_coll.sqrt(),
        cov_terms,
        se_tv_l1: var_l1.sqrt(),
        exact: false,
        accept_rate: s.acceptance_rate(),
        proposals: s.attempts,
        accepted: s.accepted,
    })
}

/// One row of a ratio scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioRow {
    pub n: usize,
    pub x: f64,
    pub prob_sum: f64,
    pub n_times_tail: f64,
    pub ratio: f64,
    pub abs_err: f64,
    pub stderr: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioScan {
    pub delta_len: f64,
    pub rows: Vec<RatioRow>,
}

/// P[S_n in x + Delta] / (n mu(x + Delta)) over the grid. `x_of(n)` supplies
/// the x values for each n so that grids can scale with thresholds.
pub fn ratio_scan<F>(dist: &TailedDistribution, n_list: &[usize], x_of: F, delta_len: f64, method: Method) -> Result<RatioScan>
where
    F: Fn(usize) -> Result<Vec<f64>>,
{
    let mut rows = Vec::new();
    for (i, &n) in n_list.iter().enumerate() {
        for (j, x) in x_of(n)?.into_iter().enumerate() {
            let event = ConditioningEvent::new(x, delta_len)?;
            let m = match method {
                Method::Mc(o) => Method::Mc(McOptions { seed: o.seed.wrapping_add(((i as u64) << 20) + j as u64), ..o }),
                e => e,
            };
            let est = sum_tail(dist, n, &event, m)?;
            let single = dist.mass(x, delta_len);
            let nt = n as f64 * single;
            if !(nt > 0.0) {
                return Err(Error::ZeroNormalizer);
            }
            let ratio = est.value / nt;
            rows.push(RatioRow {
                n,
                x,
                prob_sum: est.value,
                n_times_tail: nt,
                ratio,
                abs_err: (ratio - 1.0).abs(),
                stderr: est.stderr / nt,
                exact: est.exact,
            });
        }
    }
    Ok(RatioScan { delta_len, rows })
}

/// Spearman correlation of a pair of small coordinates with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCorrelation {
    pub i: usize,
    pub j: usize,
    pub rho: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalsReport {
    pub n: usize,
    pub event: ConditioningEvent,
    pub draws: usize,
    /// KS of coordinate i (1-based, i < n) of T v against mu
    pub ks: Vec<f64>,
    pub correlations: Vec<PairCorrelation>,
    /// largest |rho| / stderr over the pairs
    pub max_corr_z: f64,
    /// KS between the second-largest conditional coordinate and the maximum
    /// of n - 1 unconditioned draws; `None` for n = 1
    pub second_largest_ks: Option<f64>,
    pub accept_rate: f64,
}

/// Compare the first n - 1 coordinates of swapped conditional draws with mu.
pub fn smallest_marginals_check(
    dist: &TailedDistribution,
    n: usize,
    event: &ConditioningEvent,
    batch: u64,
    seed: u64,
    opts: &SamplerOptions,
) -> Result<MarginalsReport> {
    let s = rejection_conditional(dist, n, event, batch, seed, opts)?;
    let m = s.len();
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(m); n.saturating_sub(1)];
    let mut second = Vec::with_capacity(m);
    let mut w = vec![0.0; n];
    for v in s.vectors() {
        w.copy_from_slice(v);
        swap_max_last_in_place(&mut w)?;
        for (c, t) in cols.iter_mut().zip(&w) {
            c.push(*t);
        }
        if n > 1 {
            second.push(w[..n - 1].iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
    }
    let ks = cols.iter().map(|c| ks_one_sample(c, |t| dist.cdf(t))).collect::<Result<Vec<_>>>()?;
    let mut correlations = Vec::new();
    let se = 1.0 / ((m as f64 - 1.0).max(1.0)).sqrt();
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            let rho = spearman(&cols[i], &cols[j])?;
            correlations.push(PairCorrelation { i: i + 1, j: j + 1, rho, stderr: se });
        }
    }
    let max_corr_z = correlations.iter().map(|c| c.rho.abs() / c.stderr).fold(0.0, f64::max);
    let second_largest_ks = if n > 1 {
        let chunks: Vec<Vec<f64>> = run_chunks(opts.workers, m.div_ceil(4096) as u64, |c| {
            let mut rng = stream(seed, domain::REFERENCE, c);
            let len = 4096.min(m - c as usize * 4096);
            (0..len)
                .map(|_| (0..n - 1).map(|_| dist.sample(&mut rng)).fold(f64::NEG_INFINITY, f64::max))
                .collect()
        });
        let reference: Vec<f64> = chunks.into_iter().flatten().collect();
        Some(ks_two_sample(&second, &reference)?)
    } else {
        None
    };
    Ok(MarginalsReport {
        n,
        event: *event,
        draws: m,
        ks,
        correlations,
        max_corr_z,
        second_largest_ks,
        accept_rate: s.acceptance_rate(),
    })
}

/// MC estimate of P[S_n in x + Delta] by plain simulation, for cross-checks.
pub fn plain_mc_probability(dist: &TailedDistribution, n: usize, event: &ConditioningEvent, draws: u64, seed: u64, workers: usize) -> Estimate {
    let chunk = 1u64 << 16;
    let sizes = crate::rng::chunk_sizes(draws, chunk);
    let hits: u64 = run_chunks(workers, sizes.len() as u64, |c| {
        let mut rng = stream(seed, domain::PLAIN, c);
        let mut h = 0u64;
        for _ in 0..sizes[c as usize] {
            let s: f64 = (0..n).map(|_| dist.sample(&mut rng)).sum();
            if event.contains(s) {
                h += 1;
            }
        }
        h
    })
    .into_iter()
    .sum();
    let p = hits as f64 / draws as f64;
    Estimate { value: p, stderr: (p * (1.0 - p) / draws as f64).sqrt(), exact: false }
}
