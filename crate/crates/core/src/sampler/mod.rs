//! Draws from the conditional law of (X_1, ..., X_n) given S_n in x + Delta,
//! from the residual laws, and from the randomly-placed product proposal.

mod envelope;

pub use envelope::Envelope;

use rand::Rng;
use serde::Serialize;

use crate::dist::TailedDistribution;
use crate::error::{Error, Result};
use crate::rng::{chunk_sizes, domain, run_chunks, stream, StreamRng};

/// The event {x < S_n <= x + delta_len}; `delta_len` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditioningEvent {
    pub x: f64,
    pub delta_len: f64,
}

impl ConditioningEvent {
    pub fn new(x: f64, delta_len: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::param("x", "must be finite"));
        }
        if !(delta_len > 0.0) {
            return Err(Error::param("delta", "must be positive or inf"));
        }
        Ok(ConditioningEvent { x, delta_len })
    }

    pub fn tail(x: f64) -> Result<Self> {
        Self::new(x, f64::INFINITY)
    }

    pub fn is_tail(&self) -> bool {
        self.delta_len.is_infinite()
    }

    pub fn upper(&self) -> f64 {
        self.x + self.delta_len
    }

    pub fn contains(&self, s: f64) -> bool {
        s > self.x && s <= self.x + self.delta_len
    }

    /// Reject finite intervals narrower than the lattice span.
    pub fn check(&self, dist: &TailedDistribution) -> Result<()> {
        let span = dist.lattice_span();
        if span > 0.0 && self.delta_len < span {
            return Err(Error::DeltaBelowSpan { delta: self.delta_len, span });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SamplerKind {
    Rejection,
    Proposal,
}

/// Proposal used by the rejection sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProposalKind {
    /// i.i.d. draws from mu^n
    Plain,
    /// the mixture envelope of [`Envelope`]
    Envelope,
    /// n = 1 only: the residual law itself
    Direct,
    /// Envelope when it beats plain draws by a clear margin
    Auto,
}

#[derive(Debug, Clone, Copy)]
pub struct SamplerOptions {
    /// Proposal budget per batch.
    pub max_attempts: u64,
    pub workers: usize,
    pub proposal: ProposalKind,
    /// Accepted draws (or proposals, for fixed-budget runs) per chunk.
    pub chunk: u64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions { max_attempts: 100_000_000, workers: 1, proposal: ProposalKind::Auto, chunk: 1024 }
    }
}

/// A batch of n-vectors with provenance.
#[derive(Debug, Clone)]
pub struct ConditionalSample {
    pub n: usize,
    pub event: ConditioningEvent,
    pub kind: SamplerKind,
    pub proposal: ProposalKind,
    pub seed: u64,
    /// flat row-major storage, `n` coordinates per vector
    pub coords: Vec<f64>,
    pub attempts: u64,
    pub accepted: u64,
    /// envelope level L (1 for plain proposals)
    pub level: f64,
    /// 1-based position of the residual coordinate, for proposal draws
    pub big_positions: Option<Vec<usize>>,
}

impl ConditionalSample {
    pub fn len(&self) -> usize {
        self.coords.len().checked_div(self.n).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn vectors(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.n)
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.coords[i * self.n..(i + 1) * self.n]
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempts as f64
        }
    }

    /// Estimate of P[S_n in x + Delta] from the acceptance count, with its
    /// standard error. Exact (zero error) for direct draws.
    pub fn event_probability(&self, dist: &TailedDistribution) -> (f64, f64) {
        match self.proposal {
            ProposalKind::Direct => (dist.mass(self.event.x, self.event.delta_len), 0.0),
            _ => {
                let a = self.acceptance_rate();
                let se = (a * (1.0 - a) / self.attempts.max(1) as f64).sqrt();
                (a / self.level, se / self.level)
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Proposer {
    Plain,
    Direct,
    Envelope(Box<Envelope>),
}

impl Proposer {
    fn choose(dist: &TailedDistribution, n: usize, event: &ConditioningEvent, kind: ProposalKind) -> Result<Self> {
        match kind {
            ProposalKind::Plain => Ok(Proposer::Plain),
            ProposalKind::Direct => {
                if n == 1 {
                    Ok(Proposer::Direct)
                } else {
                    Err(Error::MethodMismatch("direct proposals need n = 1".into()))
                }
            }
            ProposalKind::Envelope => match Envelope::build(dist, n, event) {
                Some(e) => Ok(Proposer::Envelope(Box::new(e))),
                None if n == 1 => Ok(Proposer::Direct),
                None => Err(Error::MethodMismatch("no envelope for this event".into())),
            },
            ProposalKind::Auto => {
                if n == 1 {
                    return Ok(Proposer::Direct);
                }
                match Envelope::build(dist, n, event) {
                    Some(e) if e.log_level() > 4f64.ln() => Ok(Proposer::Envelope(Box::new(e))),
                    _ => Ok(Proposer::Plain),
                }
            }
        }
    }

    fn kind(&self) -> ProposalKind {
        match self {
            Proposer::Plain => ProposalKind::Plain,
            Proposer::Direct => ProposalKind::Direct,
            Proposer::Envelope(_) => ProposalKind::Envelope,
        }
    }

    fn level(&self) -> f64 {
        match self {
            Proposer::Envelope(e) => e.level(),
            _ => 1.0,
        }
    }

    /// One proposal: fills `v`, returns whether it is accepted.
    fn step(&self, dist: &TailedDistribution, event: &ConditioningEvent, rng: &mut StreamRng, v: &mut [f64]) -> bool {
        match self {
            Proposer::Plain => {
                for vi in v.iter_mut() {
                    *vi = dist.sample(rng);
                }
                event.contains(v.iter().sum())
            }
            Proposer::Direct => match dist.sample_between(event.x, event.upper(), rng) {
                Some(y) => {
                    v[0] = y;
                    true
                }
                None => false,
            },
            Proposer::Envelope(e) => {
                let a = e.propose(dist, rng, v);
                a > 0.0 && (a >= 1.0 || rng.gen::<f64>() < a)
            }
        }
    }
}

struct ChunkOut {
    coords: Vec<f64>,
    attempts: u64,
    accepted: u64,
    exhausted: bool,
}

/// Rejection sampler returning `batch` exact draws from the conditional law.
pub fn rejection_conditional(
    dist: &TailedDistribution,
    n: usize,
    event: &ConditioningEvent,
    batch: u64,
    seed: u64,
    opts: &SamplerOptions,
) -> Result<ConditionalSample> {
    validate(dist, n, event, batch)?;
    let proposer = Proposer::choose(dist, n, event, opts.proposal)?;
    let sizes = chunk_sizes(batch, opts.chunk);
    let budget_per = |size: u64| -> u64 {
        ((opts.max_attempts as f64) * size as f64 / batch as f64).ceil().max(1.0) as u64
    };
    let outs = run_chunks(opts.workers, sizes.len() as u64, |c| {
        let size = sizes[c as usize];
        let budget = budget_per(size);
        let mut rng = stream(seed, domain::CONDITIONAL, c);
        let mut v = vec![0.0; n];
        let mut out = ChunkOut { coords: Vec::with_capacity(size as usize * n), attempts: 0, accepted: 0, exhausted: false };
        while out.accepted < size {
            if out.attempts >= budget {
                out.exhausted = true;
                break;
            }
            out.attempts += 1;
            if proposer.step(dist, event, &mut rng, &mut v) {
                out.accepted += 1;
                out.coords.extend_from_slice(&v);
            }
        }
        out
    });
    assemble(dist, n, event, seed, &proposer, outs, true)
}

/// Run a fixed number of proposals and keep whatever is accepted.
pub fn rejection_fixed_budget(
    dist: &TailedDistribution,
    n: usize,
    event: &ConditioningEvent,
    proposals: u64,
    seed: u64,
    opts: &SamplerOptions,
) -> Result<ConditionalSample> {
    validate(dist, n, event, proposals)?;
    let proposer = Proposer::choose(dist, n, event, opts.proposal)?;
    let sizes = chunk_sizes(proposals, opts.chunk.max(1) * 8);
    let outs = run_chunks(opts.workers, sizes.len() as u64, |c| {
        let size = sizes[c as usize];
        let mut rng = stream(seed, domain::CONDITIONAL, c);
        let mut v = vec![0.0; n];
        let mut out = ChunkOut { coords: Vec::new(), attempts: size, accepted: 0, exhausted: false };
        for _ in 0..size {
            if proposer.step(dist, event, &mut rng, &mut v) {
                out.accepted += 1;
                out.coords.extend_from_slice(&v);
            }
        }
        out
    });
    let sample = assemble(dist, n, event, seed, &proposer, outs, false)?;
    if sample.accepted == 0 {
        return Err(Error::AttemptBudgetExhausted { attempts: sample.attempts, accepted: 0 });
    }
    Ok(sample)
}

fn validate(dist: &TailedDistribution, n: usize, event: &ConditioningEvent, count: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    if count == 0 {
        return Err(Error::param("samples", "must be positive"));
    }
    event.check(dist)
}

fn assemble(
    _dist: &TailedDistribution,
    n: usize,
    event: &ConditioningEvent,
    seed: u64,
    proposer: &Proposer,
    outs: Vec<ChunkOut>,
    fail_on_exhaustion: bool,
) -> Result<ConditionalSample> {
    let attempts: u64 = outs.iter().map(|o| o.attempts).sum();
    let accepted: u64 = outs.iter().map(|o| o.accepted).sum();
    if fail_on_exhaustion && outs.iter().any(|o| o.exhausted) {
        return Err(Error::AttemptBudgetExhausted { attempts, accepted });
    }
    let mut coords = Vec::with_capacity(accepted as usize * n);
    for o in outs {
        coords.extend(o.coords);
    }
    Ok(ConditionalSample {
        n,
        event: *event,
        kind: SamplerKind::Rejection,
        proposal: proposer.kind(),
        seed,
        coords,
        attempts,
        accepted,
        level: proposer.level(),
        big_positions: None,
    })
}

/// Draw from mu restricted to (x, x + delta_len].
pub fn sample_nu_x<R: Rng + ?Sized>(dist: &TailedDistribution, x: f64, delta_len: f64, rng: &mut R) -> Result<f64> {
    if !(dist.mass(x, delta_len) > 0.0) {
        return Err(Error::ZeroMassEvent);
    }
    dist.sample_between(x, x + delta_len, rng).ok_or(Error::ZeroMassEvent)
}

/// n - 1 i.i.d. coordinates plus one residual coordinate at a uniform position.
pub fn proposal_conditional(
    dist: &TailedDistribution,
    n: usize,
    event: &ConditioningEvent,
    batch: u64,
    seed: u64,
    workers: usize,
) -> Result<ConditionalSample> {
    validate(dist, n, event, batch)?;
    if !(dist.mass(event.x, event.delta_len) > 0.0) {
        return Err(Error::ZeroMassEvent);
    }
    let sizes = chunk_sizes(batch, 4096);
    let outs = run_chunks(workers, sizes.len() as u64, |c| {
        let size = sizes[c as usize] as usize;
        let mut rng = stream(seed, domain::PROPOSAL, c);
        let mut coords = Vec::with_capacity(size * n);
        let mut pos = Vec::with_capacity(size);
        for _ in 0..size {
            let j = rng.gen_range(0..n);
            for i in 0..n {
                let v = if i == j {
                    dist.sample_between(event.x, event.upper(), &mut rng).expect("positive residual mass")
                } else {
                    dist.sample(&mut rng)
                };
                coords.push(v);
            }
            pos.push(j + 1);
        }
        (coords, pos)
    });
    let mut coords = Vec::with_capacity(batch as usize * n);
    let mut positions = Vec::with_capacity(batch as usize);
    for (c, p) in outs {
        coords.extend(c);
        positions.extend(p);
    }
    Ok(ConditionalSample {
        n,
        event: *event,
        kind: SamplerKind::Proposal,
        proposal: ProposalKind::Direct,
        seed,
        coords,
        attempts: batch,
        accepted: batch,
        level: 1.0,
        big_positions: Some(positions),
    })
}

/// Number of coordinates in x + Delta.
pub fn count_in_window(event: &ConditioningEvent, v: &[f64]) -> usize {
    v.iter().filter(|&&t| event.contains(t)).count()
}

/// f1(v) = 1{S in x + Delta} / P[S_n in x + Delta].
pub fn density_ratio_f1(event: &ConditioningEvent, v: &[f64], sum_prob: f64) -> Result<f64> {
    if !(sum_prob > 0.0) {
        return Err(Error::ZeroNormalizer);
    }
    Ok(if event.contains(v.iter().sum()) { 1.0 / sum_prob } else { 0.0 })
}

/// f2(v) = N(v) / (n mu(x + Delta)), N the count of coordinates in x + Delta.
pub fn density_ratio_f2(event: &ConditioningEvent, v: &[f64], single_mass: f64) -> Result<f64> {
    if !(single_mass > 0.0) {
        return Err(Error::ZeroNormalizer);
    }
    Ok(count_in_window(event, v) as f64 / (v.len() as f64 * single_mass))
}

#[cfg(test)]
mod tests;
