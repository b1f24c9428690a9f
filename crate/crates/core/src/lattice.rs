//! Exact convolutions and brute-force conditional laws on integer lattices.

use std::collections::HashMap;

use crate::dist::TailedDistribution;
use crate::error::{Error, Result};
use crate::order_swap::swap_max_last_i64;
use crate::sampler::ConditioningEvent;
use crate::special::Neumaier;

/// Finite measure on {offset, offset + 1, ...}.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    offset: i64,
    masses: Vec<f64>,
    truncation_defect: f64,
}

pub const DEFAULT_SUPPORT_CAP: usize = 10_000_000;

impl Pmf {
    /// A probability vector; masses must be nonnegative and sum to 1 within 1e-12.
    pub fn new(offset: i64, masses: Vec<f64>) -> Result<Pmf> {
        if masses.is_empty() {
            return Err(Error::param("masses", "empty"));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::param("masses", "must be finite and nonnegative"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param("masses", format!("sum to {total}, not 1")));
        }
        Ok(Pmf { offset, masses, truncation_defect: 0.0 })
    }

    /// Unnormalised (sub-)measure, used for restricted laws.
    pub fn raw(offset: i64, masses: Vec<f64>) -> Pmf {
        Pmf { offset, masses, truncation_defect: 0.0 }
    }

    pub fn point_mass(at: i64) -> Pmf {
        Pmf { offset: at, masses: vec![1.0], truncation_defect: 0.0 }
    }

    pub fn uniform(lo: i64, hi: i64) -> Result<Pmf> {
        if hi < lo {
            return Err(Error::param("hi", "must be >= lo"));
        }
        let k = (hi - lo + 1) as usize;
        Pmf::new(lo, vec![1.0 / k as f64; k])
    }

    /// Law of a lattice distribution with span 1 truncated to atoms <= `kmax` and
    /// renormalised; the discarded mass is kept as the truncation defect.
    pub fn from_dist(dist: &TailedDistribution, kmax: i64) -> Result<Pmf> {
        if dist.lattice_span() != 1.0 {
            return Err(Error::MethodMismatch(format!("{} is not a unit-span lattice law", dist.spec())));
        }
        let lo = dist.support_lower();
        if lo.fract() != 0.0 {
            return Err(Error::MethodMismatch("lattice offset is not an integer".into()));
        }
        let lo = lo as i64;
        if kmax < lo {
            return Err(Error::param("kmax", "below the support"));
        }
        let kmax = match dist.support_upper() {
            Some(u) => kmax.min(u as i64),
            None => kmax,
        };
        let raw: Vec<f64> = (lo..=kmax).map(|k| dist.pdf(k as f64)).collect();
        let defect = dist.tail(kmax as f64);
        let total: f64 = raw.iter().sum();
        let masses = raw.into_iter().map(|m| m / total).collect();
        Ok(Pmf { offset: lo, masses, truncation_defect: defect })
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn truncation_defect(&self) -> f64 {
        self.truncation_defect
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn max_value(&self) -> i64 {
        self.offset + self.masses.len() as i64 - 1
    }

    pub fn total(&self) -> f64 {
        let mut acc = Neumaier::default();
        for m in &self.masses {
            acc.add(*m);
        }
        acc.sum()
    }

    pub fn mass_at(&self, k: i64) -> f64 {
        if k < self.offset {
            return 0.0;
        }
        self.masses.get((k - self.offset) as usize).copied().unwrap_or(0.0)
    }

    /// Mass of the atoms k with x < k <= x + s.
    pub fn event_mass(&self, event: &ConditioningEvent) -> f64 {
        let mut acc = Neumaier::default();
        for (i, m) in self.masses.iter().enumerate() {
            if event.contains((self.offset + i as i64) as f64) {
                acc.add(*m);
            }
        }
        acc.sum()
    }

    /// Same support with masses outside `keep` zeroed.
    pub fn restrict<F: Fn(i64) -> bool>(&self, keep: F) -> Pmf {
        let masses = self
            .masses
            .iter()
            .enumerate()
            .map(|(i, m)| if keep(self.offset + i as i64) { *m } else { 0.0 })
            .collect();
        Pmf { offset: self.offset, masses, truncation_defect: self.truncation_defect }
    }
}

/// Dense pairwise convolution.
pub fn convolve(a: &Pmf, b: &Pmf) -> Pmf {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, ma) in a.masses.iter().enumerate() {
        if *ma == 0.0 {
            continue;
        }
        for (j, mb) in b.masses.iter().enumerate() {
            out[i + j] += ma * mb;
        }
    }
    Pmf { offset: a.offset + b.offset, masses: out, truncation_defect: a.truncation_defect + b.truncation_defect }
}

/// n-fold convolution; n = 0 gives the point mass at 0.
pub fn convolve_n(p: &Pmf, n: usize, cap: usize) -> Result<Pmf> {
    let len = n * (p.len() - 1) + 1;
    if len > cap {
        return Err(Error::SupportCapExceeded { len, cap });
    }
    let mut acc = Pmf::point_mass(0);
    for _ in 0..n {
        acc = convolve(&acc, p);
    }
    acc.truncation_defect = n as f64 * p.truncation_defect;
    Ok(acc)
}

/// Largest admissible (K+1)^n.
#[derive(Debug, Clone, Copy)]
pub struct EnumerationBudget {
    pub max_cells: u128,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget { max_cells: 61u128.pow(4) }
    }
}

impl EnumerationBudget {
    fn check(&self, p: &Pmf, n: usize) -> Result<()> {
        let cells = (p.len() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if cells > self.max_cells {
            return Err(Error::EnumerationBudgetExceeded { cells, budget: self.max_cells });
        }
        Ok(())
    }
}

/// Conditional law of (X_1, ..., X_n) given S_n in x + Delta, atom by atom.
#[derive(Debug, Clone)]
pub struct ExactConditionalLaw {
    pub n: usize,
    pub event: ConditioningEvent,
    /// vectors in the event with their conditional probabilities
    pub atoms: Vec<(Vec<i64>, f64)>,
    /// unconditional probability of the event
    pub event_mass: f64,
}

impl ExactConditionalLaw {
    pub fn total(&self) -> f64 {
        let mut acc = Neumaier::default();
        for (_, p) in &self.atoms {
            acc.add(*p);
        }
        acc.sum()
    }

    /// Image of the law under the map moving the first maximum last.
    pub fn pushforward_swap(&self) -> HashMap<Vec<i64>, f64> {
        let mut out: HashMap<Vec<i64>, f64> = HashMap::with_capacity(self.atoms.len());
        for (v, p) in &self.atoms {
            let mut w = v.clone();
            swap_max_last_i64(&mut w);
            *out.entry(w).or_insert(0.0) += p;
        }
        out
    }

    /// Law of the maximum coordinate.
    pub fn max_law(&self) -> HashMap<i64, f64> {
        let mut out = HashMap::new();
        for (v, p) in &self.atoms {
            *out.entry(*v.iter().max().unwrap()).or_insert(0.0) += p;
        }
        out
    }
}

/// Odometer over `len^dims` index vectors.
fn for_each_index<F: FnMut(&[usize])>(len: usize, dims: usize, mut f: F) {
    let mut idx = vec![0usize; dims];
    loop {
        f(&idx);
        let mut d = 0;
        loop {
            if d == dims {
                return;
            }
            idx[d] += 1;
            if idx[d] < len {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

pub fn exact_conditional_law(
    p: &Pmf,
    n: usize,
    event: &ConditioningEvent,
    budget: &EnumerationBudget,
) -> Result<ExactConditionalLaw> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    budget.check(p, n)?;
    let k = p.len();
    let mut atoms = Vec::new();
    let mut mass = Neumaier::default();
    for_each_index(k, n - 1, |idx| {
        let mut prob = 1.0;
        let mut partial = 0i64;
        for &i in idx {
            prob *= p.masses[i];
            partial += p.offset + i as i64;
        }
        if prob == 0.0 {
            return;
        }
        // last coordinate j with x < partial + j <= x + s
        let lo = ((event.x - partial as f64).floor() as i64 + 1).max(p.offset);
        let hi = if event.is_tail() {
            p.max_value()
        } else {
            ((event.upper() - partial as f64).floor() as i64).min(p.max_value())
        };
        for last in lo..=hi {
            let q = prob * p.mass_at(last);
            if q > 0.0 {
                let mut v: Vec<i64> = idx.iter().map(|&i| p.offset + i as i64).collect();
                v.push(last);
                mass.add(q);
                atoms.push((v, q));
            }
        }
    });
    let event_mass = mass.sum();
    if !(event_mass > 0.0) {
        return Err(Error::ZeroMassEvent);
    }
    for a in atoms.iter_mut() {
        a.1 /= event_mass;
    }
    Ok(ExactConditionalLaw { n, event: *event, atoms, event_mass })
}

/// Total variation between two laws, both conventions.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TvPair {
    /// sup over sets of |P(A) - Q(A)|
    pub tv_sup: f64,
    /// sum of |P(a) - Q(a)|, twice `tv_sup`
    pub tv_l1: f64,
}

impl TvPair {
    pub fn from_l1(l1: f64) -> TvPair {
        TvPair { tv_sup: 0.5 * l1, tv_l1: l1 }
    }
}

/// Distance between the swapped conditional law and mu^{n-1} x nu_x^Delta.
pub fn exact_tv(law: &ExactConditionalLaw, p: &Pmf, budget: &EnumerationBudget) -> Result<TvPair> {
    let n = law.n;
    budget.check(p, n)?;
    let event = &law.event;
    let mut push = law.pushforward_swap();
    let window = p.event_mass(event);
    if !(window > 0.0) {
        return Err(Error::ZeroMassEvent);
    }
    let k = p.len();
    let mut l1 = Neumaier::default();
    let mut matched = Neumaier::default();
    for_each_index(k, n - 1, |idx| {
        let mut prob = 1.0;
        for &i in idx {
            prob *= p.masses[i];
        }
        if prob == 0.0 {
            return;
        }
        let mut v: Vec<i64> = idx.iter().map(|&i| p.offset + i as i64).collect();
        v.push(0);
        for (j, m) in p.masses.iter().enumerate() {
            let y = p.offset + j as i64;
            if *m == 0.0 || !event.contains(y as f64) {
                continue;
            }
            let b = prob * m / window;
            *v.last_mut().unwrap() = y;
            let a = push.remove(&v).unwrap_or(0.0);
            matched.add(a);
            l1.add((a - b).abs());
        }
    });
    for a in push.values() {
        l1.add(*a);
    }
    let _ = matched;
    Ok(TvPair::from_l1(l1.sum()))
}

/// Integral of |f1 - f2| against mu^n by full enumeration, where
/// f1 = 1{S in x + Delta} / P[S_n in x + Delta] and
/// f2 = N / (n mu(x + Delta)), N the count of coordinates in x + Delta.
pub fn exact_density_l1(p: &Pmf, n: usize, event: &ConditioningEvent, budget: &EnumerationBudget) -> Result<f64> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    budget.check(p, n)?;
    let k = p.len();
    let single = p.event_mass(event);
    // first pass: event mass by enumeration
    let mut pe = Neumaier::default();
    for_each_index(k, n, |idx| {
        let s: i64 = idx.iter().map(|&i| p.offset + i as i64).sum();
        if event.contains(s as f64) {
            pe.add(idx.iter().map(|&i| p.masses[i]).product());
        }
    });
    let pe = pe.sum();
    if !(pe > 0.0) || !(single > 0.0) {
        return Err(Error::ZeroNormalizer);
    }
    let mut acc = Neumaier::default();
    for_each_index(k, n, |idx| {
        let prob: f64 = idx.iter().map(|&i| p.masses[i]).product();
        if prob == 0.0 {
            return;
        }
        let mut s = 0i64;
        let mut count = 0usize;
        for &i in idx {
            let v = p.offset + i as i64;
            s += v;
            if event.contains(v as f64) {
                count += 1;
            }
        }
        let f1 = if event.contains(s as f64) { 1.0 / pe } else { 0.0 };
        let f2 = count as f64 / (n as f64 * single);
        acc.add((f1 - f2).abs() * prob);
    });
    Ok(acc.sum())
}

/// P[S_n in x + Delta] for a lattice law without truncation, by positive-term
/// recursions on lattice indices.
pub fn exact_sum_probability(dist: &TailedDistribution, n: usize, event: &ConditioningEvent, cap: usize) -> Result<f64> {
    let h = dist.lattice_span();
    if h <= 0.0 {
        return Err(Error::MethodMismatch(format!("exact sums need a lattice law, got {}", dist.spec())));
    }
    event.check(dist)?;
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    let lower = dist.support_lower();
    let nf = n as f64;
    let idx_floor = |t: f64| (t / h + 1e-9).floor();
    // S_n = n lower + h K_n, K_n >= 0
    let c1 = idx_floor(event.x - nf * lower);
    let atom = |k: usize| dist.pdf(lower + h * k as f64);
    let tail_idx = |k: f64| dist.tail(lower + h * k);
    if event.is_tail() {
        if c1 < 0.0 {
            return Ok(1.0);
        }
        let c = c1 as usize;
        if c + 1 > cap {
            return Err(Error::SupportCapExceeded { len: c + 1, cap });
        }
        let q: Vec<f64> = (0..=c).map(atom).collect();
        let mut cur = vec![0.0; c + 1];
        cur[0] = 1.0;
        let mut total = Neumaier::default();
        for j in 1..=n {
            // contribution of the j-th coordinate crossing the level
            for (t, m) in cur.iter().enumerate() {
                if *m > 0.0 {
                    total.add(m * tail_idx((c - t) as f64));
                }
            }
            if j < n {
                cur = truncated_convolve(&cur, &q, c);
            }
        }
        Ok(total.sum())
    } else {
        let c2 = idx_floor(event.upper() - nf * lower);
        if c2 < 0.0 {
            return Ok(0.0);
        }
        let c2u = c2 as usize;
        if c2u + 1 > cap {
            return Err(Error::SupportCapExceeded { len: c2u + 1, cap });
        }
        let q: Vec<f64> = (0..=c2u).map(atom).collect();
        let mut cur = vec![0.0; c2u + 1];
        cur[0] = 1.0;
        for _ in 0..n {
            cur = truncated_convolve(&cur, &q, c2u);
        }
        let from = if c1 < 0.0 { 0 } else { c1 as usize + 1 };
        let mut acc = Neumaier::default();
        for m in cur.iter().skip(from) {
            acc.add(*m);
        }
        Ok(acc.sum())
    }
}

fn truncated_convolve(a: &[f64], q: &[f64], cap: usize) -> Vec<f64> {
    let mut out = vec![0.0; cap + 1];
    for (i, ma) in a.iter().enumerate() {
        if *ma == 0.0 {
            continue;
        }
        for (j, mq) in q.iter().enumerate().take(cap + 1 - i) {
            out[i + j] += ma * mq;
        }
    }
    out
}

#[cfg(test)]
mod tests;
