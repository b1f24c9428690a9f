//! Mixture proposal for exact rejection sampling of rare sum events.
//!
//! The proposal q = beta q1 + (1 - beta) q0 has two parts with disjoint supports:
//!
//! * q1 puts a uniformly chosen coordinate J in the window
//!   W_J = (max(kappa, x - S_{-J}), x - S_{-J} + s] and the rest i.i.d. mu.
//!   Its density with respect to mu^n at a point of the event is
//!   (1/n) sum_{i : v_i > kappa} 1 / mu(W_i).
//! * q0 draws i.i.d. coordinates from mu restricted to (-inf, kappa], tilted by
//!   the piecewise-constant weight exp(theta r(t)), r(t) the right edge of the
//!   bin containing t. Its density is exp(theta sum r(v_i)) / Phi^n.
//!
//! With M an upper bound for mu(W) and since sum r(v_i) >= S > x on the event,
//! L = min(beta / (n M), (1 - beta) e^{theta x} / Phi^n) is a lower bound of q
//! on the event. Accepting a proposal in the event with probability L / q(v)
//! yields exact draws, and the per-proposal acceptance equals L P[event].

use rand::Rng;

use crate::dist::TailedDistribution;
use crate::special::{golden_min, log_add};

use super::ConditioningEvent;

const COARSE_BINS: usize = 20_000;
const MAX_FINE_BINS: usize = 400_000;
const KAPPA_STEPS: usize = 64;

#[derive(Debug, Clone)]
struct Bins {
    /// edges[0] < edges[1] < ... ; bin i is (edges[i], edges[i+1]].
    edges: Vec<f64>,
    /// natural-log masses of each bin (-inf for empty bins)
    log_mass: Vec<f64>,
}

impl Bins {
    fn new(dist: &TailedDistribution, start: f64, width: f64, count: usize) -> Bins {
        let edges: Vec<f64> = (0..=count).map(|i| start + width * i as f64).collect();
        let mut log_mass = Vec::with_capacity(count);
        let mut t_prev = dist.tail(edges[0]);
        for i in 0..count {
            let t_next = dist.tail(edges[i + 1]);
            let m = if t_prev < 0.5 {
                t_prev - t_next
            } else {
                dist.cdf(edges[i + 1]) - dist.cdf(edges[i])
            };
            log_mass.push(if m > 0.0 { m.ln() } else { f64::NEG_INFINITY });
            t_prev = t_next;
        }
        Bins { edges, log_mass }
    }

    fn len(&self) -> usize {
        self.log_mass.len()
    }

    /// ln sum_{i < k} m_i exp(theta r_i) for every cut point k.
    fn log_prefix(&self, theta: f64, out: &mut Vec<f64>) {
        out.clear();
        out.push(f64::NEG_INFINITY);
        let mut acc = f64::NEG_INFINITY;
        for (lm, r) in self.log_mass.iter().zip(&self.edges[1..]) {
            acc = log_add(acc, lm + theta * r);
            out.push(acc);
        }
    }

    fn log_phi(&self, theta: f64, upto: usize) -> f64 {
        let shift = (0..upto)
            .map(|i| self.log_mass[i] + theta * self.edges[i + 1])
            .fold(f64::NEG_INFINITY, f64::max);
        if shift == f64::NEG_INFINITY {
            return shift;
        }
        let acc: f64 = (0..upto).map(|i| (self.log_mass[i] + theta * self.edges[i + 1] - shift).exp()).sum();
        acc.ln() + shift
    }
}

#[derive(Debug, Clone)]
pub struct Envelope {
    n: usize,
    event: ConditioningEvent,
    kappa: f64,
    theta: f64,
    beta: f64,
    log_l: f64,
    log_phi: f64,
    edges: Vec<f64>,
    /// cumulative tilted probabilities of bins up to kappa
    cum: Vec<f64>,
}

fn log_d(n: usize, log_m: f64, log_phi: f64, theta: f64, x: f64) -> f64 {
    log_add((n as f64).ln() + log_m, n as f64 * log_phi - theta * x)
}

impl Envelope {
    /// Fit the envelope; `None` when the event sits in the bulk and no cap helps.
    pub fn build(dist: &TailedDistribution, n: usize, event: &ConditioningEvent) -> Option<Envelope> {
        if n < 2 {
            return None;
        }
        let x = event.x;
        let s = event.delta_len;
        let span = dist.lattice_span();
        let lower = dist.support_lower();
        if !(x > lower) {
            return None;
        }
        let single = dist.mass(x, s);
        if !(single > 0.0) {
            return None;
        }
        let start = lower - span;
        let reach = x - start;
        // tilt scale: exp(theta x) must beat roughly 1 / (n mu(x + Delta))
        let theta_star = (-(n as f64 * single).ln()).max(1.0) / reach;

        // coarse pass over (start, x]
        let (coarse_w, coarse_count) = bin_layout(span, reach, COARSE_BINS);
        let coarse = Bins::new(dist, start, coarse_w, coarse_count);
        let kappa_idx: Vec<usize> = (1..=KAPPA_STEPS)
            .map(|k| ((coarse.len() * k) / KAPPA_STEPS).max(1))
            .collect();
        let log_m: Vec<f64> =
            kappa_idx.iter().map(|&i| dist.window_mass_bound(coarse.edges[i], s).ln()).collect();
        let mut prefix = Vec::new();
        let mut best = (f64::INFINITY, theta_star, kappa_idx[0]);
        for k in -28..=14 {
            let theta = theta_star * 2f64.powf(k as f64 / 4.0);
            coarse.log_prefix(theta, &mut prefix);
            for (j, &i) in kappa_idx.iter().enumerate() {
                let ld = log_d(n, log_m[j], prefix[i], theta, x);
                if ld < best.0 {
                    best = (ld, theta, i);
                }
            }
        }
        let (_, theta_c, ki) = best;
        let kappa_c = coarse.edges[ki];

        // fine pass up to kappa
        let fine_target = (0.02 / (n as f64 * theta_c)).max(f64::MIN_POSITIVE);
        let fine_reach = kappa_c - start;
        let mut count = (fine_reach / fine_target).ceil().max(1.0) as usize;
        count = count.clamp(ki, MAX_FINE_BINS.max(ki));
        let (fine_w, fine_count) = if span > 0.0 {
            let atoms = (fine_reach / span).round() as usize;
            let per = atoms.div_ceil(count.min(atoms).max(1)).max(1);
            (per as f64 * span, atoms.div_ceil(per))
        } else {
            (fine_reach / count as f64, count)
        };
        let fine = Bins::new(dist, start, fine_w, fine_count);
        let kappa = fine.edges[fine.len()];
        let log_mk = dist.window_mass_bound(kappa, s).ln();
        let upto = fine.len();
        let (theta, ld) = golden_min(
            |t| log_d(n, log_mk, fine.log_phi(t, upto), t, x),
            theta_c / 4.0,
            theta_c * 4.0,
            48,
        );
        let log_phi = fine.log_phi(theta, upto);
        let log_a = (n as f64).ln() + log_mk;
        let beta = (log_a - ld).exp().clamp(0.0, 1.0);
        // safety margin against rounding in the density evaluation
        let log_l = -ld + (1.0 - 1e-9f64).ln();

        let mut cum = Vec::with_capacity(upto);
        let mut acc = 0.0;
        for i in 0..upto {
            acc += (fine.log_mass[i] + theta * fine.edges[i + 1] - log_phi).exp();
            cum.push(acc);
        }
        let total = acc;
        for c in cum.iter_mut() {
            *c /= total;
        }
        Some(Envelope { n, event: *event, kappa, theta, beta, log_l, log_phi, edges: fine.edges, cum })
    }

    /// Lower bound L of the proposal density on the event; acceptance = L P[event].
    pub fn level(&self) -> f64 {
        self.log_l.exp()
    }

    pub fn log_level(&self) -> f64 {
        self.log_l
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Fill `v` with a proposal and return its acceptance probability.
    pub fn propose<R: Rng + ?Sized>(&self, dist: &TailedDistribution, rng: &mut R, v: &mut [f64]) -> f64 {
        let n = self.n;
        let x = self.event.x;
        let s = self.event.delta_len;
        if rng.gen::<f64>() < self.beta {
            let j = rng.gen_range(0..n);
            for (i, vi) in v.iter_mut().enumerate() {
                if i != j {
                    *vi = dist.sample(rng);
                }
            }
            let others: f64 = v.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, t)| *t).sum();
            let lo = self.kappa.max(x - others);
            let hi = x - others + s;
            if !(hi > lo) {
                return 0.0;
            }
            let Some(y) = dist.sample_between(lo, hi, rng) else {
                return 0.0;
            };
            v[j] = y;
            let total: f64 = v.iter().sum();
            if !self.event.contains(total) {
                return 0.0;
            }
            let mut g1 = 0.0;
            for &vi in v.iter() {
                if vi > self.kappa {
                    let rest = total - vi;
                    let m = window_mass(dist, self.kappa.max(x - rest), x - rest + s);
                    if m > 0.0 {
                        g1 += 1.0 / m;
                    }
                }
            }
            g1 /= n as f64;
            (self.log_l - (self.beta * g1).ln()).exp().min(1.0)
        } else {
            let mut rsum = 0.0;
            for vi in v.iter_mut() {
                let u: f64 = rng.gen();
                let b = self.cum.partition_point(|&c| c <= u).min(self.cum.len() - 1);
                let (lo, hi) = (self.edges[b], self.edges[b + 1]);
                match dist.sample_between(lo, hi, rng) {
                    Some(t) => *vi = t,
                    None => return 0.0,
                }
                rsum += hi;
            }
            let total: f64 = v.iter().sum();
            if !self.event.contains(total) {
                return 0.0;
            }
            let log_g0 = self.theta * rsum - n as f64 * self.log_phi;
            (self.log_l - (1.0 - self.beta).ln() - log_g0).exp().min(1.0)
        }
    }
}

fn window_mass(dist: &TailedDistribution, lo: f64, hi: f64) -> f64 {
    let upper = if hi.is_infinite() { 0.0 } else { dist.tail(hi) };
    (dist.tail(lo) - upper).max(0.0)
}

/// Bin width and count covering `reach`, aligned to the lattice when `span > 0`.
fn bin_layout(span: f64, reach: f64, target: usize) -> (f64, usize) {
    if span > 0.0 {
        let atoms = (reach / span).floor().max(1.0) as usize;
        let per = atoms.div_ceil(target).max(1);
        (per as f64 * span, (atoms / per).max(1))
    } else {
        (reach / target as f64, target)
    }
}
