//! Small numeric helpers that are not covered by `statrs`.

use statrs::function::erf::erfc;

const BERNOULLI_EVEN: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

/// Hurwitz zeta `sum_{k>=0} (a+k)^{-s}` for `s > 1`, `a > 0`, by Euler-Maclaurin.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    debug_assert!(s > 1.0 && a > 0.0);
    let start = 12.0_f64.max(2.0 * s + 4.0);
    let direct = if a < start { (start - a).ceil() as usize } else { 0 };
    let mut head = Neumaier::default();
    for k in 0..direct {
        head.add((a + k as f64).powf(-s));
    }
    let b = a + direct as f64;
    let mut tail = b.powf(1.0 - s) / (s - 1.0) + 0.5 * b.powf(-s);
    // rising factorial s(s+1)...(s+2j-2) / (2j)!
    let mut coef = s / 2.0;
    let mut pow = b.powf(-s - 1.0);
    let b2 = b * b;
    for (j, bern) in BERNOULLI_EVEN.iter().enumerate() {
        let term = bern * coef * pow;
        tail += term;
        if term.abs() < 1e-18 * tail.abs() {
            break;
        }
        let m = 2.0 * (j as f64 + 1.0);
        coef *= (s + m - 1.0) * (s + m) / ((m + 1.0) * (m + 2.0));
        pow /= b2;
    }
    head.add(tail);
    head.sum()
}

/// Riemann zeta for `s > 1`.
pub fn riemann_zeta(s: f64) -> f64 {
    hurwitz_zeta(s, 1.0)
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = Neumaier::default();
    for v in it {
        acc.add(v);
    }
    acc.sum()
}

/// Bisection for an increasing-or-decreasing `f` with a sign change on `[lo, hi]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= rel_tol * mid.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `ln(erfc(w))`, accurate far into the upper tail.
pub fn ln_erfc(w: f64) -> f64 {
    if w < 20.0 {
        return erfc(w).ln();
    }
    // asymptotic series erfc(w) ~ e^{-w^2}/(w sqrt(pi)) * sum (-1)^k (2k-1)!!/(2w^2)^k
    let z = 1.0 / (2.0 * w * w);
    let mut term = 1.0;
    let mut series = 1.0;
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) * z;
        series += term;
    }
    -w * w - (w * std::f64::consts::PI.sqrt()).ln() + series.ln()
}

/// `ln(sum exp(v))` of two terms.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
