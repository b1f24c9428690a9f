//! Goodness-of-fit statistics used by the verification code.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// sup_t |F_emp(t) - F(t)| for a continuous reference `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let v = sorted(sample);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(d.clamp(0.0, 1.0))
}

/// sup_t |F_a(t) - F_b(t)|, evaluated after each block of tied values.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic KS critical value at significance `level` for sizes n (and m).
pub fn ks_critical(level: f64, n: usize, m: Option<usize>) -> f64 {
    let c = (-(0.5 * level).ln() / 2.0).sqrt();
    match m {
        None => c / (n as f64).sqrt(),
        Some(m) => c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt(),
    }
}

/// Pearson chi-square p-value of counts against equal cell probabilities.
pub fn chi_square_uniform(counts: &[u64]) -> Result<f64> {
    if counts.len() < 2 {
        return Err(Error::param("counts", "need at least two cells"));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptySample);
    }
    let e = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    Ok(chi_square_sf(stat, counts.len() - 1))
}

pub fn chi_square_sf(stat: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64).map(|c| c.sf(stat)).unwrap_or(f64::NAN)
}

/// Average ranks, ties sharing the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for k in &idx[i..=j] {
            r[*k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(Error::EmptySample);
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - mean) * (y - mean);
        saa += (x - mean) * (x - mean);
        sbb += (y - mean) * (y - mean);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ks_against_own_ecdf() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let d = ks_one_sample(&v, |x| ((x + 1.0) / 1000.0).clamp(0.0, 1.0)).unwrap();
        assert!(d <= 1.0 / 1000.0 + 1e-12);
        assert_eq!(ks_two_sample(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_samples() {
        let a = [1.0, 2.0, 3.0];
        let b = [10.0, 11.0];
        assert_eq!(ks_two_sample(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn uniform_draws_inside_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u: Vec<f64> = (0..100_000).map(|_| rng.gen()).collect();
        let d = ks_one_sample(&u, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(d < 0.006, "{d}");
        assert!((ks_critical(0.01, 100_000, None) - 0.00515).abs() < 1e-4);
    }

    #[test]
    fn ties_are_handled() {
        let a = [1.0, 1.0, 2.0, 2.0];
        let b = [1.0, 2.0];
        assert_eq!(ks_two_sample(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn empty_sample_errors() {
        assert!(matches!(ks_one_sample(&[], |x| x), Err(Error::EmptySample)));
        assert!(matches!(ks_two_sample(&[1.0], &[]), Err(Error::EmptySample)));
    }

    #[test]
    fn spearman_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&a, &[10.0, 20.0, 35.0, 100.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square() {
        assert!(chi_square_uniform(&[100, 100, 100]).unwrap() > 0.99);
        assert!(chi_square_uniform(&[300, 0, 0]).unwrap() < 1e-10);
    }
}
