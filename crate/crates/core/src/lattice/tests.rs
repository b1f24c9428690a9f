use rand::Rng;

use super::*;
use crate::rng::{domain, run_chunks, stream};

fn zeta_pmf(alpha: f64, k: i64) -> Pmf {
    Pmf::from_dist(&TailedDistribution::zeta(alpha, None).unwrap(), k).unwrap()
}

fn ev(x: f64, s: f64) -> ConditioningEvent {
    ConditioningEvent::new(x, s).unwrap()
}

#[test]
fn point_mass_convolution() {
    let p = Pmf::point_mass(1);
    let c = convolve_n(&p, 5, DEFAULT_SUPPORT_CAP).unwrap();
    assert_eq!(c.offset(), 5);
    assert_eq!(c.masses(), &[1.0]);
}

#[test]
fn binomial_convolution() {
    let p = Pmf::uniform(0, 1).unwrap();
    let c = convolve_n(&p, 2, DEFAULT_SUPPORT_CAP).unwrap();
    assert_eq!(c.offset(), 0);
    assert_eq!(c.masses(), &[0.25, 0.5, 0.25]);
}

#[test]
fn support_cap() {
    let p = Pmf::uniform(0, 9).unwrap();
    assert!(matches!(convolve_n(&p, 5, 20), Err(Error::SupportCapExceeded { len: 46, cap: 20 })));
}

#[test]
fn pmf_validation() {
    assert!(Pmf::new(0, vec![0.5, 0.4]).is_err());
    assert!(Pmf::new(0, vec![1.5, -0.5]).is_err());
    assert!(Pmf::new(0, vec![]).is_err());
}

#[test]
fn truncation_defect_tracked() {
    let p = zeta_pmf(3.0, 200);
    let z = TailedDistribution::zeta(3.0, None).unwrap();
    assert_eq!(p.truncation_defect(), z.tail(200.0));
    assert!((p.total() - 1.0).abs() < 1e-12);
    let c = convolve_n(&p, 3, DEFAULT_SUPPORT_CAP).unwrap();
    assert!((c.truncation_defect() - 3.0 * z.tail(200.0)).abs() < 1e-20);
}

#[test]
fn convolution_matches_enumeration() {
    let p = zeta_pmf(2.5, 20);
    for n in 1..=3usize {
        let c = convolve_n(&p, n, DEFAULT_SUPPORT_CAP).unwrap();
        let mut direct = vec![0.0; c.len()];
        let k = p.len();
        for_each_index(k, n, |idx| {
            let s: i64 = idx.iter().map(|&i| p.offset() + i as i64).sum();
            direct[(s - c.offset()) as usize] += idx.iter().map(|&i| p.masses()[i]).product::<f64>();
        });
        for (a, b) in c.masses().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-14, "n={n}");
        }
    }
}

#[test]
fn convolution_tail_matches_monte_carlo() {
    let p = zeta_pmf(3.0, 200);
    let c = convolve_n(&p, 3, DEFAULT_SUPPORT_CAP).unwrap();
    let exact: f64 = (31..=c.max_value()).map(|k| c.mass_at(k)).sum();
    // draws from the truncated law by inverse transform on the cumulative masses
    let mut cum = Vec::new();
    let mut acc = 0.0;
    for m in p.masses() {
        acc += m;
        cum.push(acc);
    }
    let draws = 10_000_000u64;
    let hits: u64 = run_chunks(4, 10, |ch| {
        let mut rng = stream(5, domain::AUX, ch);
        let mut hits = 0u64;
        for _ in 0..draws / 10 {
            let mut s = 0i64;
            for _ in 0..3 {
                let u: f64 = rng.gen::<f64>() * acc;
                s += p.offset() + cum.partition_point(|&c| c < u).min(cum.len() - 1) as i64;
            }
            if s > 30 {
                hits += 1;
            }
        }
        hits
    })
    .into_iter()
    .sum();
    let est = hits as f64 / draws as f64;
    let se = (exact * (1.0 - exact) / draws as f64).sqrt();
    assert!((est - exact).abs() < 3.0 * se, "{est} vs {exact} (se {se})");
}

#[test]
fn conditional_law_n1_is_residual_law() {
    let p = zeta_pmf(3.0, 60);
    let e = ev(10.0, f64::INFINITY);
    let law = exact_conditional_law(&p, 1, &e, &EnumerationBudget::default()).unwrap();
    let tail: f64 = (11..=60).map(|k| p.mass_at(k)).sum();
    for (v, q) in &law.atoms {
        assert!((q - p.mass_at(v[0]) / tail).abs() < 1e-14);
    }
    assert_eq!(law.atoms.len(), 50);
}

#[test]
fn conditional_law_uniform_example() {
    let p = Pmf::uniform(0, 2).unwrap();
    let law = exact_conditional_law(&p, 2, &ev(2.0, 2.0), &EnumerationBudget::default()).unwrap();
    let mut atoms = law.atoms.clone();
    atoms.sort_by(|a, b| a.0.cmp(&b.0));
    let vs: Vec<Vec<i64>> = atoms.iter().map(|a| a.0.clone()).collect();
    assert_eq!(vs, vec![vec![1, 2], vec![2, 1], vec![2, 2]]);
    for (_, q) in atoms {
        assert!((q - 1.0 / 3.0).abs() < 1e-15);
    }
    assert!((law.event_mass - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn conditional_law_mass_matches_convolution() {
    let p = zeta_pmf(3.0, 60);
    for (n, e) in [(2, ev(20.0, 5.0)), (3, ev(15.0, f64::INFINITY)), (4, ev(40.0, 3.0))] {
        let law = exact_conditional_law(&p, n, &e, &EnumerationBudget::default()).unwrap();
        let c = convolve_n(&p, n, DEFAULT_SUPPORT_CAP).unwrap();
        assert!((law.event_mass - c.event_mass(&e)).abs() < 1e-12);
        assert!((law.total() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn enumeration_budget() {
    let p = zeta_pmf(3.0, 60);
    let e = ev(40.0, f64::INFINITY);
    let r = exact_conditional_law(&p, 5, &e, &EnumerationBudget::default());
    assert!(matches!(r, Err(Error::EnumerationBudgetExceeded { .. })));
    assert!(exact_conditional_law(&p, 4, &e, &EnumerationBudget::default()).is_ok());
}

#[test]
fn tv_n1_is_zero() {
    let p = zeta_pmf(3.0, 60);
    for x in [3.0, 15.0, 40.0] {
        let e = ev(x, f64::INFINITY);
        let law = exact_conditional_law(&p, 1, &e, &EnumerationBudget::default()).unwrap();
        let tv = exact_tv(&law, &p, &EnumerationBudget::default()).unwrap();
        assert!(tv.tv_sup.abs() < 1e-15);
    }
}

#[test]
fn tv_decreases_in_x() {
    let p = zeta_pmf(3.0, 60);
    let mut prev = f64::INFINITY;
    for x in [15.0, 25.0, 40.0] {
        let e = ev(x, f64::INFINITY);
        let law = exact_conditional_law(&p, 3, &e, &EnumerationBudget::default()).unwrap();
        let tv = exact_tv(&law, &p, &EnumerationBudget::default()).unwrap();
        assert!(tv.tv_sup >= 0.0 && tv.tv_sup <= 1.0);
        assert!((tv.tv_l1 - 2.0 * tv.tv_sup).abs() < 1e-15);
        assert!(tv.tv_sup < prev, "x={x}: {}", tv.tv_sup);
        prev = tv.tv_sup;
    }
}

#[test]
fn density_l1_is_bounded() {
    let p = zeta_pmf(3.0, 30);
    let e = ev(20.0, f64::INFINITY);
    let l1 = exact_density_l1(&p, 3, &e, &EnumerationBudget::default()).unwrap();
    assert!(l1 > 0.0 && l1 <= 2.0);
}

#[test]
fn sum_probability_matches_convolution() {
    let z = TailedDistribution::zeta(3.0, Some(80)).unwrap();
    let p = Pmf::from_dist(&z, 80).unwrap();
    for (n, e) in [(3usize, ev(30.0, f64::INFINITY)), (2, ev(15.0, 4.0)), (4, ev(100.0, f64::INFINITY)), (3, ev(1.0, 2.0))] {
        let c = convolve_n(&p, n, DEFAULT_SUPPORT_CAP).unwrap();
        let exact = exact_sum_probability(&z, n, &e, DEFAULT_SUPPORT_CAP).unwrap();
        assert!((exact - c.event_mass(&e)).abs() < 1e-13, "n={n} {e:?}");
    }
    let e = ev(2.0, f64::INFINITY);
    assert_eq!(exact_sum_probability(&z, 2, &e, DEFAULT_SUPPORT_CAP).unwrap(), 1.0 - z.pdf(1.0).powi(2));
}

#[test]
fn sum_probability_shifted_lattice() {
    let z = TailedDistribution::zeta(3.0, Some(50)).unwrap();
    let shifted = z.clone().with_loc(-2.0);
    let a = exact_sum_probability(&z, 3, &ev(40.0, f64::INFINITY), DEFAULT_SUPPORT_CAP).unwrap();
    let b = exact_sum_probability(&shifted, 3, &ev(34.0, f64::INFINITY), DEFAULT_SUPPORT_CAP).unwrap();
    assert!((a - b).abs() < 1e-15);
}

#[test]
fn sum_probability_rejects_continuous() {
    let p = TailedDistribution::pareto(3.0, 1.0).unwrap();
    let r = exact_sum_probability(&p, 2, &ev(10.0, f64::INFINITY), DEFAULT_SUPPORT_CAP);
    assert!(matches!(r, Err(Error::MethodMismatch(_))));
}
