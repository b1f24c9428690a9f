use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::*;
use crate::lattice::{exact_conditional_law, exact_sum_probability, EnumerationBudget, Pmf, DEFAULT_SUPPORT_CAP};

fn ks_two(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn ks_one(mut a: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = a.len() as f64;
    a.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Pearson chi-square p-value after pooling cells with expected count < 5.
fn chi2_pvalue(observed: &HashMap<i64, u64>, expected_prob: &HashMap<i64, f64>, total: u64) -> f64 {
    let mut keys: Vec<i64> = expected_prob.keys().copied().collect();
    keys.sort();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for k in keys {
        o_acc += *observed.get(&k).unwrap_or(&0) as f64;
        e_acc += expected_prob[&k] * total as f64;
        if e_acc >= 5.0 {
            cells.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if let Some(last) = cells.last_mut() {
        last.0 += o_acc;
        last.1 += e_acc;
    }
    if cells.len() < 2 {
        // a single cell carries no information
        return 1.0;
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    ChiSquared::new((cells.len() - 1) as f64).unwrap().sf(stat)
}

fn opts(proposal: ProposalKind) -> SamplerOptions {
    SamplerOptions { proposal, ..Default::default() }
}

fn check_against_exact(event: ConditioningEvent, n: usize, seed: u64) {
    let z = TailedDistribution::zeta(3.0, Some(60)).unwrap();
    let p = Pmf::from_dist(&z, 60).unwrap();
    let law = exact_conditional_law(&p, n, &event, &EnumerationBudget::default()).unwrap();
    let mut max_law: HashMap<i64, f64> = HashMap::new();
    let mut sum_law: HashMap<i64, f64> = HashMap::new();
    let mut first_law: HashMap<i64, f64> = HashMap::new();
    for (v, q) in &law.atoms {
        *max_law.entry(*v.iter().max().unwrap()).or_default() += q;
        *sum_law.entry(v.iter().sum()).or_default() += q;
        *first_law.entry(v[0]).or_default() += q;
    }
    let batch = 20_000;
    let s = rejection_conditional(&z, n, &event, batch, seed, &opts(ProposalKind::Envelope)).unwrap();
    assert_eq!(s.proposal, ProposalKind::Envelope);
    let (mut om, mut os, mut of) = (HashMap::new(), HashMap::new(), HashMap::new());
    for v in s.vectors() {
        assert!(event.contains(v.iter().sum()));
        *om.entry(v.iter().cloned().fold(f64::MIN, f64::max) as i64).or_insert(0u64) += 1;
        *os.entry(v.iter().sum::<f64>() as i64).or_insert(0u64) += 1;
        *of.entry(v[0] as i64).or_insert(0u64) += 1;
    }
    for (name, o, e) in [("max", &om, &max_law), ("sum", &os, &sum_law), ("first", &of, &first_law)] {
        let pv = chi2_pvalue(o, e, batch);
        assert!(pv > 1e-3, "{name}: p = {pv} for {event:?}");
    }
    // acceptance estimates P[S_n in x + Delta]
    let (est, se) = s.event_probability(&z);
    assert!((est - law.event_mass).abs() < 4.0 * se, "{est} +- {se} vs {}", law.event_mass);
}

#[test]
fn envelope_matches_exact_lattice_tail_event() {
    check_against_exact(ConditioningEvent::tail(40.0).unwrap(), 3, 1);
}

#[test]
fn envelope_matches_exact_lattice_interval_event() {
    check_against_exact(ConditioningEvent::new(30.0, 4.0).unwrap(), 3, 2);
    check_against_exact(ConditioningEvent::new(45.0, 1.0).unwrap(), 4, 3);
}

#[test]
fn envelope_matches_plain_rejection_continuous() {
    let d = TailedDistribution::pareto(3.0, 1.0).unwrap().centered().unwrap();
    let event = ConditioningEvent::tail(8.0).unwrap();
    let n = 4;
    let a = rejection_conditional(&d, n, &event, 5000, 7, &opts(ProposalKind::Plain)).unwrap();
    let b = rejection_conditional(&d, n, &event, 5000, 8, &opts(ProposalKind::Envelope)).unwrap();
    let crit = 1.95 * (2.0f64 / 5000.0).sqrt();
    let maxes = |s: &ConditionalSample| s.vectors().map(|v| v.iter().cloned().fold(f64::MIN, f64::max)).collect::<Vec<_>>();
    let sums = |s: &ConditionalSample| s.vectors().map(|v| v.iter().sum::<f64>()).collect::<Vec<_>>();
    assert!(ks_two(maxes(&a), maxes(&b)) < crit);
    assert!(ks_two(sums(&a), sums(&b)) < crit);
    let (pa, sa) = a.event_probability(&d);
    let (pb, sb) = b.event_probability(&d);
    assert!((pa - pb).abs() < 4.0 * (sa * sa + sb * sb).sqrt(), "{pa} vs {pb}");
}

#[test]
fn envelope_on_weibull_tail() {
    let d = TailedDistribution::weibull(0.5, 1.0).unwrap();
    let event = ConditioningEvent::tail(60.0).unwrap();
    let a = rejection_conditional(&d, 3, &event, 4000, 9, &opts(ProposalKind::Plain)).unwrap();
    let b = rejection_conditional(&d, 3, &event, 4000, 10, &opts(ProposalKind::Envelope)).unwrap();
    let crit = 1.95 * (2.0f64 / 4000.0).sqrt();
    let m = |s: &ConditionalSample| s.vectors().map(|v| v.iter().cloned().fold(f64::MIN, f64::max)).collect::<Vec<_>>();
    assert!(ks_two(m(&a), m(&b)) < crit);
    assert!(b.acceptance_rate() > a.acceptance_rate());
}

#[test]
fn envelope_rate_on_unbounded_zeta() {
    let z = TailedDistribution::zeta(3.0, None).unwrap();
    let event = ConditioningEvent::tail(200.0).unwrap();
    let exact = exact_sum_probability(&z, 4, &event, DEFAULT_SUPPORT_CAP).unwrap();
    let s = rejection_fixed_budget(&z, 4, &event, 400_000, 4, &opts(ProposalKind::Envelope)).unwrap();
    let (est, se) = s.event_probability(&z);
    assert!((est - exact).abs() < 4.0 * se, "{est} +- {se} vs {exact}");
}

#[test]
fn acceptance_rate_below_median() {
    let d = TailedDistribution::pareto(3.0, 1.0).unwrap();
    let event = ConditioningEvent::tail(2.3).unwrap();
    let s = rejection_conditional(&d, 2, &event, 50_000, 12, &opts(ProposalKind::Plain)).unwrap();
    assert!(s.acceptance_rate() > 0.5);
    for v in s.vectors() {
        assert!(event.contains(v.iter().sum()));
    }
    // independent MC estimate of P[S_2 > x] as the oracle
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let m = 200_000;
    let hits = (0..m).filter(|_| d.sample(&mut rng) + d.sample(&mut rng) > 2.3).count();
    let p = hits as f64 / m as f64;
    let a = s.acceptance_rate();
    let se = (p * (1.0 - p) / m as f64 + a * (1.0 - a) / s.attempts as f64).sqrt();
    assert!((a - p).abs() < 3.0 * se, "{a} vs {p}");
}

#[test]
fn replay_is_bit_identical() {
    let d = TailedDistribution::pareto(3.0, 1.0).unwrap();
    let event = ConditioningEvent::tail(12.0).unwrap();
    let o = SamplerOptions { chunk: 100, ..Default::default() };
    let a = rejection_conditional(&d, 3, &event, 1000, 5, &o).unwrap();
    let b = rejection_conditional(&d, 3, &event, 1000, 5, &o).unwrap();
    let c = rejection_conditional(&d, 3, &event, 1000, 5, &SamplerOptions { workers: 4, ..o }).unwrap();
    assert_eq!(a.coords, b.coords);
    assert_eq!(a.coords, c.coords);
    assert_eq!(a.attempts, c.attempts);
    let other = rejection_conditional(&d, 3, &event, 1000, 6, &o).unwrap();
    assert_ne!(a.coords, other.coords);
}

#[test]
fn budget_exhaustion_is_reported() {
    let d = TailedDistribution::pareto(3.0, 1.0).unwrap();
    let event = ConditioningEvent::tail(1e6).unwrap();
    let o = SamplerOptions { max_attempts: 10_000, proposal: ProposalKind::Plain, ..Default::default() };
    let r = rejection_conditional(&d, 3, &event, 10, 1, &o);
    assert!(matches!(r, Err(Error::AttemptBudgetExhausted { .. })));
}

#[test]
fn delta_below_span_rejected() {
    let z = TailedDistribution::zeta(3.0, None).unwrap();
    let event = ConditioningEvent::new(10.0, 0.5).unwrap();
    let r = rejection_conditional(&z, 2, &event, 10, 1, &SamplerOptions::default());
    assert!(matches!(r, Err(Error::DeltaBelowSpan { .. })));
    assert!(ConditioningEvent::new(1.0, 0.0).is_err());
}

#[test]
fn nu_x_pareto_tail() {
    let d = TailedDistribution::pareto(1.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ys: Vec<f64> = (0..100_000).map(|_| sample_nu_x(&d, 2.0, f64::INFINITY, &mut rng).unwrap()).collect();
    assert!(ys.iter().all(|&y| y > 2.0));
    assert!(ks_one(ys, |y| 1.0 - 2.0 / y) < 0.01);
}

#[test]
fn nu_x_lattice_cells() {
    let z = TailedDistribution::zeta(3.0, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in [1.0, 7.0, 300.0] {
        assert_eq!(sample_nu_x(&z, k - 1.0, 1.0, &mut rng).unwrap(), k);
    }
    let n = 200_000;
    let sixes = (0..n).filter(|_| sample_nu_x(&z, 5.0, 2.0, &mut rng).unwrap() == 6.0).count();
    let p = z.pdf(6.0) / (z.pdf(6.0) + z.pdf(7.0));
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((sixes as f64 / n as f64 - p).abs() < 4.0 * se);
    let cex = TailedDistribution::counterexample(Default::default()).unwrap();
    assert!(matches!(sample_nu_x(&cex, 2.0, 0.5, &mut rng), Err(Error::ZeroMassEvent)));
}

#[test]
fn direct_draws_for_single_coordinate() {
    let d = TailedDistribution::pareto(3.0, 1.0).unwrap();
    let event = ConditioningEvent::new(10.0, 5.0).unwrap();
    let s = rejection_conditional(&d, 1, &event, 20_000, 1, &SamplerOptions::default()).unwrap();
    assert_eq!(s.proposal, ProposalKind::Direct);
    assert_eq!(s.acceptance_rate(), 1.0);
    let m = d.mass(10.0, 5.0);
    let ys: Vec<f64> = s.vectors().map(|v| v[0]).collect();
    assert!(ks_one(ys, |y| (d.tail(10.0) - d.tail(y)) / m) < 0.012);
}

#[test]
fn proposal_positions_and_marginal() {
    let d = TailedDistribution::pareto(3.0, 1.0).unwrap();
    let event = ConditioningEvent::tail(20.0).unwrap();
    let n = 5;
    let s = proposal_conditional(&d, n, &event, 100_000, 21, 2).unwrap();
    let pos = s.big_positions.as_ref().unwrap();
    let mut counts = vec![0u64; n];
    for &j in pos {
        counts[j - 1] += 1;
    }
    let e = 100_000.0 / n as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    assert!(ChiSquared::new((n - 1) as f64).unwrap().sf(stat) > 1e-3);
    let big: Vec<f64> = s.vectors().zip(pos).map(|(v, &j)| v[j - 1]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let reference: Vec<f64> = (0..100_000).map(|_| sample_nu_x(&d, 20.0, f64::INFINITY, &mut rng).unwrap()).collect();
    assert!(ks_two(big, reference) < 0.01);
}

#[test]
fn proposal_n1_is_residual_law() {
    let d = TailedDistribution::pareto(2.0, 1.0).unwrap();
    let event = ConditioningEvent::tail(5.0).unwrap();
    let s = proposal_conditional(&d, 1, &event, 50_000, 1, 1).unwrap();
    let ys: Vec<f64> = s.vectors().map(|v| v[0]).collect();
    assert!(ks_one(ys, |y| 1.0 - d.tail(y) / d.tail(5.0)) < 0.01);
}

#[test]
fn density_ratio_basics() {
    let e = ConditioningEvent::tail(10.0).unwrap();
    assert_eq!(density_ratio_f1(&e, &[1.0, 2.0, 3.0], 0.1).unwrap(), 0.0);
    assert_eq!(density_ratio_f1(&e, &[5.0, 2.0, 4.0], 0.1).unwrap(), 10.0);
    assert_eq!(density_ratio_f2(&e, &[5.0, 2.0, 9.0], 0.01).unwrap(), 0.0);
    assert!((density_ratio_f2(&e, &[11.0, 2.0, 12.0], 0.01).unwrap() - 2.0 / 0.03).abs() < 1e-12);
    assert!(matches!(density_ratio_f1(&e, &[1.0], 0.0), Err(Error::ZeroNormalizer)));
    assert!(matches!(density_ratio_f2(&e, &[1.0], 0.0), Err(Error::ZeroNormalizer)));
}

#[test]
fn densities_integrate_to_one_on_lattice() {
    let z = TailedDistribution::zeta(3.0, None).unwrap();
    let p = Pmf::from_dist(&z, 120).unwrap();
    let e = ConditioningEvent::tail(15.0).unwrap();
    // exact normalisers of the truncated law
    let sum_prob = crate::lattice::convolve_n(&p, 3, DEFAULT_SUPPORT_CAP).unwrap().event_mass(&e);
    let single = p.event_mass(&e);
    let (mut i1, mut i2) = (crate::special::Neumaier::default(), crate::special::Neumaier::default());
    let k = p.len() as i64;
    for a in 0..k {
        for b in 0..k {
            for c in 0..k {
                let v = [(a + 1) as f64, (b + 1) as f64, (c + 1) as f64];
                let w = p.masses()[a as usize] * p.masses()[b as usize] * p.masses()[c as usize];
                i1.add(density_ratio_f1(&e, &v, sum_prob).unwrap() * w);
                i2.add(density_ratio_f2(&e, &v, single).unwrap() * w);
            }
        }
    }
    assert!((i1.sum() - 1.0).abs() < 1e-10);
    assert!((i2.sum() - 1.0).abs() < 1e-10);
}

#[test]
fn big_coordinate_count_trend() {
    // P[N >= 1] under the conditional law grows with x
    let z = TailedDistribution::zeta(3.0, Some(60)).unwrap();
    let p = Pmf::from_dist(&z, 60).unwrap();
    let mut prev = 0.0;
    for x in [10.0, 20.0, 40.0] {
        let e = ConditioningEvent::tail(x).unwrap();
        let law = exact_conditional_law(&p, 3, &e, &EnumerationBudget::default()).unwrap();
        let q: f64 = law.atoms.iter().filter(|(v, _)| v.iter().any(|&t| t as f64 > x)).map(|a| a.1).sum();
        assert!(q > prev, "x={x}");
        prev = q;
    }
}
