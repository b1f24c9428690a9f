//! Position of the maximum, coordinate transpositions, and the operator
//! that moves the first maximum to the last slot.
//!
//! Indices in the public API are 1-based.

use crate::error::{Error, Result};

/// Smallest 1-based index attaining the maximum: strictly larger than every
/// earlier coordinate, at least as large as every later one.
pub fn argmax_first(v: &[f64]) -> Result<usize> {
    if v.is_empty() {
        return Err(Error::EmptyVector);
    }
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    Ok(best + 1)
}

/// Exchange coordinate `j` (1-based) with the last one.
pub fn sigma(v: &[f64], j: usize) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    sigma_in_place(&mut out, j)?;
    Ok(out)
}

pub fn sigma_in_place(v: &mut [f64], j: usize) -> Result<()> {
    let n = v.len();
    if j == 0 || j > n {
        return Err(Error::IndexOutOfRange { index: j, len: n });
    }
    v.swap(j - 1, n - 1);
    Ok(())
}

/// Move the first maximum to the last position.
pub fn swap_max_last(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    swap_max_last_in_place(&mut out)?;
    Ok(out)
}

pub fn swap_max_last_in_place(v: &mut [f64]) -> Result<usize> {
    let m = argmax_first(v)?;
    let n = v.len();
    v.swap(m - 1, n - 1);
    Ok(m)
}

/// Integer-valued variant used by the lattice enumerator.
pub fn swap_max_last_i64(v: &mut [i64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    let n = v.len();
    v.swap(best, n - 1);
    best + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Case-by-case form of the operator: coordinates before the first
    /// maximum stay, the first maximum goes last, the old last coordinate
    /// takes its place.
    fn piecewise(v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let m = (0..n)
            .find(|&k| (0..k).all(|j| v[k] > v[j]) && (k..n).all(|j| v[k] >= v[j]))
            .unwrap();
        (0..n)
            .map(|i| {
                if i == n - 1 {
                    v[m]
                } else if i == m {
                    v[n - 1]
                } else {
                    v[i]
                }
            })
            .collect()
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_first(&[1.0, 3.0, 3.0]).unwrap(), 2);
        assert_eq!(argmax_first(&[5.0]).unwrap(), 1);
        assert_eq!(argmax_first(&[2.0, 2.0, 1.0]).unwrap(), 1);
        assert_eq!(argmax_first(&[]), Err(Error::EmptyVector));
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(&[1.0, 2.0, 3.0], 1).unwrap(), vec![3.0, 2.0, 1.0]);
        assert_eq!(sigma(&[1.0, 2.0, 3.0], 3).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(sigma(&[4.0, 7.0, 1.0, 2.0], 2).unwrap(), vec![4.0, 2.0, 1.0, 7.0]);
        assert_eq!(sigma(&[1.0], 2), Err(Error::IndexOutOfRange { index: 2, len: 1 }));
        assert!(sigma(&[1.0], 0).is_err());
    }

    #[test]
    fn swap_examples() {
        assert_eq!(swap_max_last(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(swap_max_last(&[3.0, 1.0, 2.0]).unwrap(), vec![2.0, 1.0, 3.0]);
        assert_eq!(swap_max_last(&[3.0, 1.0, 3.0]).unwrap(), vec![3.0, 1.0, 3.0]);
        assert_eq!(swap_max_last(&[]), Err(Error::EmptyVector));
    }

    #[test]
    fn piecewise_agrees_on_many_vectors_with_ties() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100_000 {
            let n = rng.gen_range(1..7);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0..4) as f64).collect();
            assert_eq!(swap_max_last(&v).unwrap(), piecewise(&v), "{v:?}");
        }
    }

    fn multiset(v: &[f64]) -> Vec<u64> {
        let mut b: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
        b.sort_unstable();
        b
    }

    proptest! {
        #[test]
        fn last_is_max_and_multiset_kept(v in prop::collection::vec(-1e6f64..1e6, 1..12)) {
            let w = swap_max_last(&v).unwrap();
            let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(*w.last().unwrap(), mx);
            prop_assert_eq!(multiset(&w), multiset(&v));
            let m = argmax_first(&v).unwrap();
            prop_assert_eq!(w, sigma(&v, m).unwrap());
        }

        #[test]
        fn sigma_is_involution(v in prop::collection::vec(-10f64..10.0, 1..10), j in 1usize..10) {
            prop_assume!(j <= v.len());
            let w = sigma(&sigma(&v, j).unwrap(), j).unwrap();
            prop_assert_eq!(w, v);
        }

        // The operator is idempotent; the transposition it applies is an involution.
        #[test]
        fn swap_undone_by_its_transposition(v in prop::collection::hash_set(-1000i32..1000, 1..10)) {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            let once = swap_max_last(&v).unwrap();
            prop_assert_eq!(swap_max_last(&once).unwrap(), once.clone());
            let m = argmax_first(&v).unwrap();
            prop_assert_eq!(sigma(&once, m).unwrap(), v);
        }
    }
}
