//! Holographic reduced representations in the elementwise-complex form:
//! binding multiplies moduli and adds phases, a trace superimposes bound
//! pairs, and decoding multiplies by the inverse key. With unit-modulus
//! keys the inverse is just the conjugate; keys that drift off the unit
//! circle still invert exactly but raise a warning flag.
//!
//! A redundant trace keeps S copies, each binding through its own fixed
//! random permutation of the key, and averages the S decodes. Interference
//! from Q stored pairs leaves a raw decode cosine near 1/sqrt(Q); copies
//! shrink that noise roughly by 1/S.

use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::TAU;

const UNIT_TOL: f64 = 1e-9;

/// Random phase vector: every element e^{i theta}, theta uniform.
pub fn random_unit_key<R: Rng>(n: usize, rng: &mut R) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..TAU)))
        .collect()
}

/// Elementwise complex product.
pub fn bind(x: &[Complex64], y: &[Complex64]) -> Vec<Complex64> {
    assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).collect()
}

/// Decode result plus a warning when the key was not unit-modulus.
pub struct HrrDecode {
    pub value: Vec<Complex64>,
    pub non_unit_key: bool,
}

fn inverse_decode(trace: &[Complex64], key: &[Complex64]) -> HrrDecode {
    assert_eq!(trace.len(), key.len());
    let mut non_unit = false;
    let value = trace
        .iter()
        .zip(key)
        .map(|(t, k)| {
            let n2 = k.norm_sqr();
            if (n2.sqrt() - 1.0).abs() > UNIT_TOL {
                non_unit = true;
            }
            t * k.conj() / n2
        })
        .collect();
    HrrDecode {
        value,
        non_unit_key: non_unit,
    }
}

/// Single superimposed trace m = sum over pairs of x ⊛ y.
pub struct HrrTrace {
    pub m: Vec<Complex64>,
}

impl HrrTrace {
    pub fn encode(pairs: &[(Vec<Complex64>, Vec<Complex64>)]) -> Self {
        let n = pairs.first().map_or(0, |(x, _)| x.len());
        let mut m = vec![Complex64::new(0.0, 0.0); n];
        for (x, y) in pairs {
            for (slot, b) in m.iter_mut().zip(bind(x, y)) {
                *slot += b;
            }
        }
        HrrTrace { m }
    }

    pub fn decode(&self, key: &[Complex64]) -> HrrDecode {
        inverse_decode(&self.m, key)
    }
}

/// S traces over the same pairs, each binding a permuted key.
pub struct RedundantTrace {
    pub copies: Vec<Vec<Complex64>>,
    pub perms: Vec<Vec<usize>>,
}

fn permute(x: &[Complex64], perm: &[usize]) -> Vec<Complex64> {
    perm.iter().map(|&i| x[i]).collect()
}

fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.gen_range(0..=i));
    }
    p
}

impl RedundantTrace {
    pub fn encode<R: Rng>(
        pairs: &[(Vec<Complex64>, Vec<Complex64>)],
        copies: usize,
        rng: &mut R,
    ) -> Self {
        assert!(copies > 0, "need at least one copy");
        let n = pairs.first().map_or(0, |(x, _)| x.len());
        let perms: Vec<_> = (0..copies).map(|_| random_permutation(n, rng)).collect();
        let copies = perms
            .iter()
            .map(|perm| {
                let permuted: Vec<_> = pairs
                    .iter()
                    .map(|(x, y)| (permute(x, perm), y.clone()))
                    .collect();
                HrrTrace::encode(&permuted).m
            })
            .collect();
        RedundantTrace { copies, perms }
    }

    /// Averages the per-copy inverse decodes of the permuted key.
    pub fn decode(&self, key: &[Complex64]) -> HrrDecode {
        let n = key.len();
        let s = self.copies.len() as f64;
        let mut value = vec![Complex64::new(0.0, 0.0); n];
        let mut non_unit = false;
        for (trace, perm) in self.copies.iter().zip(&self.perms) {
            let dec = inverse_decode(trace, &permute(key, perm));
            non_unit |= dec.non_unit_key;
            for (acc, v) in value.iter_mut().zip(dec.value) {
                *acc += v / s;
            }
        }
        HrrDecode {
            value,
            non_unit_key: non_unit,
        }
    }
}

/// Cosine between complex vectors viewed as stacked (re, im) real vectors.
pub fn cosine(a: &[Complex64], b: &[Complex64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| (x * y.conj()).re).sum();
    let na: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn random_pairs(
        rng: &mut StdRng,
        q: usize,
        n: usize,
    ) -> Vec<(Vec<Complex64>, Vec<Complex64>)> {
        (0..q)
            .map(|_| (random_unit_key(n, rng), random_unit_key(n, rng)))
            .collect()
    }

    #[test]
    fn single_pair_round_trips_exactly() {
        let mut rng = StdRng::seed_from_u64(3);
        let pairs = random_pairs(&mut rng, 1, 64);
        let trace = HrrTrace::encode(&pairs);
        let dec = trace.decode(&pairs[0].0);
        assert!(!dec.non_unit_key);
        for (got, want) in dec.value.iter().zip(&pairs[0].1) {
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn non_unit_key_still_inverts_but_raises_the_flag() {
        let mut rng = StdRng::seed_from_u64(4);
        let mut pairs = random_pairs(&mut rng, 1, 16);
        for k in pairs[0].0.iter_mut() {
            *k *= 2.0;
        }
        let trace = HrrTrace::encode(&pairs);
        let dec = trace.decode(&pairs[0].0);
        assert!(dec.non_unit_key);
        for (got, want) in dec.value.iter().zip(&pairs[0].1) {
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn interference_follows_the_inverse_sqrt_law() {
        // With Q superimposed pairs the decode carries Q-1 unit-modulus
        // interference terms per element, so the raw cosine sits near
        // 1/sqrt(Q) (0.2236 for Q=20) rather than anywhere close to 1.
        let mut rng = StdRng::seed_from_u64(5);
        let (q, n, trials) = (20, 512, 60);
        let mut total = 0.0;
        let mut count = 0;
        for _ in 0..trials {
            let pairs = random_pairs(&mut rng, q, n);
            let trace = HrrTrace::encode(&pairs);
            for (x, y) in &pairs {
                total += cosine(&trace.decode(x).value, y);
                count += 1;
            }
        }
        let mean = total / count as f64;
        assert!(
            (0.18..0.27).contains(&mean),
            "mean decode cosine {mean} off the 1/sqrt(Q) prediction"
        );
    }

    #[test]
    fn redundant_copies_strictly_raise_decode_quality() {
        let (q, n, trials) = (20, 512, 40);
        let mut diffs = Vec::new();
        for t in 0..trials {
            let mut rng = StdRng::seed_from_u64(600 + t);
            let pairs = random_pairs(&mut rng, q, n);
            let one = RedundantTrace::encode(&pairs, 1, &mut rng);
            let four = RedundantTrace::encode(&pairs, 4, &mut rng);
            let mean = |trace: &RedundantTrace| {
                pairs
                    .iter()
                    .map(|(x, y)| cosine(&trace.decode(x).value, y))
                    .sum::<f64>()
                    / q as f64
            };
            diffs.push(mean(&four) - mean(&one));
        }
        let mean_diff = diffs.iter().sum::<f64>() / trials as f64;
        let var = diffs
            .iter()
            .map(|d| (d - mean_diff).powi(2))
            .sum::<f64>()
            / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!(
            mean_diff > 3.0 * se && mean_diff > 0.0,
            "four copies did not beat one: diff {mean_diff} se {se}"
        );
    }
}
