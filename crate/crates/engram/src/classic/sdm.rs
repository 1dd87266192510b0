//! Sparse distributed memory over long binary addresses.
//!
//! A fixed set of random hard locations each carries one signed counter per
//! content bit. A write increments or decrements the counters of every
//! location whose address lies strictly within a Hamming radius of the
//! target address; a read sums those counters and thresholds at zero, with
//! a non-negative sum mapping to 1. When no location is activated the read
//! therefore comes back all ones, and the result is flagged degenerate.

use rand::Rng;

/// Hard-location addresses (bit-packed) with per-bit signed counters.
pub struct SdmMemory {
    d: usize,
    radius: u32,
    addrs: Vec<Vec<u64>>,
    counters: Vec<Vec<i32>>,
}

/// One read: decoded bits, how many locations were activated, and whether
/// the activation set was empty.
pub struct SdmRead {
    pub bits: Vec<u8>,
    pub locations: usize,
    pub degenerate: bool,
}

fn pack_bits(bits: &[u8]) -> Vec<u64> {
    let mut words = vec![0u64; bits.len().div_ceil(64)];
    for (i, b) in bits.iter().enumerate() {
        debug_assert!(*b <= 1);
        if *b == 1 {
            words[i / 64] |= 1u64 << (i % 64);
        }
    }
    words
}

fn hamming(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

impl SdmMemory {
    /// Memory with `locations` uniformly random `d`-bit hard addresses.
    pub fn new<R: Rng>(locations: usize, d: usize, radius: u32, rng: &mut R) -> Self {
        let addrs = (0..locations)
            .map(|_| {
                let bits: Vec<u8> = (0..d).map(|_| rng.gen_range(0..=1)).collect();
                pack_bits(&bits)
            })
            .collect();
        SdmMemory {
            d,
            radius,
            addrs,
            counters: vec![vec![0; d]; locations],
        }
    }

    /// Memory with caller-chosen hard addresses.
    pub fn with_addresses(addresses: &[Vec<u8>], radius: u32) -> Self {
        let d = addresses.first().map_or(0, |a| a.len());
        let addrs: Vec<_> = addresses
            .iter()
            .map(|a| {
                assert_eq!(a.len(), d, "addresses must share a length");
                pack_bits(a)
            })
            .collect();
        SdmMemory {
            d,
            radius,
            addrs,
            counters: vec![vec![0; d]; addresses.len()],
        }
    }

    fn activated(&self, address: &[u8]) -> Vec<usize> {
        assert_eq!(address.len(), self.d);
        let key = pack_bits(address);
        (0..self.addrs.len())
            .filter(|&m| hamming(&self.addrs[m], &key) < self.radius)
            .collect()
    }

    /// Adds ±1 to every counter of every activated location: +1 where the
    /// content bit is 1, -1 where it is 0.
    pub fn write(&mut self, address: &[u8], content: &[u8]) {
        assert_eq!(content.len(), self.d);
        for m in self.activated(address) {
            for (c, bit) in self.counters[m].iter_mut().zip(content) {
                *c += if *bit == 1 { 1 } else { -1 };
            }
        }
    }

    /// Sums activated counters per bit and thresholds at zero (>= 0 reads 1).
    pub fn read(&self, address: &[u8]) -> SdmRead {
        let hits = self.activated(address);
        let mut sums = vec![0i64; self.d];
        for &m in &hits {
            for (s, c) in sums.iter_mut().zip(&self.counters[m]) {
                *s += i64::from(*c);
            }
        }
        SdmRead {
            bits: sums.iter().map(|s| u8::from(*s >= 0)).collect(),
            locations: hits.len(),
            degenerate: hits.is_empty(),
        }
    }
}

/// Radius whose activation probability for a random `d`-bit address pair
/// lands closest to `target` (activation is Hamming distance < radius).
pub fn radius_for_access_fraction(d: usize, target: f64) -> u32 {
    // Binomial(d, 1/2) pmf by recurrence; P(dist < k+1) accumulates in
    // `cum`. Once the CDF passes the target the gap only grows.
    let mut p = 0.5f64.powi(d as i32);
    let mut cum = 0.0;
    let mut best_gap = f64::INFINITY;
    let mut best_r = (d + 1) as u32;
    for k in 0..=d {
        cum += p;
        let gap = (cum - target).abs();
        if gap < best_gap {
            best_gap = gap;
            best_r = (k + 1) as u32;
        }
        if cum >= target {
            break;
        }
        p *= (d - k) as f64 / (k + 1) as f64;
    }
    best_r
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn random_bits(rng: &mut StdRng, d: usize) -> Vec<u8> {
        (0..d).map(|_| rng.gen_range(0..=1)).collect()
    }

    #[test]
    fn single_location_at_the_cue_round_trips_exactly() {
        let addr = vec![1, 0, 1, 1, 0, 0, 1, 0];
        let mut mem = SdmMemory::with_addresses(&[addr.clone()], 1);
        let content = vec![0, 1, 1, 0, 1, 0, 0, 1];
        mem.write(&addr, &content);
        let out = mem.read(&addr);
        assert_eq!(out.bits, content);
        assert_eq!(out.locations, 1);
        assert!(!out.degenerate);
    }

    #[test]
    fn empty_activation_set_reads_all_ones_and_is_flagged() {
        let mem = SdmMemory::with_addresses(&[vec![0; 8]], 1);
        let out = mem.read(&[1; 8]);
        assert!(out.degenerate);
        assert_eq!(out.locations, 0);
        assert_eq!(out.bits, vec![1; 8]);
    }

    #[test]
    fn unwritten_but_activated_memory_also_reads_all_ones() {
        // Zero counters threshold to 1 under the >= 0 convention.
        let addr = vec![1, 1, 0, 0];
        let mem = SdmMemory::with_addresses(&[addr.clone()], 2);
        let out = mem.read(&addr);
        assert!(!out.degenerate);
        assert_eq!(out.bits, vec![1; 4]);
    }

    #[test]
    fn radius_tuning_hits_the_requested_access_fraction() {
        let r = radius_for_access_fraction(256, 0.1);
        // d(m, x) ~ Binomial(256, 1/2); the chosen radius should put the
        // activation probability near the target.
        let mut p = 0.5f64.powi(256);
        let mut cum = 0.0;
        for k in 0..(r as usize) {
            cum += p;
            p *= (256 - k) as f64 / (k + 1) as f64;
        }
        assert!(
            (cum - 0.1).abs() < 0.02,
            "activation probability {cum} off target"
        );
    }

    #[test]
    fn fifty_items_survive_in_ten_thousand_locations() {
        let d = 256;
        let mut rng = StdRng::seed_from_u64(99);
        let radius = radius_for_access_fraction(d, 0.1);
        let mut mem = SdmMemory::new(10_000, d, radius, &mut rng);
        let items: Vec<(Vec<u8>, Vec<u8>)> = (0..50)
            .map(|_| (random_bits(&mut rng, d), random_bits(&mut rng, d)))
            .collect();

        let count_matches = |bits: &[u8], content: &[u8]| {
            bits.iter().zip(content).filter(|(a, b)| a == b).count()
        };

        let mut round_trip = 0usize;
        let mut activated = 0usize;
        for (addr, content) in &items {
            mem.write(addr, content);
            let out = mem.read(addr);
            assert!(!out.degenerate);
            activated += out.locations;
            round_trip += count_matches(&out.bits, content);
        }
        let acc = round_trip as f64 / (50 * d) as f64;
        assert!(acc >= 0.95, "round-trip bit accuracy {acc} below 0.95");
        let mean_access = activated as f64 / 50.0;
        assert!(
            (500.0..1500.0).contains(&mean_access),
            "mean activated locations {mean_access} far from the tuned 1000"
        );

        // Re-reading everything once all 50 items are stored pays for the
        // coherent cross-talk between overlapping activation sets: at a
        // 10% access fraction that costs several percent of the bits.
        let reread: usize = items
            .iter()
            .map(|(addr, content)| count_matches(&mem.read(addr).bits, content))
            .sum();
        let reread_acc = reread as f64 / (50 * d) as f64;
        assert!(
            reread_acc >= 0.85,
            "full-load bit accuracy {reread_acc} collapsed"
        );
    }
}
