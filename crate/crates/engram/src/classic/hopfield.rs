//! Binary Hopfield network with Hebbian storage and asynchronous recall.
//!
//! Patterns are ±1 vectors. Storage superimposes outer products with a
//! zeroed diagonal; recall scans units in a fixed cyclic order from a
//! caller-chosen start offset, flipping each unit toward the sign of its
//! local field. A zero field leaves the unit unchanged, so every update
//! either lowers the energy or leaves it fixed.

/// Symmetric weight matrix over `n` binary units, diagonal held at zero.
pub struct HopfieldNet {
    pub n: usize,
    w: Vec<f64>,
}

/// Trajectory of one recall: final state, energy after every single-unit
/// update (prefixed with the cue's energy), and whether a full sweep
/// completed without any flip.
pub struct HopfieldRun {
    pub state: Vec<i8>,
    pub energies: Vec<f64>,
    pub converged: bool,
}

impl HopfieldNet {
    /// Hebbian storage: w_ij = sum over patterns of x_i * x_j, diagonal zero.
    pub fn store(patterns: &[Vec<i8>]) -> Self {
        let n = patterns.first().map_or(0, |p| p.len());
        let mut w = vec![0.0; n * n];
        for p in patterns {
            assert_eq!(p.len(), n, "patterns must share a length");
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        w[i * n + j] += f64::from(p[i]) * f64::from(p[j]);
                    }
                }
            }
        }
        HopfieldNet { n, w }
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    fn field(&self, state: &[i8], i: usize) -> f64 {
        let row = &self.w[i * self.n..(i + 1) * self.n];
        row.iter()
            .zip(state)
            .map(|(w, x)| w * f64::from(*x))
            .sum()
    }

    /// E = -1/2 * x^T W x.
    pub fn energy(&self, state: &[i8]) -> f64 {
        let mut e = 0.0;
        for i in 0..self.n {
            e += f64::from(state[i]) * self.field(state, i);
        }
        -0.5 * e
    }

    /// Asynchronous recall: cyclic unit scan beginning at `start % n`, at
    /// most `max_sweeps` passes, stopping after the first flip-free sweep.
    pub fn recall(&self, cue: &[i8], max_sweeps: usize, start: usize) -> HopfieldRun {
        assert_eq!(cue.len(), self.n);
        let mut state = cue.to_vec();
        let mut energies = vec![self.energy(&state)];
        let mut converged = false;
        for _ in 0..max_sweeps {
            let mut flipped = false;
            for k in 0..self.n {
                let i = (start + k) % self.n;
                let h = self.field(&state, i);
                let next = if h > 0.0 {
                    1
                } else if h < 0.0 {
                    -1
                } else {
                    state[i]
                };
                if next != state[i] {
                    state[i] = next;
                    flipped = true;
                }
                energies.push(self.energy(&state));
            }
            if !flipped {
                converged = true;
                break;
            }
        }
        HopfieldRun {
            state,
            energies,
            converged,
        }
    }
}
