//! Continuous stack with scalar push/pop signals. Values are appended to a
//! growing matrix and never rewritten; each carries a non-negative strength
//! that the pop signal consumes top-down. The read blends rows from the top
//! until one total unit of strength is covered, so binary signals make the
//! structure behave exactly like a discrete stack.

/// Value rows plus their current strengths. Rows only ever accumulate;
/// strengths are rewritten each step.
pub struct NeuralStackState {
    width: usize,
    pub values: Vec<Vec<f64>>,
    pub strengths: Vec<f64>,
}

impl NeuralStackState {
    pub fn new(width: usize) -> Self {
        NeuralStackState {
            width,
            values: Vec::new(),
            strengths: Vec::new(),
        }
    }

    /// One controller step: pop with signal `pop`, append `value` with
    /// strength `push`, then read the blended top of the stack.
    pub fn step(&mut self, push: f64, pop: f64, value: &[f64]) -> Vec<f64> {
        assert!((0.0..=1.0).contains(&push) && (0.0..=1.0).contains(&pop));
        assert_eq!(value.len(), self.width);

        // Pop consumes strength from the top down: each row loses whatever
        // of the pop signal the rows above it did not absorb.
        let old = self.strengths.clone();
        for i in 0..old.len() {
            let above: f64 = old[i + 1..].iter().sum();
            self.strengths[i] = (old[i] - (pop - above).max(0.0)).max(0.0);
        }
        self.strengths.push(push);
        self.values.push(value.to_vec());

        // Read covers one unit of strength from the top down.
        let mut read = vec![0.0; self.width];
        for i in 0..self.strengths.len() {
            let above: f64 = self.strengths[i + 1..].iter().sum();
            let share = self.strengths[i].min((1.0 - above).max(0.0));
            if share > 0.0 {
                for (slot, v) in read.iter_mut().zip(&self.values[i]) {
                    *slot += share * v;
                }
            }
        }
        read
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn two_pushes_then_a_pop_recover_lifo_order() {
        let v1 = vec![1.0, 0.0, 0.0];
        let v2 = vec![0.0, 1.0, 0.0];
        let mut stack = NeuralStackState::new(3);

        assert_eq!(stack.step(1.0, 0.0, &v1), v1);
        assert_eq!(stack.step(1.0, 0.0, &v2), v2);
        assert_eq!(stack.strengths, vec![1.0, 1.0]);

        let read = stack.step(0.0, 1.0, &vec![0.0; 3]);
        assert_eq!(read, v1);
        assert_eq!(stack.strengths, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_signals_only_append_an_unread_row() {
        let v1 = vec![2.0, -1.0];
        let mut stack = NeuralStackState::new(2);
        let first = stack.step(1.0, 0.0, &v1);
        let second = stack.step(0.0, 0.0, &[9.0, 9.0]);
        assert_eq!(first, second);
        assert_eq!(stack.strengths, vec![1.0, 0.0]);
        assert_eq!(stack.values.len(), 2);
    }

    #[test]
    fn popping_an_empty_stack_reads_zeros() {
        let mut stack = NeuralStackState::new(2);
        let read = stack.step(0.0, 1.0, &[5.0, 5.0]);
        assert_eq!(read, vec![0.0, 0.0]);
        assert_eq!(stack.strengths, vec![0.0]);
    }

    #[test]
    fn partial_signals_blend_the_top_two_rows() {
        let mut stack = NeuralStackState::new(1);
        stack.step(1.0, 0.0, &[4.0]);
        let read = stack.step(0.5, 0.0, &[8.0]);
        // Half a unit of the new row plus half a unit of the old one.
        assert!((read[0] - (0.5 * 8.0 + 0.5 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn binary_programs_bisimulate_a_discrete_stack() {
        let width = 3;
        for program in 0..100u64 {
            let mut rng = StdRng::seed_from_u64(4000 + program);
            let mut neural = NeuralStackState::new(width);
            let mut oracle: Vec<Vec<f64>> = Vec::new();
            for _ in 0..20 {
                let is_push = rng.gen::<bool>();
                let value: Vec<f64> = (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let read = if is_push {
                    oracle.push(value.clone());
                    neural.step(1.0, 0.0, &value)
                } else {
                    oracle.pop();
                    neural.step(0.0, 1.0, &vec![0.0; width])
                };
                let want = oracle.last().cloned().unwrap_or_else(|| vec![0.0; width]);
                for (got, expect) in read.iter().zip(&want) {
                    assert!(
                        (got - expect).abs() < 1e-12,
                        "program {program} diverged from the discrete stack"
                    );
                }
            }
        }
    }
}
