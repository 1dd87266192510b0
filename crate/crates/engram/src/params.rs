//! Named, flat-storage trainable parameters shared across tape rebuilds.
//!
//! Models register parameters once, bind them into each fresh [`Tape`] as
//! leaves, and after `backward` the store absorbs leaf gradients. Gradients
//! accumulate across absorptions (mini-batch = several tapes), so optimizers
//! must `zero_grads` between steps.

use crate::tape::{Shape, Tape, TensorId};
use rand::Rng;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub shape: Shape,
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Shape, data: Vec<f64>) -> ParamId {
        assert_eq!(shape.len(), data.len(), "parameter data length mismatch");
        let name = name.into();
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        let n = data.len();
        self.params.push(Param { name, shape, data, grad: vec![0.0; n] });
        ParamId(self.params.len() - 1)
    }

    /// Entries drawn uniformly from [-0.1, 0.1].
    pub fn add_uniform(&mut self, name: impl Into<String>, shape: Shape, rng: &mut impl Rng) -> ParamId {
        let data = (0..shape.len()).map(|_| rng.gen_range(-0.1..0.1)).collect();
        self.add(name, shape, data)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: Shape) -> ParamId {
        let data = vec![0.0; shape.len()];
        self.add(name, shape, data)
    }

    pub fn add_const(&mut self, name: impl Into<String>, shape: Shape, value: f64) -> ParamId {
        let data = vec![value; shape.len()];
        self.add(name, shape, data)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn total_len(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Binds a parameter into a tape as a leaf carrying its current values.
    pub fn bind(&self, tape: &mut Tape, id: ParamId) -> TensorId {
        let p = &self.params[id.0];
        tape.param_leaf(p.shape, &p.data, id)
    }

    /// Accumulates gradients from a backward-completed tape into the store.
    pub fn absorb_grads(&mut self, tape: &Tape) {
        for (pid, g) in tape.param_bindings() {
            let dst = &mut self.params[pid.0].grad;
            debug_assert_eq!(dst.len(), g.len());
            for (d, g) in dst.iter_mut().zip(g) {
                *d += g;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Scales all accumulated gradients, e.g. by 1/batch_size.
    pub fn scale_grads(&mut self, s: f64) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g *= s);
        }
    }

    pub fn grad_global_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| &p.grad)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn absorb_accumulates_across_tapes() {
        let mut store = ParamStore::new();
        let w = store.add("w", Shape::Vector(2), vec![1.0, -1.0]);
        for _ in 0..3 {
            let mut t = Tape::new();
            let wt = store.bind(&mut t, w);
            let loss = t.dot(wt, wt);
            t.backward(loss);
            store.absorb_grads(&t);
        }
        assert_eq!(store.get(w).grad, vec![6.0, -6.0]);
        store.zero_grads();
        assert_eq!(store.get(w).grad, vec![0.0, 0.0]);
    }

    #[test]
    fn uniform_init_is_bounded_and_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut store = ParamStore::new();
        let id = store.add_uniform("w", Shape::Matrix(8, 8), &mut rng);
        assert!(store.get(id).data.iter().all(|v| v.abs() <= 0.1));

        let mut rng2 = ChaCha8Rng::seed_from_u64(42);
        let mut store2 = ParamStore::new();
        let id2 = store2.add_uniform("w", Shape::Matrix(8, 8), &mut rng2);
        assert_eq!(store.get(id).data, store2.get(id2).data);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.add_zeros("w", Shape::Vector(1));
        store.add_zeros("w", Shape::Vector(1));
    }
}
