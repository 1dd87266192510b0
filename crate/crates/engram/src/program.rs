//! Stored-program memory: key-value slots whose values are the weights of
//! the data-interface network, retrieved by content each timestep.
//!
//! A lookup builds the working interface weight as an attention-weighted
//! blend of stored programs (or a straight-through one-hot pick in hard
//! mode). Wrapping an NTM core with one program memory per control head
//! gives a machine that swaps its memory-access program on the fly.

use crate::controllers::{Linear, LstmCell};
use crate::ntm::{address_head, emission_size, read_slot, squash_emission, write_slot, NtmConfig};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Shape, Tape, TensorId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Key-value program store: row i holds (key_i, program_i).
#[derive(Clone, Debug)]
pub struct ProgramMemory {
    pub programs: usize,
    pub key_dim: usize,
    pub value_dim: usize,
    keys: ParamId,
    values: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundProgramMemory {
    pub keys: TensorId,
    pub values: TensorId,
}

impl ProgramMemory {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        programs: usize,
        key_dim: usize,
        value_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(programs >= 1, "need at least one program");
        let keys = store.add_uniform(format!("{prefix}.keys"), Shape::Matrix(programs, key_dim), rng);
        let values = store.add_uniform(format!("{prefix}.values"), Shape::Matrix(programs, value_dim), rng);
        ProgramMemory { programs, key_dim, value_dim, keys, values }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundProgramMemory {
        BoundProgramMemory { keys: store.bind(tape, self.keys), values: store.bind(tape, self.values) }
    }
}

/// How a lookup turns match scores into attention.
pub enum LookupMode<'a> {
    Soft,
    /// Straight-through Gumbel-softmax: one-hot forward, soft backward.
    Hard { temperature: f64, rng: &'a mut ChaCha8Rng },
}

pub fn gumbel_noise(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| -f64::ln(-f64::ln(rng.gen_range(1e-12..1.0)))).collect()
}

/// Retrieves a program: `attn = softmax(β·cos(k, key_i))`, `p = attnᵀ·values`.
/// A zero-norm query scores 0 against every key (uniform attention) and is
/// flagged on the tape.
pub fn program_lookup(
    tape: &mut Tape,
    pm: &BoundProgramMemory,
    key: TensorId,
    beta: TensorId,
    mode: &mut LookupMode,
) -> (TensorId, TensorId) {
    let sims = tape.cosine_rows(pm.keys, key);
    let attn = match mode {
        LookupMode::Soft => tape.softmax_with_strength(sims, beta),
        LookupMode::Hard { temperature, rng } => {
            let p = tape.shape(sims).len();
            let noise = gumbel_noise(rng, p);
            let logits = tape.mul_scalar(sims, beta);
            tape.gumbel_softmax_st(logits, *temperature, &noise)
        }
    };
    let vt = tape.transpose(pm.values);
    let p = tape.matvec(vt, attn);
    (p, attn)
}

/// Pairwise key-alignment penalty `l_p = Σ_{i<j} cos(key_i, key_j)`.
pub fn program_key_cosine_loss(tape: &mut Tape, keys: TensorId) -> TensorId {
    let rows = tape.shape(keys).rows();
    let mut terms = Vec::new();
    for i in 0..rows {
        for j in i + 1..rows {
            let a = tape.row(keys, i);
            let b = tape.row(keys, j);
            terms.push(tape.cosine_similarity(a, b));
        }
    }
    if terms.is_empty() {
        return tape.leaf_scalar(0.0);
    }
    let all = tape.concat(&terms);
    tape.sum(all)
}

/// Orthogonality penalty `l_p2 = ||K·Kᵀ − I||_F`; needs a square key block.
pub fn program_key_orthogonality_loss(tape: &mut Tape, keys: TensorId) -> TensorId {
    let (rows, cols) = match tape.shape(keys) {
        Shape::Matrix(r, c) => (r, c),
        s => panic!("keys must be a matrix, got {s:?}"),
    };
    assert_eq!(rows, cols, "orthogonality loss needs key dim = program count");
    let kt = tape.transpose(keys);
    let kkt = tape.matmul(keys, kt);
    let mut eye = vec![0.0; rows * rows];
    for i in 0..rows {
        eye[i * rows + i] = 1.0;
    }
    let id = tape.leaf_mat(rows, rows, &eye);
    let dev = tape.sub(kkt, id);
    let sq = tape.mul(dev, dev);
    let total = tape.sum(sq);
    tape.pow_const(total, 0.5)
}

/// Both key regularizers; the orthogonality term requires key dim = P.
pub fn program_key_regularizers(tape: &mut Tape, keys: TensorId) -> (TensorId, TensorId) {
    let l_p = program_key_cosine_loss(tape, keys);
    let l_p2 = program_key_orthogonality_loss(tape, keys);
    (l_p, l_p2)
}

pub const ETA_INIT: f64 = 0.1;
pub const ETA_DECAY: f64 = 0.9;
pub const ETA_DECAY_EVERY: usize = 1000;

/// Annealing coefficient `η(step) = 0.1 · 0.9^⌊step/1000⌋`.
pub fn eta(step: usize) -> f64 {
    ETA_INIT * ETA_DECAY.powi((step / ETA_DECAY_EVERY) as i32)
}

/// `loss = pred + η(step)·l_p`; the coefficient is a constant, not a tape node.
pub fn annealed_total_loss(tape: &mut Tape, pred_loss: TensorId, l_p: TensorId, step: usize) -> TensorId {
    let weighted = tape.scale(l_p, eta(step));
    tape.add(pred_loss, weighted)
}

/// NTM core where each control head's interface weights come from its own
/// program memory instead of a static linear map.
#[derive(Clone, Debug)]
pub struct NutmModel {
    pub cfg: NtmConfig,
    pub programs: usize,
    pub key_dim: usize,
    pub controller: LstmCell,
    /// per control head (write heads first): hidden -> [key, strength]
    pub meta: Vec<Linear>,
    pub program_mems: Vec<ProgramMemory>,
    pub output: Linear,
}

pub struct BoundNutm {
    pub controller: crate::controllers::BoundLstm,
    pub meta: Vec<crate::controllers::BoundLinear>,
    pub program_mems: Vec<BoundProgramMemory>,
    pub output: crate::controllers::BoundLinear,
}

impl NutmModel {
    pub fn head_sizes(cfg: &NtmConfig) -> Vec<usize> {
        let mut sizes = vec![emission_size(cfg.word, true); cfg.write_heads];
        sizes.extend(vec![emission_size(cfg.word, false); cfg.read_heads]);
        sizes
    }

    pub fn init(
        store: &mut ParamStore,
        cfg: NtmConfig,
        programs: usize,
        key_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let ctrl_in = cfg.input_size + cfg.read_heads * cfg.word;
        let controller = LstmCell::init(store, "nutm.ctrl", ctrl_in, cfg.hidden_size, rng);
        let mut meta = Vec::new();
        let mut program_mems = Vec::new();
        for (n, xi) in Self::head_sizes(&cfg).iter().enumerate() {
            meta.push(Linear::init(
                store,
                &format!("nutm.meta{n}"),
                cfg.hidden_size,
                key_dim + 1,
                rng,
            ));
            program_mems.push(ProgramMemory::init(
                store,
                &format!("nutm.pm{n}"),
                programs,
                key_dim,
                xi * cfg.hidden_size,
                rng,
            ));
        }
        let out_in = cfg.hidden_size + cfg.read_heads * cfg.word;
        let output = Linear::init(store, "nutm.out", out_in, cfg.output_size, rng);
        NutmModel { cfg, programs, key_dim, controller, meta, program_mems, output }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundNutm {
        BoundNutm {
            controller: self.controller.bind(tape, store),
            meta: self.meta.iter().map(|m| m.bind(tape, store)).collect(),
            program_mems: self.program_mems.iter().map(|m| m.bind(tape, store)).collect(),
            output: self.output.bind(tape, store),
        }
    }

    pub fn initial_state(&self, tape: &mut Tape) -> crate::ntm::NtmState {
        // identical rollout state to the plain core
        let cfg = &self.cfg;
        let mem = tape.leaf_mat(cfg.slots, cfg.word, &vec![crate::ntm::MEMORY_INIT; cfg.slots * cfg.word]);
        let uniform = vec![1.0 / cfg.slots as f64; cfg.slots];
        let read_ws = (0..cfg.read_heads).map(|_| tape.leaf_vec(&uniform)).collect();
        let write_ws = (0..cfg.write_heads).map(|_| tape.leaf_vec(&uniform)).collect();
        let reads = (0..cfg.read_heads).map(|_| tape.leaf_vec(&vec![0.0; cfg.word])).collect();
        crate::ntm::NtmState { mem, lstm: self.controller.zero_state(tape), read_ws, write_ws, reads }
    }

    /// One step. For every control head: meta net emits a program query, the
    /// retrieved program (reshaped to a matrix) maps the controller state to
    /// that head's data interface. Returns per-head program attentions too.
    pub fn step(
        &self,
        tape: &mut Tape,
        bound: &BoundNutm,
        state: crate::ntm::NtmState,
        x: TensorId,
        mode: &mut LookupMode,
    ) -> (crate::ntm::NtmState, TensorId, Vec<TensorId>) {
        let cfg = &self.cfg;
        let mut ctrl_in = vec![x];
        ctrl_in.extend(state.reads.iter().copied());
        let ctrl_x = tape.concat(&ctrl_in);
        let lstm = self.controller.step(tape, &bound.controller, ctrl_x, state.lstm);

        let head_sizes = Self::head_sizes(cfg);
        let mut attns = Vec::with_capacity(head_sizes.len());
        let mut head_raw = Vec::with_capacity(head_sizes.len());
        for (n, &xi_size) in head_sizes.iter().enumerate() {
            let q = self.meta[n].apply(tape, &bound.meta[n], lstm.h);
            let key = tape.slice(q, 0, self.key_dim);
            let beta_raw = tape.slice(q, self.key_dim, 1);
            let beta_v = tape.softplus(beta_raw);
            let beta = tape.reshape(beta_v, Shape::Scalar);
            let (p, attn) = program_lookup(tape, &bound.program_mems[n], key, beta, mode);
            let w_c = tape.reshape(p, Shape::Matrix(xi_size, cfg.hidden_size));
            head_raw.push(tape.matvec(w_c, lstm.h));
            attns.push(attn);
        }

        let mut mem = state.mem;
        let mut write_ws = Vec::with_capacity(cfg.write_heads);
        for head in 0..cfg.write_heads {
            let emit = squash_emission(tape, head_raw[head], cfg.word, true);
            let w = address_head(tape, mem, &emit, state.write_ws[head]);
            mem = write_slot(tape, mem, w, emit.erase.unwrap(), emit.add.unwrap());
            write_ws.push(w);
        }
        let mut read_ws = Vec::with_capacity(cfg.read_heads);
        let mut reads = Vec::with_capacity(cfg.read_heads);
        for head in 0..cfg.read_heads {
            let emit = squash_emission(tape, head_raw[cfg.write_heads + head], cfg.word, false);
            let w = address_head(tape, mem, &emit, state.read_ws[head]);
            reads.push(read_slot(tape, mem, w));
            read_ws.push(w);
        }

        let mut out_in = vec![lstm.h];
        out_in.extend(reads.iter().copied());
        let out_x = tape.concat(&out_in);
        let out = self.output.apply(tape, &bound.output, out_x);
        (crate::ntm::NtmState { mem, lstm, read_ws, write_ws, reads }, out, attns)
    }

    /// Rollout returning outputs and the per-step per-head program attentions.
    pub fn forward_seq(
        &self,
        tape: &mut Tape,
        bound: &BoundNutm,
        inputs: &[Vec<f64>],
        mode: &mut LookupMode,
    ) -> (Vec<TensorId>, Vec<Vec<TensorId>>) {
        let mut state = self.initial_state(tape);
        let mut outs = Vec::with_capacity(inputs.len());
        let mut traces = Vec::with_capacity(inputs.len());
        for x in inputs {
            let xt = tape.leaf_vec(x);
            let (next, o, attns) = self.step(tape, bound, state, xt, mode);
            state = next;
            outs.push(o);
            traces.push(attns);
        }
        (outs, traces)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ntm::NtmModel;
    use crate::tape::finite_diff_check;
    use rand::SeedableRng;

    fn leaf_pm(tape: &mut Tape, keys: &[f64], values: &[f64], p: usize, k: usize, s: usize) -> BoundProgramMemory {
        BoundProgramMemory {
            keys: tape.leaf_mat(p, k, keys),
            values: tape.leaf_mat(p, s, values),
        }
    }

    #[test]
    fn single_program_always_retrieved() {
        let mut t = Tape::new();
        let pm = leaf_pm(&mut t, &[0.3, -0.7], &[1.0, 2.0, 3.0], 1, 2, 3);
        let key = t.leaf_vec(&[-5.0, 0.2]);
        let beta = t.leaf_scalar(2.0);
        let (p, attn) = program_lookup(&mut t, &pm, key, beta, &mut LookupMode::Soft);
        assert_eq!(t.value(attn), &[1.0]);
        assert_eq!(t.value(p), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_strength_blends_programs_uniformly() {
        let mut t = Tape::new();
        let pm = leaf_pm(&mut t, &[1.0, 0.0, 0.0, 1.0], &[2.0, 0.0, 0.0, 4.0], 2, 2, 2);
        let key = t.leaf_vec(&[0.6, 0.8]);
        let beta = t.leaf_scalar(0.0);
        let (p, attn) = program_lookup(&mut t, &pm, key, beta, &mut LookupMode::Soft);
        assert_eq!(t.value(attn), &[0.5, 0.5]);
        assert_eq!(t.value(p), &[1.0, 2.0]);
    }

    #[test]
    fn sharp_query_locks_onto_matching_program() {
        let mut t = Tape::new();
        let keys = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let values = [10.0, 0.0, 0.0, 5.0, -5.0, 0.0, 1.0, 1.0, 1.0];
        let pm = leaf_pm(&mut t, &keys, &values, 3, 3, 3);
        let key = t.leaf_vec(&[0.0, 2.5, 0.0]); // key_2 scaled
        let beta = t.leaf_scalar(100.0);
        let (p, attn) = program_lookup(&mut t, &pm, key, beta, &mut LookupMode::Soft);
        assert!(t.value(attn)[1] > 0.999);
        for (got, want) in t.value(p).iter().zip(&values[3..6]) {
            assert!((got - want).abs() < 1e-3);
        }
        let total: f64 = t.value(attn).iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_query_degrades_to_uniform_and_flags() {
        let mut t = Tape::new();
        let pm = leaf_pm(&mut t, &[1.0, 0.0, 0.0, 1.0], &[2.0, 0.0, 0.0, 4.0], 2, 2, 2);
        let key = t.leaf_vec(&[0.0, 0.0]);
        let beta = t.leaf_scalar(50.0);
        let (_, attn) = program_lookup(&mut t, &pm, key, beta, &mut LookupMode::Soft);
        assert_eq!(t.value(attn), &[0.5, 0.5]);
        assert!(!t.degenerate_events().is_empty());
    }

    #[test]
    fn lookup_is_permutation_equivariant() {
        let keys = [0.9, 0.1, -0.3, 0.8, 0.2, -0.5];
        let values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut t = Tape::new();
        let pm = leaf_pm(&mut t, &keys, &values, 3, 2, 2);
        let key = t.leaf_vec(&[0.4, -0.2]);
        let beta = t.leaf_scalar(3.0);
        let (p, attn) = program_lookup(&mut t, &pm, key, beta, &mut LookupMode::Soft);

        // rotate rows by one
        let keys_perm = [-0.3, 0.8, 0.2, -0.5, 0.9, 0.1];
        let values_perm = [3.0, 4.0, 5.0, 6.0, 1.0, 2.0];
        let mut t2 = Tape::new();
        let pm2 = leaf_pm(&mut t2, &keys_perm, &values_perm, 3, 2, 2);
        let key2 = t2.leaf_vec(&[0.4, -0.2]);
        let beta2 = t2.leaf_scalar(3.0);
        let (p2, attn2) = program_lookup(&mut t2, &pm2, key2, beta2, &mut LookupMode::Soft);

        let a = t.value(attn).to_vec();
        let a2 = t2.value(attn2).to_vec();
        for i in 0..3 {
            assert!((a[(i + 1) % 3] - a2[i]).abs() < 1e-14);
        }
        for (x, y) in t.value(p).iter().zip(t2.value(p2)) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn hard_lookup_is_one_hot_reproducible_and_differentiable() {
        let run = |seed: u64| {
            let mut t = Tape::new();
            let pm = leaf_pm(&mut t, &[1.0, 0.0, 0.0, 1.0], &[2.0, 0.0, 0.0, 4.0], 2, 2, 2);
            let key = t.leaf_vec(&[0.6, 0.8]);
            let beta = t.leaf_scalar(1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mode = LookupMode::Hard { temperature: 0.5, rng: &mut rng };
            let (p, attn) = program_lookup(&mut t, &pm, key, beta, &mut mode);
            let loss = t.sum(p);
            t.backward(loss);
            let key_grad = t.grad(key).unwrap().to_vec();
            (t.value(attn).to_vec(), t.value(p).to_vec(), key_grad)
        };
        let (attn, _, key_grad) = run(9);
        assert!(attn.iter().all(|&a| a == 0.0 || a == 1.0));
        assert!((attn.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(key_grad.iter().any(|&g| g != 0.0), "straight-through gradient must flow");
        let again = run(9);
        assert_eq!(attn, again.0);
        let different = run(10);
        let _ = different;
    }

    #[test]
    fn lookup_gradients_match_finite_differences() {
        let keys = [0.9, 0.1, -0.3, 0.8, 0.2, -0.5];
        let values = [1.0, -2.0, 3.0, 0.4, -0.5, 0.6];
        let probe_keys = finite_diff_check(
            |t, k| {
                let v = t.leaf_mat(3, 2, &values);
                let q = t.leaf_vec(&[0.4, -0.2]);
                let beta = t.leaf_scalar(2.0);
                let (p, _) = program_lookup(&mut *t, &BoundProgramMemory { keys: k, values: v }, q, beta, &mut LookupMode::Soft);
                let w = t.leaf_vec(&[0.3, 1.7]);
                t.dot(p, w)
            },
            Shape::Matrix(3, 2),
            &keys,
            1e-5,
        );
        assert!(probe_keys.passes(1e-4), "{probe_keys:?}");

        let probe_values = finite_diff_check(
            |t, v| {
                let k = t.leaf_mat(3, 2, &keys);
                let q = t.leaf_vec(&[0.4, -0.2]);
                let beta = t.leaf_scalar(2.0);
                let (p, _) = program_lookup(&mut *t, &BoundProgramMemory { keys: k, values: v }, q, beta, &mut LookupMode::Soft);
                let w = t.leaf_vec(&[0.3, 1.7]);
                t.dot(p, w)
            },
            Shape::Matrix(3, 2),
            &values,
            1e-5,
        );
        assert!(probe_values.passes(1e-4), "{probe_values:?}");
    }

    #[test]
    fn key_alignment_loss_hand_cases() {
        let mut t = Tape::new();
        let same = t.leaf_mat(3, 2, &[0.5, 0.5, 0.5, 0.5, 0.5, 0.5]);
        let l_p = program_key_cosine_loss(&mut t, same);
        assert!((t.scalar_value(l_p) - 3.0).abs() < 1e-12, "P(P-1)/2 pairs at cos=1");

        let ortho = t.leaf_mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let (l_p, l_p2) = program_key_regularizers(&mut t, ortho);
        assert_eq!(t.scalar_value(l_p), 0.0);
        assert_eq!(t.scalar_value(l_p2), 0.0);

        let half = std::f64::consts::FRAC_1_SQRT_2;
        let tilted = t.leaf_mat(2, 2, &[1.0, 0.0, half, half]);
        let l_p = program_key_cosine_loss(&mut t, tilted);
        assert!((t.scalar_value(l_p) - half).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "key dim = program count")]
    fn orthogonality_loss_rejects_rectangular_keys() {
        let mut t = Tape::new();
        let rect = t.leaf_mat(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        program_key_orthogonality_loss(&mut t, rect);
    }

    #[test]
    fn annealed_loss_schedule() {
        let mut t = Tape::new();
        let pred = t.leaf_scalar(2.0);
        let l_p = t.leaf_scalar(3.0);
        let l0 = annealed_total_loss(&mut t, pred, l_p, 0);
        assert!((t.scalar_value(l0) - 2.3).abs() < 1e-12);
        let l1 = annealed_total_loss(&mut t, pred, l_p, ETA_DECAY_EVERY);
        assert!((t.scalar_value(l1) - (2.0 + 0.09 * 3.0)).abs() < 1e-12);
        let zero = t.leaf_scalar(0.0);
        for step in [0, 500, 5000] {
            let l = annealed_total_loss(&mut t, pred, zero, step);
            assert_eq!(t.scalar_value(l), 2.0);
        }
        assert!((eta(2500) - 0.1 * 0.81).abs() < 1e-15);
    }

    fn tiny_cfg() -> NtmConfig {
        NtmConfig {
            input_size: 3,
            output_size: 3,
            hidden_size: 6,
            slots: 4,
            word: 3,
            read_heads: 1,
            write_heads: 1,
        }
    }

    #[test]
    fn single_program_nutm_equals_static_interface_core() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut nutm_store = ParamStore::new();
        let nutm = NutmModel::init(&mut nutm_store, cfg.clone(), 1, 2, &mut rng);

        let mut ntm_store = ParamStore::new();
        let mut rng2 = ChaCha8Rng::seed_from_u64(99);
        let ntm = NtmModel::init(&mut ntm_store, cfg.clone(), &mut rng2);

        // mirror controller/output weights, then freeze the two programs into
        // the static interface (stacked write block over read block, no bias)
        let names: Vec<String> = ntm_store.ids().map(|id| ntm_store.get(id).name.clone()).collect();
        for name in names {
            let suffix = name.strip_prefix("ntm.").unwrap().to_string();
            if suffix.starts_with("iface") {
                continue;
            }
            let src = nutm_store
                .ids()
                .find(|&id| nutm_store.get(id).name == format!("nutm.{suffix}"))
                .expect("matching core parameter");
            let data = nutm_store.get(src).data.clone();
            let dst = ntm_store.ids().find(|&id| ntm_store.get(id).name == name).unwrap();
            ntm_store.get_mut(dst).data.copy_from_slice(&data);
        }
        let mut iface_w = Vec::new();
        // head 0 = write, head 1 = read
        for n in 0..2 {
            let id = nutm_store
                .ids()
                .find(|&id| nutm_store.get(id).name == format!("nutm.pm{n}.values"))
                .unwrap();
            iface_w.extend_from_slice(&nutm_store.get(id).data);
        }
        let iface_w_id = ntm_store.ids().find(|&id| ntm_store.get(id).name == "ntm.iface.w").unwrap();
        ntm_store.get_mut(iface_w_id).data.copy_from_slice(&iface_w);
        let iface_b_id = ntm_store.ids().find(|&id| ntm_store.get(id).name == "ntm.iface.b").unwrap();
        ntm_store.get_mut(iface_b_id).data.fill(0.0);

        let inputs: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..3).map(|j| 0.1 * (i * 3 + j) as f64 - 0.4).collect())
            .collect();

        let mut t1 = Tape::new();
        let b1 = nutm.bind(&mut t1, &nutm_store);
        let (outs1, traces) = nutm.forward_seq(&mut t1, &b1, &inputs, &mut LookupMode::Soft);
        for step in &traces {
            for attn in step {
                assert_eq!(t1.value(*attn), &[1.0]);
            }
        }

        let mut t2 = Tape::new();
        let b2 = ntm.bind(&mut t2, &ntm_store);
        let outs2 = ntm.forward_seq(&mut t2, &b2, &inputs);

        for (a, b) in outs1.iter().zip(&outs2) {
            for (x, y) in t1.value(*a).iter().zip(t2.value(*b)) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn identical_values_make_attention_irrelevant() {
        let mut t = Tape::new();
        let keys = [1.0, 0.0, -0.2, 0.9];
        let values = [7.0, -1.0, 7.0, -1.0];
        let pm = leaf_pm(&mut t, &keys, &values, 2, 2, 2);
        for q in [[0.3, 0.1], [-0.8, 0.5], [0.0, 1.0]] {
            let key = t.leaf_vec(&q);
            let beta = t.leaf_scalar(4.0);
            let (p, _) = program_lookup(&mut t, &pm, key, beta, &mut LookupMode::Soft);
            for (got, want) in t.value(p).iter().zip(&[7.0, -1.0]) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nutm_rollout_gradients_match_finite_differences() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let model = NutmModel::init(&mut store, cfg, 2, 3, &mut rng);
        let inputs: Vec<Vec<f64>> = vec![vec![0.2, -0.1, 0.4], vec![-0.3, 0.5, 0.0]];

        let loss_of = |store: &ParamStore| {
            let mut t = Tape::new();
            let b = model.bind(&mut t, store);
            let (outs, _) = model.forward_seq(&mut t, &b, &inputs, &mut LookupMode::Soft);
            let cat = t.concat(&outs);
            let sq = t.mul(cat, cat);
            let loss = t.sum(sq);
            (t, loss)
        };

        let (mut t, loss) = loss_of(&store);
        t.backward(loss);
        store.zero_grads();
        store.absorb_grads(&t);

        let mut worst: f64 = 0.0;
        let mut rng2 = ChaCha8Rng::seed_from_u64(17);
        let ids: Vec<ParamId> = store.ids().collect();
        for _ in 0..25 {
            let pid = ids[rng2.gen_range(0..ids.len())];
            let len = store.get(pid).data.len();
            let coord = rng2.gen_range(0..len);
            let analytic = store.get(pid).grad[coord];
            let eps = 1e-5;
            let mut plus = store.clone();
            plus.get_mut(pid).data[coord] += eps;
            let (tp, lp) = loss_of(&plus);
            let mut minus = store.clone();
            minus.get_mut(pid).data[coord] -= eps;
            let (tm, lm) = loss_of(&minus);
            let numeric = (tp.scalar_value(lp) - tm.scalar_value(lm)) / (2.0 * eps);
            let denom = analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
        assert!(worst < 1e-4, "worst rel err {worst}");
    }
}
