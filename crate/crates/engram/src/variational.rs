//! Mixture-of-Gaussians latent machinery for memory-conditioned decoding.
//!
//! Memory reads become the prior: each read vector splits into a mode's mean
//! and (softplus) spread, and the per-head max attention weights normalize
//! into mode weights. A diagonal-Gaussian posterior is matched against that
//! mixture with the variational bound `D_var = −log Σ_i π_i e^{−KL(f‖g_i)}`,
//! which upper-bounds the intractable Gaussian-vs-mixture KL. Plain-`f64`
//! counterparts (Monte-Carlo KL, the product-of-Gaussians lemma, grid checks)
//! act as oracles for the differentiable path.

use crate::controllers::{Linear, LstmCell, LstmState};
use crate::dnc::{parse_interface, read_step, write_step, DncModel, DncState};
use crate::params::ParamStore;
use crate::tape::{Tape, TensorId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Diagonal Gaussian on the tape.
#[derive(Clone, Copy, Debug)]
pub struct GaussianDiag {
    pub mu: TensorId,
    pub sigma: TensorId,
}

/// Mixture of diagonal Gaussians on the tape; `pi` is a K-vector.
#[derive(Clone, Debug)]
pub struct MixtureLatent {
    pub pi: TensorId,
    pub comps: Vec<GaussianDiag>,
}

/// Builds the mixture prior from memory reads: mode i has mean = first half
/// of read i, spread = softplus(second half), and weight proportional to the
/// head's max attention. All-zero attention degrades to uniform weights and
/// is flagged on the tape.
pub fn build_mog_prior(tape: &mut Tape, reads: &[TensorId], read_ws: &[TensorId]) -> MixtureLatent {
    assert!(!reads.is_empty());
    assert_eq!(reads.len(), read_ws.len());
    let mut comps = Vec::with_capacity(reads.len());
    for &r in reads {
        let len = tape.shape(r).len();
        assert!(len % 2 == 0, "read vectors must split into mean/spread halves");
        let d = len / 2;
        let mu = tape.slice(r, 0, d);
        let raw = tape.slice(r, d, d);
        let sigma = tape.softplus(raw);
        comps.push(GaussianDiag { mu, sigma });
    }
    let maxes: Vec<TensorId> = read_ws.iter().map(|&w| tape.max_vec(w)).collect();
    let m = tape.concat(&maxes);
    let total: f64 = tape.value(m).iter().sum();
    let pi = if total == 0.0 {
        tape.note_degenerate("all read weights zero; uniform mode weights");
        tape.leaf_vec(&vec![1.0 / reads.len() as f64; reads.len()])
    } else {
        let s = tape.sum(m);
        let inv = tape.recip(s);
        tape.mul_scalar(m, inv)
    };
    MixtureLatent { pi, comps }
}

/// Closed-form KL between diagonal Gaussians:
/// `Σ_d [ln(σ_g/σ_f) + (σ_f² + (μ_f−μ_g)²)/(2σ_g²) − ½]`.
pub fn gaussian_kl(tape: &mut Tape, f: &GaussianDiag, g: &GaussianDiag) -> TensorId {
    let d = tape.shape(f.mu).len();
    assert_eq!(d, tape.shape(g.mu).len(), "dimension mismatch");
    let ln_g = tape.ln(g.sigma);
    let ln_f = tape.ln(f.sigma);
    let log_ratio = tape.sub(ln_g, ln_f);
    let var_f = tape.mul(f.sigma, f.sigma);
    let diff = tape.sub(f.mu, g.mu);
    let diff2 = tape.mul(diff, diff);
    let num = tape.add(var_f, diff2);
    let var_g = tape.mul(g.sigma, g.sigma);
    let den = tape.scale(var_g, 2.0);
    let quad = tape.div(num, den);
    let terms = tape.add(log_ratio, quad);
    let s = tape.sum(terms);
    tape.affine(s, 1.0, -(d as f64) / 2.0)
}

/// Variational bound on KL(f ‖ mixture): `−log Σ_i π_i e^{−KL(f‖g_i)}`,
/// evaluated through log-sum-exp. Equals the plain Gaussian KL when K = 1.
pub fn d_var(tape: &mut Tape, f: &GaussianDiag, g: &MixtureLatent) -> TensorId {
    let ln_pi = tape.ln(g.pi);
    let mut terms = Vec::with_capacity(g.comps.len());
    for (i, comp) in g.comps.iter().enumerate() {
        let kl = gaussian_kl(tape, f, comp);
        let lp = tape.pick(ln_pi, i);
        terms.push(tape.sub(lp, kl));
    }
    let stacked = tape.concat(&terms);
    let lse = tape.logsumexp(stacked);
    tape.neg(lse)
}

/// `z = μ + σ∘ε` with externally drawn ε; gradients flow into μ and σ.
pub fn sample_reparameterized(tape: &mut Tape, f: &GaussianDiag, eps: &[f64]) -> TensorId {
    assert_eq!(eps.len(), tape.shape(f.mu).len());
    let e = tape.leaf_vec(eps);
    let scaled = tape.mul(f.sigma, e);
    tape.add(f.mu, scaled)
}

/// Timestep-wise bound, minimized: `Σ_t D_var(f_t‖g_t) − Σ_t log_lik_t`.
pub fn timestep_elbo_loss(
    tape: &mut Tape,
    posteriors: &[GaussianDiag],
    priors: &[MixtureLatent],
    log_liks: &[TensorId],
) -> TensorId {
    assert_eq!(posteriors.len(), priors.len(), "length mismatch");
    assert_eq!(posteriors.len(), log_liks.len(), "length mismatch");
    let mut terms = Vec::with_capacity(2 * posteriors.len());
    for ((f, g), &ll) in posteriors.iter().zip(priors).zip(log_liks) {
        let dv = d_var(tape, f, g);
        terms.push(dv);
        terms.push(tape.neg(ll));
    }
    let all = tape.concat(&terms);
    tape.sum(all)
}

// ---------------------------------------------------------------------------
// plain-value mirror used by the oracles

#[derive(Clone, Debug)]
pub struct GaussianVal {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GaussianVal {
    pub fn log_pdf(&self, z: &[f64]) -> f64 {
        let mut out = 0.0;
        for i in 0..self.mu.len() {
            let s = self.sigma[i];
            let d = z[i] - self.mu[i];
            out += -0.5 * (d / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        }
        out
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.sigma)
            .map(|(m, s)| m + s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct MixtureVal {
    pub pi: Vec<f64>,
    pub comps: Vec<GaussianVal>,
}

impl MixtureVal {
    pub fn log_pdf(&self, z: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .pi
            .iter()
            .zip(&self.comps)
            .map(|(p, c)| p.ln() + c.log_pdf(z))
            .collect();
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
    }

    pub fn pdf(&self, z: &[f64]) -> f64 {
        self.log_pdf(z).exp()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let u: f64 = rng.gen_range(0.0..1.0);
        let mut acc = 0.0;
        for (p, c) in self.pi.iter().zip(&self.comps) {
            acc += p;
            if u < acc {
                return c.sample(rng);
            }
        }
        self.comps.last().unwrap().sample(rng)
    }
}

/// Closed-form diagonal-Gaussian KL on plain values.
pub fn gaussian_kl_val(f: &GaussianVal, g: &GaussianVal) -> f64 {
    let mut out = 0.0;
    for i in 0..f.mu.len() {
        let (sf, sg) = (f.sigma[i], g.sigma[i]);
        let d = f.mu[i] - g.mu[i];
        out += (sg / sf).ln() + (sf * sf + d * d) / (2.0 * sg * sg) - 0.5;
    }
    out
}

/// Monte-Carlo estimate of KL(f‖g) with its standard error.
pub fn mc_kl(f: &GaussianVal, g: &MixtureVal, samples: usize, rng: &mut impl Rng) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let z = f.sample(rng);
        let v = f.log_pdf(&z) - g.log_pdf(&z);
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / samples as f64;
    let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
    (mean, (var / samples as f64).sqrt())
}

/// `D_var` on plain values, mirroring the tape op.
pub fn d_var_val(f: &GaussianVal, g: &MixtureVal) -> f64 {
    let terms: Vec<f64> = g
        .pi
        .iter()
        .zip(&g.comps)
        .map(|(p, c)| p.ln() - gaussian_kl_val(f, c))
        .collect();
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    -(m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln())
}

/// One pairwise term of the product lemma: the product of two diagonal
/// Gaussians is `c_c · N(m_c, Σ_c)` with `Σ_c = (Σ₁⁻¹+Σ₂⁻¹)⁻¹`,
/// `m_c = Σ_c(Σ₁⁻¹m₁+Σ₂⁻¹m₂)` and `c_c = N(m₁; m₂, Σ₁+Σ₂)`.
pub fn gaussian_product(a: &GaussianVal, b: &GaussianVal) -> (f64, GaussianVal) {
    let d = a.mu.len();
    let mut mu = vec![0.0; d];
    let mut sigma = vec![0.0; d];
    let mut log_c = 0.0;
    for i in 0..d {
        let va = a.sigma[i] * a.sigma[i];
        let vb = b.sigma[i] * b.sigma[i];
        let vc = 1.0 / (1.0 / va + 1.0 / vb);
        sigma[i] = vc.sqrt();
        mu[i] = vc * (a.mu[i] / va + b.mu[i] / vb);
        let vs = va + vb;
        let diff = a.mu[i] - b.mu[i];
        log_c += -0.5 * diff * diff / vs - 0.5 * (2.0 * std::f64::consts::PI * vs).ln();
    }
    (log_c.exp(), GaussianVal { mu, sigma })
}

/// The product of two mixtures as a scaled mixture: coefficients
/// `π_i ρ_j c_ij` (not normalized) over the pairwise product Gaussians.
pub fn mixture_product(g1: &MixtureVal, g2: &MixtureVal) -> (Vec<f64>, Vec<GaussianVal>) {
    let mut coeffs = Vec::new();
    let mut comps = Vec::new();
    for (p1, c1) in g1.pi.iter().zip(&g1.comps) {
        for (p2, c2) in g2.pi.iter().zip(&g2.comps) {
            let (c, g) = gaussian_product(c1, c2);
            coeffs.push(p1 * p2 * c);
            comps.push(g);
        }
    }
    (coeffs, comps)
}

/// Grid report for the product lemma: max pointwise |g1·g2 − scaled MoG|.
pub struct ProductReport {
    pub max_abs_err: f64,
    pub points: usize,
}

/// Verifies the product lemma on a uniform grid over `[lo, hi]^dim` (dim ≤ 2).
pub fn mog_product_oracle(
    g1: &MixtureVal,
    g2: &MixtureVal,
    lo: f64,
    hi: f64,
    points_per_dim: usize,
) -> ProductReport {
    let dim = g1.comps[0].mu.len();
    assert!(dim <= 2, "grid oracle supports dim 1 and 2");
    let (coeffs, comps) = mixture_product(g1, g2);
    let axis: Vec<f64> = (0..points_per_dim)
        .map(|i| lo + (hi - lo) * i as f64 / (points_per_dim - 1) as f64)
        .collect();
    let mut max_abs_err = 0.0f64;
    let mut points = 0;
    let mut eval = |z: &[f64]| {
        let direct = g1.pdf(z) * g2.pdf(z);
        let combined: f64 = coeffs
            .iter()
            .zip(&comps)
            .map(|(c, g)| c * g.log_pdf(z).exp())
            .sum();
        max_abs_err = max_abs_err.max((direct - combined).abs());
        points += 1;
    };
    if dim == 1 {
        for &x in &axis {
            eval(&[x]);
        }
    } else {
        for &x in &axis {
            for &y in &axis {
                eval(&[x, y]);
            }
        }
    }
    ProductReport { max_abs_err, points }
}

// ---------------------------------------------------------------------------
// the encoder-decoder model

#[derive(Clone, Debug)]
pub struct VmedConfig {
    pub vocab: usize,
    pub latent: usize,
    pub hidden_size: usize,
    pub slots: usize,
    pub read_heads: usize,
}

impl VmedConfig {
    pub fn word(&self) -> usize {
        2 * self.latent
    }
}

/// Memory-conditioned variational encoder-decoder. The encoder writes the
/// context into a content-addressed slot memory; at every decode step the
/// reads form the mixture prior, a posterior network sees the ground truth,
/// and the decoder consumes the latent sample.
#[derive(Clone, Debug)]
pub struct VmedModel {
    pub cfg: VmedConfig,
    pub encoder: LstmCell,
    pub utter: LstmCell,
    pub decoder: LstmCell,
    pub iface: Linear,
    pub w_mu: Linear,
    pub w_sigma: Linear,
    pub out: Linear,
}

pub struct BoundVmed {
    pub encoder: crate::controllers::BoundLstm,
    pub utter: crate::controllers::BoundLstm,
    pub decoder: crate::controllers::BoundLstm,
    pub iface: crate::controllers::BoundLinear,
    pub w_mu: crate::controllers::BoundLinear,
    pub w_sigma: crate::controllers::BoundLinear,
    pub out: crate::controllers::BoundLinear,
}

pub struct VmedLoss {
    pub total: TensorId,
    pub d_vars: Vec<TensorId>,
    pub log_liks: Vec<TensorId>,
}

fn one_hot(vocab: usize, idx: usize) -> Vec<f64> {
    let mut v = vec![0.0; vocab];
    v[idx] = 1.0;
    v
}

impl VmedModel {
    pub fn init(store: &mut ParamStore, cfg: VmedConfig, rng: &mut impl Rng) -> Self {
        let word = cfg.word();
        let iface_size = crate::dnc::interface_size(word, cfg.read_heads);
        let encoder = LstmCell::init(store, "vmed.enc", cfg.vocab, cfg.hidden_size, rng);
        let utter = LstmCell::init(store, "vmed.utter", cfg.vocab, cfg.hidden_size, rng);
        let decoder = LstmCell::init(store, "vmed.dec", cfg.vocab + cfg.latent, cfg.hidden_size, rng);
        let iface = Linear::init(store, "vmed.iface", cfg.hidden_size, iface_size, rng);
        let rec_in = word + cfg.hidden_size;
        let w_mu = Linear::init(store, "vmed.w_mu", rec_in, cfg.latent, rng);
        let w_sigma = Linear::init(store, "vmed.w_sigma", rec_in, cfg.latent, rng);
        let out = Linear::init(store, "vmed.out", cfg.hidden_size, cfg.vocab, rng);
        VmedModel { cfg, encoder, utter, decoder, iface, w_mu, w_sigma, out }
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> BoundVmed {
        BoundVmed {
            encoder: self.encoder.bind(tape, store),
            utter: self.utter.bind(tape, store),
            decoder: self.decoder.bind(tape, store),
            iface: self.iface.bind(tape, store),
            w_mu: self.w_mu.bind(tape, store),
            w_sigma: self.w_sigma.bind(tape, store),
            out: self.out.bind(tape, store),
        }
    }

    /// Content-addressed write + read driven by a controller state.
    fn access(&self, tape: &mut Tape, bound: &BoundVmed, state: &DncState, h: TensorId) -> DncState {
        let xi = self.iface.apply(tape, &bound.iface, h);
        let emit = parse_interface(tape, xi, self.cfg.word(), self.cfg.read_heads);
        let written = write_step(tape, state, &emit, false);
        read_step(tape, &written, &emit, false)
    }

    fn initial_memory(&self, tape: &mut Tape) -> DncState {
        DncModel::initial_memory(tape, self.cfg.slots, self.cfg.word(), self.cfg.read_heads)
    }

    /// Encodes the context tokens into memory, returning the final state.
    fn encode(&self, tape: &mut Tape, bound: &BoundVmed, context: &[usize]) -> DncState {
        let mut mem = self.initial_memory(tape);
        let mut lstm = self.encoder.zero_state(tape);
        for &tok in context {
            let x = tape.leaf_vec(&one_hot(self.cfg.vocab, tok));
            lstm = self.encoder.step(tape, &bound.encoder, x, lstm);
            mem = self.access(tape, bound, &mem, lstm.h);
        }
        mem
    }

    /// Weighted read summary `r̄ = Σ_i π_i r_i`.
    fn read_summary(&self, tape: &mut Tape, mem: &DncState, pi: TensorId) -> TensorId {
        let mut acc: Option<TensorId> = None;
        for (i, &r) in mem.reads.iter().enumerate() {
            let p = tape.pick(pi, i);
            let scaled = tape.mul_scalar(r, p);
            acc = Some(match acc {
                None => scaled,
                Some(a) => tape.add(a, scaled),
            });
        }
        acc.unwrap()
    }

    /// Teacher-forced training objective over one (context, target) pair.
    /// `noise[t]` supplies the reparameterization draw for step t, so common
    /// random numbers are possible for gradient checking.
    pub fn elbo_loss(
        &self,
        tape: &mut Tape,
        bound: &BoundVmed,
        context: &[usize],
        target: &[usize],
        noise: &[Vec<f64>],
    ) -> VmedLoss {
        assert_eq!(noise.len(), target.len(), "one noise vector per target step");
        let mut mem = self.encode(tape, bound, context);
        let mut utter = self.utter.zero_state(tape);
        let mut dec = self.decoder.zero_state(tape);
        let mut prev_tok = 0usize;
        let mut d_vars = Vec::with_capacity(target.len());
        let mut log_liks = Vec::with_capacity(target.len());
        let mut terms = Vec::new();
        for (t, &tok) in target.iter().enumerate() {
            let prior = build_mog_prior(tape, &mem.reads, &mem.w_reads);

            let y = tape.leaf_vec(&one_hot(self.cfg.vocab, tok));
            utter = self.utter.step(tape, &bound.utter, y, utter);
            let summary = self.read_summary(tape, &mem, prior.pi);
            let rec_in = tape.concat(&[summary, utter.h]);
            let mu = self.w_mu.apply(tape, &bound.w_mu, rec_in);
            let sigma_raw = self.w_sigma.apply(tape, &bound.w_sigma, rec_in);
            let sigma = tape.softplus(sigma_raw);
            let posterior = GaussianDiag { mu, sigma };

            let z = sample_reparameterized(tape, &posterior, &noise[t]);
            let prev = tape.leaf_vec(&one_hot(self.cfg.vocab, prev_tok));
            let dec_in = tape.concat(&[prev, z]);
            dec = self.decoder.step(tape, &bound.decoder, dec_in, dec);
            let logits = self.out.apply(tape, &bound.out, dec.h);
            let log_probs = tape.log_softmax(logits);
            let ll = tape.pick(log_probs, tok);

            let dv = d_var(tape, &posterior, &prior);
            terms.push(dv);
            let nll = tape.neg(ll);
            terms.push(nll);
            d_vars.push(dv);
            log_liks.push(ll);

            mem = self.access(tape, bound, &mem, dec.h);
            prev_tok = tok;
        }
        let all = tape.concat(&terms);
        let total = tape.sum(all);
        VmedLoss { total, d_vars, log_liks }
    }

    /// Free-running generation: sample the prior mixture, decode, emit the
    /// argmax token, write back with the decoder state. Deterministic per seed.
    pub fn generate(&self, store: &ParamStore, context: &[usize], t_len: usize, seed: u64) -> Vec<usize> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, store);
        let mut mem = self.encode(&mut tape, &bound, context);
        let mut dec: LstmState = self.decoder.zero_state(&mut tape);
        let mut prev_tok = 0usize;
        let mut out_toks = Vec::with_capacity(t_len);
        for _ in 0..t_len {
            let prior = build_mog_prior(&mut tape, &mem.reads, &mem.w_reads);
            let mix = MixtureVal {
                pi: tape.value(prior.pi).to_vec(),
                comps: prior
                    .comps
                    .iter()
                    .map(|c| GaussianVal {
                        mu: tape.value(c.mu).to_vec(),
                        sigma: tape.value(c.sigma).to_vec(),
                    })
                    .collect(),
            };
            let z_val = mix.sample(&mut rng);
            let z = tape.leaf_vec(&z_val);
            let prev = tape.leaf_vec(&one_hot(self.cfg.vocab, prev_tok));
            let dec_in = tape.concat(&[prev, z]);
            dec = self.decoder.step(&mut tape, &bound.decoder, dec_in, dec);
            let logits = self.out.apply(&mut tape, &bound.out, dec.h);
            let vals = tape.value(logits);
            let mut best = 0;
            for (i, &v) in vals.iter().enumerate() {
                if v > vals[best] {
                    best = i;
                }
            }
            out_toks.push(best);
            mem = self.access(&mut tape, &bound, &mem, dec.h);
            prev_tok = best;
        }
        out_toks
    }
}
