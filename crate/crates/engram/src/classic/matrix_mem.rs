//! Outer-product matrix memories: correlation matrix memory, fast weights
//! with iterative refinement, and tensor-product filler/role bindings.
//! All three store by accumulating rank-1 outer products and retrieve by a
//! single matrix-vector product, so retrieval is exact precisely when the
//! keys (or roles) are orthonormal.

/// Correlation matrix memory: M accumulates value·keyᵀ.
pub struct CmmMatrix {
    pub rows: usize,
    pub cols: usize,
    m: Vec<f64>,
}

impl CmmMatrix {
    pub fn new(value_dim: usize, key_dim: usize) -> Self {
        CmmMatrix {
            rows: value_dim,
            cols: key_dim,
            m: vec![0.0; value_dim * key_dim],
        }
    }

    pub fn store(&mut self, key: &[f64], value: &[f64]) {
        assert_eq!(key.len(), self.cols);
        assert_eq!(value.len(), self.rows);
        for (i, v) in value.iter().enumerate() {
            for (j, k) in key.iter().enumerate() {
                self.m[i * self.cols + j] += v * k;
            }
        }
    }

    pub fn retrieve(&self, key: &[f64]) -> Vec<f64> {
        assert_eq!(key.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.m[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(key)
                    .map(|(m, k)| m * k)
                    .sum()
            })
            .collect()
    }
}

/// Rapidly-decaying associative weights A ← λA + η h hᵀ.
pub struct FastWeights {
    pub n: usize,
    pub lambda: f64,
    pub eta: f64,
    a: Vec<f64>,
}

impl FastWeights {
    pub fn new(n: usize, lambda: f64, eta: f64) -> Self {
        FastWeights {
            n,
            lambda,
            eta,
            a: vec![0.0; n * n],
        }
    }

    pub fn update(&mut self, h: &[f64]) {
        assert_eq!(h.len(), self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                self.a[i * self.n + j] =
                    self.lambda * self.a[i * self.n + j] + self.eta * h[i] * h[j];
            }
        }
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        assert_eq!(h.len(), self.n);
        (0..self.n)
            .map(|i| {
                self.a[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(h)
                    .map(|(a, x)| a * x)
                    .sum()
            })
            .collect()
    }
}

/// Inner refinement loop for a fast-weight step: the slow-weight drive
/// `boundary` = W·h(t) + C·x(t) is held fixed while the candidate hidden
/// state settles through h_{s+1} = tanh(boundary + A·h_s), starting from
/// h_0 = tanh(boundary).
pub fn refine_hidden(boundary: &[f64], fast: &FastWeights, steps: usize) -> Vec<f64> {
    let mut h: Vec<f64> = boundary.iter().map(|b| b.tanh()).collect();
    for _ in 0..steps {
        let drive = fast.apply(&h);
        h = boundary
            .iter()
            .zip(&drive)
            .map(|(b, d)| (b + d).tanh())
            .collect();
    }
    h
}

/// Order-2 tensor-product representation: T accumulates filler·roleᵀ.
pub struct TprTensor {
    pub filler_dim: usize,
    pub role_dim: usize,
    t: Vec<f64>,
}

impl TprTensor {
    pub fn new(filler_dim: usize, role_dim: usize) -> Self {
        TprTensor {
            filler_dim,
            role_dim,
            t: vec![0.0; filler_dim * role_dim],
        }
    }

    pub fn bind(&mut self, filler: &[f64], role: &[f64]) {
        assert_eq!(filler.len(), self.filler_dim);
        assert_eq!(role.len(), self.role_dim);
        for (i, f) in filler.iter().enumerate() {
            for (j, r) in role.iter().enumerate() {
                self.t[i * self.role_dim + j] += f * r;
            }
        }
    }

    pub fn unbind(&self, role: &[f64]) -> Vec<f64> {
        assert_eq!(role.len(), self.role_dim);
        (0..self.filler_dim)
            .map(|i| {
                self.t[i * self.role_dim..(i + 1) * self.role_dim]
                    .iter()
                    .zip(role)
                    .map(|(t, r)| t * r)
                    .sum()
            })
            .collect()
    }
}

/// Kronecker product, used to compose positional roles for tree slots:
/// the role for "left child of right child" is kron of the two step roles.
pub fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x * y);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn cmm_with_orthonormal_keys_retrieves_exactly() {
        // Rotated orthonormal basis in R^3.
        let c = 0.6f64;
        let s = 0.8f64;
        let keys = [vec![c, s, 0.0], vec![-s, c, 0.0], vec![0.0, 0.0, 1.0]];
        let values = [vec![1.0, -2.0], vec![0.5, 0.25], vec![-3.0, 7.0]];
        let mut mem = CmmMatrix::new(2, 3);
        for (k, v) in keys.iter().zip(&values) {
            mem.store(k, v);
        }
        for (k, v) in keys.iter().zip(&values) {
            assert!(max_abs_diff(&mem.retrieve(k), v) <= 1e-10);
        }
    }

    #[test]
    fn cmm_error_grows_monotonically_with_key_correlation() {
        // Two unit keys at correlation rho: retrieving the first picks up
        // rho times the second value, so the error is rho·|y2| exactly.
        let y1 = vec![1.0, 0.0, 2.0];
        let y2 = vec![0.0, 3.0, -1.0];
        let mut prev = -1.0;
        for step in 0..10 {
            let rho = step as f64 / 10.0;
            let k1 = vec![1.0, 0.0];
            let k2 = vec![rho, (1.0 - rho * rho).sqrt()];
            let mut mem = CmmMatrix::new(3, 2);
            mem.store(&k1, &y1);
            mem.store(&k2, &y2);
            let got = mem.retrieve(&k1);
            let err: f64 = got
                .iter()
                .zip(&y1)
                .map(|(g, w)| (g - w).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err > prev, "error {err} did not grow at rho={rho}");
            prev = err;
        }
    }

    #[test]
    fn fast_weights_act_as_norm_squared_projection_after_one_store() {
        let h = vec![0.5, -1.5, 2.0];
        let norm2: f64 = h.iter().map(|x| x * x).sum();
        let mut fw = FastWeights::new(3, 0.0, 1.0);
        fw.update(&h);
        let out = fw.apply(&h);
        let want: Vec<f64> = h.iter().map(|x| norm2 * x).collect();
        assert!(max_abs_diff(&out, &want) < 1e-12);
    }

    #[test]
    fn fast_weight_decay_discounts_older_hiddens() {
        let h1 = vec![1.0, 0.0];
        let h2 = vec![0.0, 1.0];
        let mut fw = FastWeights::new(2, 0.5, 1.0);
        fw.update(&h1);
        fw.update(&h2);
        // A = 0.5·h1 h1ᵀ + h2 h2ᵀ on orthogonal inputs.
        assert!(max_abs_diff(&fw.apply(&h1), &[0.5, 0.0]) < 1e-12);
        assert!(max_abs_diff(&fw.apply(&h2), &[0.0, 1.0]) < 1e-12);
    }

    #[test]
    fn refinement_matches_a_hand_unrolled_step() {
        let boundary = vec![0.3, -0.2];
        let h_star = vec![1.0, 2.0];
        let mut fw = FastWeights::new(2, 0.0, 1.0);
        fw.update(&h_star);

        assert!(max_abs_diff(
            &refine_hidden(&boundary, &fw, 0),
            &[0.3f64.tanh(), (-0.2f64).tanh()],
        ) < 1e-15);

        let h0 = [0.3f64.tanh(), (-0.2f64).tanh()];
        let a_h0 = [
            h_star[0] * (h_star[0] * h0[0] + h_star[1] * h0[1]),
            h_star[1] * (h_star[0] * h0[0] + h_star[1] * h0[1]),
        ];
        let want = [
            (boundary[0] + a_h0[0]).tanh(),
            (boundary[1] + a_h0[1]).tanh(),
        ];
        assert!(max_abs_diff(&refine_hidden(&boundary, &fw, 1), &want) < 1e-15);
    }

    #[test]
    fn tree_roles_unbind_their_fillers() {
        // Binary tree with A at the left slot and (B, C) one level deeper:
        // role vectors for the three occupied positions are orthonormal,
        // so unbinding any position returns its filler exactly.
        let a = vec![1.0, 0.0, 0.0];
        let b = vec![0.0, 1.0, 0.0];
        let c = vec![0.5, 0.5, -1.0];
        let r0 = vec![1.0, 0.0, 0.0];
        let r01 = vec![0.0, 1.0, 0.0];
        let r11 = vec![0.0, 0.0, 1.0];
        let mut t = TprTensor::new(3, 3);
        t.bind(&a, &r0);
        t.bind(&b, &r01);
        t.bind(&c, &r11);
        assert!(max_abs_diff(&t.unbind(&r01), &b) < 1e-12);
        assert!(max_abs_diff(&t.unbind(&r0), &a) < 1e-12);
        assert!(max_abs_diff(&t.unbind(&r11), &c) < 1e-12);
    }

    #[test]
    fn kron_composed_roles_stay_orthonormal() {
        let r0 = vec![0.6, 0.8];
        let r1 = vec![-0.8, 0.6];
        let roles = [kron(&r0, &r0), kron(&r0, &r1), kron(&r1, &r1)];
        for (i, ri) in roles.iter().enumerate() {
            for (j, rj) in roles.iter().enumerate() {
                let dot: f64 = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
        let fillers = [vec![2.0, -1.0], vec![0.0, 3.0], vec![1.0, 1.0]];
        let mut t = TprTensor::new(2, 4);
        for (f, r) in fillers.iter().zip(&roles) {
            t.bind(f, r);
        }
        for (f, r) in fillers.iter().zip(&roles) {
            assert!(max_abs_diff(&t.unbind(r), f) < 1e-12);
        }
    }
}
