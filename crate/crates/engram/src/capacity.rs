//! Memorisation-capacity analysis for scheduled writing.
//!
//! The contribution measure scores a write schedule by how much every input
//! timestep can still influence memory at the end of the sequence, assuming
//! per-step contributions decay geometrically with rate λ between writes:
//! `I_λ = (C/T) Σ_i f_λ(l_i)` over the interval lengths `l_i` between writes.
//! Uniform intervals maximize it (Jensen), which is what makes equally
//! spaced writes the right default schedule.
//!
//! Also here: exhaustive-search oracles for the optimal schedule, empirical
//! timestep-contribution profiles measured through the tape, and the Fisher
//! memory curve of a linear recurrent network.

use crate::scheduling::WriteSchedule;
use crate::tape::{Tape, TensorId};
use serde::{Deserialize, Serialize};

#[derive(thiserror::Error, Debug)]
pub enum CapacityError {
    #[error("lambda must be positive, got {0}")]
    LambdaNotPositive(f64),
    #[error("lambda {0} > 1 requires CapacityParams::new_expansive")]
    LambdaExpansive(f64),
    #[error("schedule has {got} write steps before T, capacity params allow D={d}")]
    TooManyWrites { got: usize, d: usize },
    #[error("schedule length {sched} does not match params T={t}")]
    LengthMismatch { sched: usize, t: usize },
    #[error("enumeration of C({n},{k}) schedules exceeds the 10^6 guard")]
    InstanceTooLarge { n: usize, k: usize },
    #[error("D={d} write slots cannot be placed before T={t}")]
    SlotsExceedHorizon { d: usize, t: usize },
    #[error("matrix is not normal: ||WW' - W'W||_F = {0:.3e}")]
    NotNormal(f64),
    #[error("spectral radius {0} >= 1, memory trace diverges")]
    SpectralRadius(f64),
}

/// Decay rate, contribution scale, horizon, and slot budget for the measure.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CapacityParams {
    pub lambda: f64,
    pub c: f64,
    pub t_len: usize,
    pub d: usize,
}

impl CapacityParams {
    pub fn new(lambda: f64, c: f64, t_len: usize, d: usize) -> Result<Self, CapacityError> {
        if lambda <= 0.0 {
            return Err(CapacityError::LambdaNotPositive(lambda));
        }
        if lambda > 1.0 {
            return Err(CapacityError::LambdaExpansive(lambda));
        }
        assert!(c > 0.0, "contribution scale must be positive");
        assert!(t_len >= 1, "horizon must be at least one step");
        Ok(CapacityParams { lambda, c, t_len, d })
    }

    /// λ > 1 variant; the uniform optimizer argument still applies.
    pub fn new_expansive(lambda: f64, c: f64, t_len: usize, d: usize) -> Result<Self, CapacityError> {
        if lambda <= 0.0 {
            return Err(CapacityError::LambdaNotPositive(lambda));
        }
        assert!(c > 0.0, "contribution scale must be positive");
        Ok(CapacityParams { lambda, c, t_len, d })
    }
}

/// `f_λ(x) = (1 − λ^x)/(1 − λ)`, continued as `x` at λ = 1.
pub fn f_lambda(x: f64, lambda: f64) -> f64 {
    assert!(x >= 0.0, "interval length must be nonnegative");
    assert!(lambda > 0.0, "lambda must be positive");
    if (lambda - 1.0).abs() < 1e-12 {
        x
    } else {
        (1.0 - lambda.powf(x)) / (1.0 - lambda)
    }
}

/// Jensen upper bound `g_λ(T,D) = (C(D+1)/T) f_λ(T/(D+1))`, attained by
/// uniform intervals.
pub fn jensen_bound(params: &CapacityParams) -> f64 {
    let parts = (params.d + 1) as f64;
    let t = params.t_len as f64;
    params.c * parts / t * f_lambda(t / parts, params.lambda)
}

/// A schedule together with its interval decomposition and score.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScheduleScore {
    pub schedule: WriteSchedule,
    pub intervals: Vec<usize>,
    pub i_lambda: f64,
}

/// Splits `1..=T` at the write steps. A write at exactly t = T closes the
/// final interval and does not count against the slot budget; otherwise the
/// segment T − K_last is appended implicitly.
pub fn schedule_intervals(sched: &WriteSchedule, t_len: usize) -> Vec<usize> {
    let mut intervals = Vec::with_capacity(sched.write_steps.len() + 1);
    let mut prev = 0;
    for &k in &sched.write_steps {
        intervals.push(k - prev);
        prev = k;
    }
    if prev < t_len {
        intervals.push(t_len - prev);
    }
    intervals
}

/// Scores a schedule: `I_λ = (C/T) Σ_i f_λ(l_i)`.
pub fn capacity_of_schedule(
    sched: &WriteSchedule,
    params: &CapacityParams,
) -> Result<ScheduleScore, CapacityError> {
    if sched.t_len != params.t_len {
        return Err(CapacityError::LengthMismatch { sched: sched.t_len, t: params.t_len });
    }
    let explicit = sched.write_steps.iter().filter(|&&k| k < params.t_len).count();
    if explicit > params.d {
        return Err(CapacityError::TooManyWrites { got: explicit, d: params.d });
    }
    let intervals = schedule_intervals(sched, params.t_len);
    debug_assert_eq!(intervals.iter().sum::<usize>(), params.t_len);
    let sum: f64 = intervals.iter().map(|&l| f_lambda(l as f64, params.lambda)).sum();
    let i_lambda = params.c / params.t_len as f64 * sum;
    Ok(ScheduleScore { schedule: sched.clone(), intervals, i_lambda })
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut out: u128 = 1;
    for i in 0..k {
        out = out.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    out
}

fn consider(best: &mut Vec<ScheduleScore>, score: ScheduleScore) {
    match best.first() {
        None => best.push(score),
        Some(b) => {
            let cur = b.i_lambda;
            let tol = 1e-12 * cur.abs().max(1.0);
            if score.i_lambda > cur + tol {
                best.clear();
                best.push(score);
            } else if (score.i_lambda - cur).abs() <= tol {
                best.push(score);
            }
        }
    }
}

/// Exhaustively enumerates all D-subsets of `{1..T−1}` as write steps and
/// returns every schedule tying the maximum score (rel. tolerance 1e−12).
pub fn brute_force_optimal_schedule(
    params: &CapacityParams,
) -> Result<Vec<ScheduleScore>, CapacityError> {
    let n = params.t_len - 1;
    if params.d > n {
        return Err(CapacityError::SlotsExceedHorizon { d: params.d, t: params.t_len });
    }
    if binomial(n, params.d) > 1_000_000 {
        return Err(CapacityError::InstanceTooLarge { n, k: params.d });
    }
    let mut best: Vec<ScheduleScore> = Vec::new();
    if params.d == 0 {
        let sched = WriteSchedule::from_steps(params.t_len, Vec::new());
        consider(&mut best, capacity_of_schedule(&sched, params)?);
        return Ok(best);
    }
    // lexicographic fixed-size subset walk
    let mut idx: Vec<usize> = (1..=params.d).collect();
    loop {
        let sched = WriteSchedule::from_steps(params.t_len, idx.clone());
        consider(&mut best, capacity_of_schedule(&sched, params)?);
        let mut advanced = false;
        let mut j = params.d;
        while j > 0 {
            j -= 1;
            if idx[j] < n - (params.d - 1 - j) {
                idx[j] += 1;
                for l in j + 1..params.d {
                    idx[l] = idx[l - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            return Ok(best);
        }
    }
}

/// Per-timestep influence profile: `c[i][t] = ||∂h_t/∂x_i||_F` for 0-based
/// `i ≤ t`, measured by one backward pass per hidden component.
#[derive(Clone, Debug)]
pub struct ContributionProfile {
    pub t_len: usize,
    pub c: Vec<Vec<f64>>,
}

impl ContributionProfile {
    pub fn get(&self, i: usize, t: usize) -> f64 {
        assert!(i <= t && t < self.t_len, "contribution defined for i <= t only");
        self.c[i][t]
    }
}

/// Measures `||∂h_t/∂x_i||_F` on an already-built rollout. `inputs[i]` and
/// `hiddens[t]` are the tape tensors of the step inputs and states.
pub fn empirical_contribution(
    tape: &mut Tape,
    inputs: &[TensorId],
    hiddens: &[TensorId],
) -> ContributionProfile {
    assert_eq!(inputs.len(), hiddens.len());
    let t_len = hiddens.len();
    let mut c = vec![vec![0.0; t_len]; t_len];
    for (t, &h) in hiddens.iter().enumerate() {
        let h_len = tape.shape(h).len();
        for a in 0..h_len {
            let mut seed = vec![0.0; h_len];
            seed[a] = 1.0;
            tape.backward_seeded(h, &seed);
            for (i, &x) in inputs.iter().enumerate().take(t + 1) {
                if let Some(g) = tape.grad(x) {
                    c[i][t] += g.iter().map(|v| v * v).sum::<f64>();
                }
            }
        }
        for row in c.iter_mut() {
            row[t] = row[t].sqrt();
        }
    }
    ContributionProfile { t_len, c }
}

fn matmul_sq(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues and the orthogonal matrix Q (row-major; column j pairs with
/// eigenvalue j).
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[i * n + j] * m[i * n + j];
                }
            }
        }
        if off.sqrt() < 1e-13 {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for r in p + 1..n {
                let apr = m[p * n + r];
                if apr.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[r * n + r] - m[p * n + p]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cos = 1.0 / (t * t + 1.0).sqrt();
                let sin = t * cos;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkr = m[k * n + r];
                    m[k * n + p] = cos * mkp - sin * mkr;
                    m[k * n + r] = sin * mkp + cos * mkr;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mrk = m[r * n + k];
                    m[p * n + k] = cos * mpk - sin * mrk;
                    m[r * n + k] = sin * mpk + cos * mrk;
                }
                for k in 0..n {
                    let qkp = q[k * n + p];
                    let qkr = q[k * n + r];
                    q[k * n + p] = cos * qkp - sin * qkr;
                    q[k * n + r] = sin * qkp + cos * qkr;
                }
            }
        }
    }
    let vals = (0..n).map(|i| m[i * n + i]).collect();
    (vals, q)
}

/// Fisher memory curve of the linear network `x_n = W x_{n-1} + v s_n + z_n`
/// for normal `W` with spectral radius < 1:
/// `J(k) = (1/ε) Σ_i ṽ_i² μ_i^k (1 − μ_i)` where μ_i are the eigenvalues of
/// `WWᵀ` (the squared eigenvalue moduli of W) and ṽ = Qᵀv. The thesis's
/// simplified form takes ε = 1.
pub fn fisher_memory_curve(
    w: &[f64],
    n: usize,
    v: &[f64],
    eps: f64,
    k_max: usize,
) -> Result<Vec<f64>, CapacityError> {
    assert_eq!(w.len(), n * n);
    assert_eq!(v.len(), n);
    assert!(eps > 0.0, "noise variance must be positive");
    let wt: Vec<f64> = (0..n * n).map(|i| w[(i % n) * n + i / n]).collect();
    let wwt = matmul_sq(w, &wt, n);
    let wtw = matmul_sq(&wt, w, n);
    let dev: Vec<f64> = wwt.iter().zip(&wtw).map(|(a, b)| a - b).collect();
    let scale = frobenius(&wwt).max(1.0);
    if frobenius(&dev) > 1e-9 * scale {
        return Err(CapacityError::NotNormal(frobenius(&dev)));
    }
    let (mu, q) = symmetric_eigen(&wwt, n);
    let radius = mu.iter().cloned().fold(0.0f64, f64::max).max(0.0).sqrt();
    if radius >= 1.0 {
        return Err(CapacityError::SpectralRadius(radius));
    }
    let mut proj_sq = vec![0.0; n];
    for (j, p) in proj_sq.iter_mut().enumerate() {
        let dot: f64 = (0..n).map(|k| q[k * n + j] * v[k]).sum();
        *p = dot * dot;
    }
    let curve = (0..=k_max)
        .map(|k| {
            (0..n)
                .map(|i| {
                    let m = mu[i].max(0.0);
                    let pow = if k == 0 { 1.0 } else { m.powi(k as i32) };
                    proj_sq[i] * pow * (1.0 - m)
                })
                .sum::<f64>()
                / eps
        })
        .collect();
    Ok(curve)
}
