//! Soft memory-network reads: each hop scores every memory row against the
//! query, mixes the rows' output features under the softmax attention, and
//! refines the query through a linear map plus the read.

/// Full hop-by-hop record: refined query after the last hop, plus the read
/// and attention vectors of every hop.
pub struct HopTrace {
    pub answer: Vec<f64>,
    pub reads: Vec<Vec<f64>>,
    pub attentions: Vec<Vec<f64>>,
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// Runs `hops` rounds of p = softmax(uᵀm_i), r = Σ p_i c_i, u ← Hmat·u + r.
/// `hmat` is row-major d×d where d is the query dimension; output features
/// `outputs[i]` must share that dimension so the query update typechecks.
pub fn hop_read(
    memory: &[Vec<f64>],
    outputs: &[Vec<f64>],
    query: &[f64],
    hops: usize,
    hmat: &[f64],
) -> HopTrace {
    assert!(hops >= 1);
    assert_eq!(memory.len(), outputs.len());
    assert!(!memory.is_empty());
    let d = query.len();
    assert_eq!(hmat.len(), d * d);
    for (m, c) in memory.iter().zip(outputs) {
        assert_eq!(m.len(), d);
        assert_eq!(c.len(), d);
    }

    let mut u = query.to_vec();
    let mut reads = Vec::with_capacity(hops);
    let mut attentions = Vec::with_capacity(hops);
    for _ in 0..hops {
        let scores: Vec<f64> = memory
            .iter()
            .map(|m| m.iter().zip(&u).map(|(a, b)| a * b).sum())
            .collect();
        let p = softmax(&scores);
        let mut r = vec![0.0; d];
        for (pi, c) in p.iter().zip(outputs) {
            for (slot, v) in r.iter_mut().zip(c) {
                *slot += pi * v;
            }
        }
        let mapped: Vec<f64> = (0..d)
            .map(|i| hmat[i * d..(i + 1) * d].iter().zip(&u).map(|(h, x)| h * x).sum())
            .collect();
        u = mapped.iter().zip(&r).map(|(m, r)| m + r).collect();
        reads.push(r);
        attentions.push(p);
    }
    HopTrace {
        answer: u,
        reads,
        attentions,
    }
}
