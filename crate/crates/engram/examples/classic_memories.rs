//! Tour of the classic associative memories: Hopfield energy descent,
//! sparse distributed memory, holographic reduced representations, tensor
//! product binding, fast weights, a differentiable stack, and multi-hop
//! attention reads.
//!
//! Each section stores something, corrupts or queries it, and prints what
//! comes back.

use engram::classic::hopfield::HopfieldNet;
use engram::classic::hrr::{self, HrrTrace};
use engram::classic::matrix_mem::{FastWeights, TprTensor};
use engram::classic::memnn::hop_read;
use engram::classic::sdm::SdmMemory;
use engram::classic::stack::NeuralStackState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    // Hopfield: store two 24-bit patterns, flip 4 bits, descend
    let patterns: Vec<Vec<i8>> = (0..2)
        .map(|_| (0..24).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect())
        .collect();
    let net = HopfieldNet::store(&patterns);
    let mut cue = patterns[0].clone();
    for i in [1, 7, 13, 20] {
        cue[i] = -cue[i];
    }
    let run = net.recall(&cue, 10, 0);
    println!("hopfield: energy {:.1} -> {:.1} over {} sweeps, recovered = {}",
        run.energies.first().unwrap(),
        run.energies.last().unwrap(),
        run.energies.len() - 1,
        run.state == patterns[0]);
    assert!(run.energies.windows(2).all(|w| w[1] <= w[0]), "energy never rises");

    // SDM: distributed storage across hard locations within a Hamming radius
    let mut sdm = SdmMemory::new(400, 64, 24, &mut rng);
    let addr: Vec<u8> = (0..64).map(|_| rng.gen_range(0..2u8)).collect();
    let content: Vec<u8> = (0..64).map(|_| rng.gen_range(0..2u8)).collect();
    sdm.write(&addr, &content);
    let mut noisy = addr.clone();
    for i in 0..3 {
        noisy[i] ^= 1;
    }
    let read = sdm.read(&noisy);
    let errs = read.bits.iter().zip(&content).filter(|(a, b)| a != b).count();
    println!("sdm: read through {} locations with a 3-bit-noisy address, {errs} bit errors", read.locations);

    // HRR: superpose key⊛value pairs, unbind by the key's inverse
    let dim = 256;
    let pairs: Vec<_> = (0..4)
        .map(|_| (hrr::random_unit_key(dim, &mut rng), hrr::random_unit_key(dim, &mut rng)))
        .collect();
    let trace = HrrTrace::encode(&pairs);
    let got = trace.decode(&pairs[2].0);
    println!("hrr: cosine(decoded, stored) = {:.3} with 4 superposed pairs", hrr::cosine(&got.value, &pairs[2].1));

    // TPR: role-filler binding is exact while roles stay orthonormal
    let mut tpr = TprTensor::new(3, 3);
    tpr.bind(&[1.0, 0.0, 2.0], &[1.0, 0.0, 0.0]);
    tpr.bind(&[0.0, 5.0, 1.0], &[0.0, 1.0, 0.0]);
    println!("tpr: unbind role 0 -> {:?}", tpr.unbind(&[1.0, 0.0, 0.0]));

    // fast weights: recent hidden states attract the iterate
    let mut fast = FastWeights::new(4, 0.9, 0.5);
    fast.update(&[1.0, 0.0, 0.0, 0.0]);
    fast.update(&[0.0, 1.0, 0.0, 0.0]);
    let pulled = fast.apply(&[0.6, 0.8, 0.0, 0.0]);
    println!("fast weights: A·h = {pulled:.3?} (recency-weighted echo of stored states)");

    // neural stack: continuous push/pop with strengths
    let mut stack = NeuralStackState::new(2);
    stack.step(1.0, 0.0, &[1.0, 0.0]);
    stack.step(1.0, 0.0, &[0.0, 1.0]);
    let top1 = stack.step(0.0, 1.0, &[0.0, 0.0]);
    let top2 = stack.step(0.0, 1.0, &[0.0, 0.0]);
    println!("stack: pushed e1, e2; pops return {top1:.1?} then {top2:.1?}");

    // multi-hop attention over a tiny story
    let memory = vec![
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 0.0],
    ];
    let identity: Vec<f64> = (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
    let trace = hop_read(&memory, &memory, &[0.9, 0.1, 0.0, 0.0], 2, &identity);
    println!(
        "memnn: 2-hop attention starts at row {} then moves with the summed read",
        trace.attentions[0]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap()
    );
}
