//! Builds a small computation on the reverse-mode tape, runs one backward
//! pass, and checks a few gradients against central finite differences.
//!
//! The tape is define-by-run: every op records its inputs, `backward` walks
//! the graph once, and leaves tied to a `ParamStore` hand their gradients
//! back through `absorb_grads`.

use engram::tape::Tape;

fn f(w: &[f64], x: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let wt = tape.leaf_mat(3, 4, w);
    let xt = tape.leaf_vec(x);
    let h = tape.matvec(wt, xt);
    let a = tape.tanh(h);
    let s = tape.softmax(a);
    let picked = tape.pick(s, 1);
    let sq = tape.square(picked);
    tape.scalar_value(sq)
}

fn main() {
    let w: Vec<f64> = (0..12).map(|i| 0.3 * (i as f64 - 5.5) / 6.0).collect();
    let x = [0.8, -0.4, 0.1, 0.9];

    let mut tape = Tape::new();
    let wt = tape.leaf_mat(3, 4, &w);
    let xt = tape.leaf_vec(&x);
    let h = tape.matvec(wt, xt);
    let a = tape.tanh(h);
    let s = tape.softmax(a);
    let picked = tape.pick(s, 1);
    let loss = tape.square(picked);
    println!("loss = {:.10}", tape.scalar_value(loss));

    tape.backward(loss);
    let grad_w = tape.grad(wt).expect("w participates in the loss").to_vec();

    let eps = 1e-5;
    let mut max_rel = 0.0f64;
    for i in 0..w.len() {
        let mut wp = w.clone();
        let mut wm = w.clone();
        wp[i] += eps;
        wm[i] -= eps;
        let fd = (f(&wp, &x) - f(&wm, &x)) / (2.0 * eps);
        let rel = (grad_w[i] - fd).abs() / fd.abs().max(1e-8);
        max_rel = max_rel.max(rel);
        if i < 4 {
            println!("dL/dw[{i}]  tape {:+.8}  fd {:+.8}", grad_w[i], fd);
        }
    }
    println!("max relative error over all 12 weights: {max_rel:.2e}");
    assert!(max_rel < 1e-6, "gradients disagree with finite differences");
    println!("tape gradients match finite differences");
}
