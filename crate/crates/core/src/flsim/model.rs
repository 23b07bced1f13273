//! Multinomial logistic regression with parameters laid out class-major:
//! `w[k * (d + 1) .. k * (d + 1) + d]` is the weight row of class `k` and
//! `w[k * (d + 1) + d]` its bias.

fn logits(w: &[f64], x: &[f64], classes: usize, out: &mut [f64]) {
    let stride = x.len() + 1;
    for (k, o) in out.iter_mut().enumerate().take(classes) {
        let row = &w[k * stride..(k + 1) * stride];
        *o = row[..x.len()].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + row[x.len()];
    }
}

/// Turns logits into probabilities in place and returns `log(sum exp)`.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = z.iter().map(|v| (v - max).exp()).sum();
    let lse = max + total.ln();
    for v in z.iter_mut() {
        *v = (*v - lse).exp();
    }
    lse
}

/// Cross-entropy of one example; writes its gradient into `grad`.
pub fn example_loss_grad(w: &[f64], x: &[f64], y: usize, classes: usize, grad: &mut [f64]) -> f64 {
    let mut z = vec![0.0; classes];
    logits(w, x, classes, &mut z);
    let target = z[y];
    let lse = softmax_in_place(&mut z);
    let stride = x.len() + 1;
    for (k, pk) in z.iter().enumerate() {
        let coef = pk - if k == y { 1.0 } else { 0.0 };
        let g = &mut grad[k * stride..(k + 1) * stride];
        for (gi, xi) in g[..x.len()].iter_mut().zip(x) {
            *gi = coef * xi;
        }
        g[x.len()] = coef;
    }
    lse - target
}

pub fn example_loss(w: &[f64], x: &[f64], y: usize, classes: usize) -> f64 {
    let mut z = vec![0.0; classes];
    logits(w, x, classes, &mut z);
    let target = z[y];
    softmax_in_place(&mut z) - target
}

pub fn predict(w: &[f64], x: &[f64], classes: usize) -> usize {
    let mut z = vec![0.0; classes];
    logits(w, x, classes, &mut z);
    let mut best = 0;
    for k in 1..classes {
        if z[k] > z[best] {
            best = k;
        }
    }
    best
}

/// Mean loss and accuracy over rows of a row-major feature matrix.
pub fn evaluate(w: &[f64], xs: &[f64], ys: &[usize], dim: usize, classes: usize) -> (f64, f64) {
    if ys.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut loss = 0.0;
    let mut hits = 0usize;
    for (i, &y) in ys.iter().enumerate() {
        let x = &xs[i * dim..(i + 1) * dim];
        loss += example_loss(w, x, y, classes);
        if predict(w, x, classes) == y {
            hits += 1;
        }
    }
    let n = ys.len() as f64;
    (loss / n, hits as f64 / n)
}
