//! Randomly shaped small conv nets evaluated both on the tape (f32) and by
//! the f64 reference, for finite-difference gradient checks.

#![allow(dead_code)]

use sflab_core::tensor::{RunningStats, Tape};
use sflab_core::{Rng, Tensor};

use super::naive::{self, Arr};

pub const H: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-2;
pub const MIN_MAGNITUDE: f64 = 1e-4;
pub const MAX_LAYER_PARAMS: usize = 64;

#[derive(Clone, Debug)]
pub struct Layer {
    out: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    bn: bool,
    relu: bool,
    skip: bool,
    pool: bool,
}

#[derive(Clone, Debug)]
pub struct Net {
    pub layers: Vec<Layer>,
    pub labels: Vec<usize>,
}

/// Slot 0 is the input, then per layer the kernel and (with bn) gamma and
/// beta, then the FC weight and bias.
pub type Slots = Vec<Arr>;

pub fn random_net(seed: u64, depth: Option<usize>) -> (Net, Slots) {
    let mut rng = Rng::new(seed);
    let batch = 2 + rng.below(2);
    let channels = 1 + rng.below(3);
    let extent = [4, 6, 8][rng.below(3)];
    let classes = 2 + rng.below(3);
    let depth = depth.unwrap_or_else(|| 1 + rng.below(3));
    let mut layers = Vec::new();
    let (mut c, mut e) = (channels, extent);
    for _ in 0..depth {
        let kernel = 1 + rng.below(3.min(e));
        let stride = if e >= 4 { 1 + rng.below(2) } else { 1 };
        let pad = if kernel > 1 { rng.below(2) } else { 0 };
        let skip = kernel == 3 && pad == 1 && stride == 1 && rng.below(2) == 0;
        let widest = (MAX_LAYER_PARAMS / (c * kernel * kernel)).clamp(1, 4);
        let out = if skip { c } else { 1 + rng.below(widest) };
        let next = (e + 2 * pad - kernel) / stride + 1;
        let pool = next >= 4 && rng.below(3) == 0;
        layers.push(Layer {
            out,
            kernel,
            stride,
            pad,
            // Batch norm over a handful of values pins its output near
            // +-gamma and leaves only f32 cancellation noise in the gradient.
            bn: batch * next * next >= 16 && rng.below(2) == 0,
            relu: rng.below(4) != 0,
            skip,
            pool,
        });
        c = out;
        e = if pool { (next - 2) / 2 + 1 } else { next };
    }
    let labels = (0..batch).map(|_| rng.below(classes)).collect();
    let net = Net { layers, labels };

    let mut fill = |shape: &[usize], f: &mut dyn FnMut(&mut Rng) -> f64| {
        let n: usize = shape.iter().product();
        Arr::new(shape, (0..n).map(|_| f(&mut rng)).collect())
    };
    let mut slots = vec![fill(&[batch, channels, extent, extent], &mut |r| {
        r.uniform(0.0, 1.0) as f64
    })];
    let mut c = channels;
    for l in &net.layers {
        // Weights stay clear of zero: a near-zero filter in front of batch
        // norm makes h = 1e-3 comparable to the weight itself.
        slots.push(fill(&[l.out, c, l.kernel, l.kernel], &mut |r| {
            let m = r.uniform(0.25, 0.75) as f64;
            if r.below(2) == 0 {
                m
            } else {
                -m
            }
        }));
        if l.bn {
            slots.push(fill(&[l.out], &mut |r| r.uniform(0.5, 1.5) as f64));
            slots.push(fill(&[l.out], &mut |r| 0.1 * r.normal() as f64));
        }
        c = l.out;
    }
    slots.push(fill(&[classes, c], &mut |r| 0.5 * r.normal() as f64));
    slots.push(fill(&[classes], &mut |r| 0.1 * r.normal() as f64));
    // Round through f32 so both sides start from identical values.
    for s in &mut slots {
        for v in &mut s.data {
            *v = f64::from(*v as f32);
        }
    }
    (net, slots)
}

/// Loss plus the activation pattern (ReLU signs and pool winners).
pub fn reference(net: &Net, slots: &Slots) -> (f64, Vec<usize>) {
    let mut pattern = Vec::new();
    let mut x = slots[0].clone();
    let mut s = 1;
    for l in &net.layers {
        let mut y = naive::conv(&x, &slots[s], l.stride, l.pad);
        s += 1;
        if l.bn {
            y = naive::batch_norm_train(&y, &slots[s].data, &slots[s + 1].data);
            s += 2;
        }
        if l.skip {
            y = naive::add(&y, &x);
        }
        if l.relu {
            pattern.extend(y.data.iter().map(|&v| usize::from(v > 0.0)));
            y = naive::relu(&y);
        }
        if l.pool {
            pattern.extend(naive::max_pool_winners(&y, 2, 2));
            y = naive::max_pool(&y, 2, 2);
        }
        x = y;
    }
    let pooled = naive::global_avg_pool(&x);
    let logits = naive::linear(&pooled, &slots[s], &slots[s + 1].data);
    (naive::cross_entropy(&logits, &net.labels), pattern)
}

pub fn analytic(net: &Net, slots: &Slots) -> Vec<Vec<f64>> {
    let mut tape = Tape::new();
    let vars: Vec<_> = slots
        .iter()
        .map(|a| {
            let t = Tensor::new(&a.shape, a.data.iter().map(|&v| v as f32).collect()).unwrap();
            tape.leaf(t)
        })
        .collect();
    let mut x = vars[0];
    let mut s = 1;
    for l in &net.layers {
        let mut y = tape.conv2d(x, vars[s], l.stride, l.pad).unwrap();
        s += 1;
        if l.bn {
            let mut stats = RunningStats::new(l.out);
            y = tape.batch_norm(y, vars[s], vars[s + 1], &mut stats, true).unwrap();
            s += 2;
        }
        if l.skip {
            y = tape.add(y, x).unwrap();
        }
        if l.relu {
            y = tape.relu(y).unwrap();
        }
        if l.pool {
            y = tape.max_pool(y, 2, 2).unwrap();
        }
        x = y;
    }
    let pooled = tape.global_avg_pool(x).unwrap();
    let logits = tape.linear(pooled, vars[s], vars[s + 1]).unwrap();
    let loss = tape.softmax_xent(logits, &net.labels).unwrap();
    let grads = tape.backward(loss).unwrap();
    vars.iter()
        .map(|&v| grads.wrt(v).unwrap().data().iter().map(|&g| f64::from(g)).collect())
        .collect()
}

pub struct CheckSummary {
    pub checked: usize,
    pub skipped: usize,
    pub worst: f64,
}

pub fn check(net: &Net, slots: &Slots) -> CheckSummary {
    let grads = analytic(net, slots);
    let mut summary = CheckSummary {
        checked: 0,
        skipped: 0,
        worst: 0.0,
    };
    let mut probe = slots.clone();
    for (slot, g) in grads.iter().enumerate() {
        for i in 0..g.len() {
            let base = probe[slot].data[i];
            probe[slot].data[i] = base + H;
            let (up, pat_up) = reference(net, &probe);
            probe[slot].data[i] = base - H;
            let (down, pat_down) = reference(net, &probe);
            probe[slot].data[i] = base;
            if pat_up != pat_down {
                summary.skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * H);
            if g[i].abs() > MIN_MAGNITUDE {
                let rel = (g[i] - numeric).abs() / g[i].abs().max(numeric.abs());
                summary.worst = summary.worst.max(rel);
                summary.checked += 1;
            }
        }
    }
    summary
}
