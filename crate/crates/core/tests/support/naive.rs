//! Loop-level f64 reference implementations of the network layers, written
//! straight from their definitions with no shared code from the library.

#![allow(dead_code)]

#[derive(Clone, Debug)]
pub struct Arr {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Arr {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn from_f32(shape: &[usize], data: &[f32]) -> Self {
        Self::new(shape, data.iter().map(|&v| f64::from(v)).collect())
    }

    fn at4(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        let s = &self.shape;
        self.data[((n * s[1] + c) * s[2] + y) * s[3] + x]
    }
}

pub fn conv(x: &Arr, k: &Arr, stride: usize, pad: usize) -> Arr {
    let (n, ci, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (co, kh, kw) = (k.shape[0], k.shape[2], k.shape[3]);
    assert_eq!(k.shape[1], ci);
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * co * ho * wo];
    for b in 0..n {
        for o in 0..co {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for c in 0..ci {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let iy = (oy * stride + dy) as isize - pad as isize;
                                let ix = (ox * stride + dx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x.at4(b, c, iy as usize, ix as usize) * k.at4(o, c, dy, dx);
                            }
                        }
                    }
                    out[((b * co + o) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    Arr::new(&[n, co, ho, wo], out)
}

/// Training-mode batch norm: biased batch variance, eps 1e-5.
pub fn batch_norm_train(x: &Arr, gamma: &[f64], beta: &[f64]) -> Arr {
    let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let m = (n * h * w) as f64;
    let mut out = x.data.clone();
    for ch in 0..c {
        let mut values = Vec::new();
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    values.push(x.at4(b, ch, y, xx));
                }
            }
        }
        let mean = values.iter().sum::<f64>() / m;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        let inv = 1.0 / (var + 1e-5).sqrt();
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    let i = ((b * c + ch) * h + y) * w + xx;
                    out[i] = gamma[ch] * (x.data[i] - mean) * inv + beta[ch];
                }
            }
        }
    }
    Arr::new(&x.shape, out)
}

pub fn relu(x: &Arr) -> Arr {
    Arr::new(&x.shape, x.data.iter().map(|&v| v.max(0.0)).collect())
}

pub fn add(a: &Arr, b: &Arr) -> Arr {
    assert_eq!(a.shape, b.shape);
    Arr::new(&a.shape, a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect())
}

pub fn max_pool(x: &Arr, size: usize, stride: usize) -> Arr {
    let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let ho = (h - size) / stride + 1;
    let wo = (w - size) / stride + 1;
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    for dy in 0..size {
                        for dx in 0..size {
                            best = best.max(x.at4(b, ch, oy * stride + dy, ox * stride + dx));
                        }
                    }
                    out.push(best);
                }
            }
        }
    }
    Arr::new(&[n, c, ho, wo], out)
}

pub fn global_avg_pool(x: &Arr) -> Arr {
    let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let mut out = Vec::with_capacity(n * c);
    for b in 0..n {
        for ch in 0..c {
            let mut s = 0.0;
            for y in 0..h {
                for xx in 0..w {
                    s += x.at4(b, ch, y, xx);
                }
            }
            out.push(s / (h * w) as f64);
        }
    }
    Arr::new(&[n, c], out)
}

/// `x [N,F] -> x W^T + b` with `W [O,F]`.
pub fn linear(x: &Arr, w: &Arr, b: &[f64]) -> Arr {
    let (n, f) = (x.shape[0], x.shape[1]);
    let o = w.shape[0];
    let mut out = Vec::with_capacity(n * o);
    for i in 0..n {
        for j in 0..o {
            let mut acc = b[j];
            for k in 0..f {
                acc += x.data[i * f + k] * w.data[j * f + k];
            }
            out.push(acc);
        }
    }
    Arr::new(&[n, o], out)
}

/// Mean softmax cross-entropy.
pub fn cross_entropy(logits: &Arr, labels: &[usize]) -> f64 {
    let (n, k) = (logits.shape[0], logits.shape[1]);
    let mut total = 0.0;
    for i in 0..n {
        let row = &logits.data[i * k..(i + 1) * k];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[labels[i]];
    }
    total / n as f64
}

/// Flat input index chosen by each max-pool window; used to spot
/// finite-difference probes that cross a tie.
pub fn max_pool_winners(x: &Arr, size: usize, stride: usize) -> Vec<usize> {
    let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let ho = (h - size) / stride + 1;
    let wo = (w - size) / stride + 1;
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = (f64::NEG_INFINITY, 0);
                    for dy in 0..size {
                        for dx in 0..size {
                            let i = ((b * c + ch) * h + oy * stride + dy) * w + ox * stride + dx;
                            if x.data[i] > best.0 {
                                best = (x.data[i], i);
                            }
                        }
                    }
                    out.push(best.1);
                }
            }
        }
    }
    out
}
