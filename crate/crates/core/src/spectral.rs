//! Block DCT machinery: the 64 basis kernels, zigzag ordering, the forward and
//! inverse block transforms, the equivalent fixed convolution bank, and
//! low/high frequency reconstructions.
//!
//! Conventions: inside an 8x8 block, `x` indexes rows and `y` columns; the
//! frequency `u` pairs with `x` and `v` with `y`, so
//! `K[u,v][x,y] = c(u) c(v) / 4 * cos((2x+1)u pi/16) * cos((2y+1)v pi/16)`.
//! Frequency channels are laid out frequency-major: channel `3 z + color`
//! holds zigzag rank `z` of colour plane `color`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::tensor::Tensor;
use crate::{Error, Result};

pub const BLOCK: usize = 8;
pub const FREQUENCIES: usize = BLOCK * BLOCK;
pub const COLORS: usize = 3;
pub const CHANNELS: usize = COLORS * FREQUENCIES;
/// Pixels in `[0, 1]` are centred by this amount before the transform.
pub const LEVEL_SHIFT: f32 = 0.5;

fn norm(u: usize) -> f64 {
    if u == 0 {
        FRAC_1_SQRT_2
    } else {
        1.0
    }
}

/// One-dimensional factor `c(u)/2 * cos((2x+1) u pi / 16)`; the 2-D kernel is
/// the outer product of two of these.
fn basis_1d(u: usize, x: usize) -> f64 {
    norm(u) / 2.0 * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos()
}

/// The 64 DCT basis matrices in f64.
#[derive(Clone, Debug)]
pub struct DctKernelTable {
    kernels: Vec<[f64; FREQUENCIES]>,
}

impl DctKernelTable {
    /// `K[u,v]` as 64 row-major values indexed by `x * 8 + y`.
    pub fn kernel(&self, u: usize, v: usize) -> &[f64; FREQUENCIES] {
        &self.kernels[u * BLOCK + v]
    }

    pub fn value(&self, u: usize, v: usize, x: usize, y: usize) -> f64 {
        self.kernel(u, v)[x * BLOCK + y]
    }

    /// Frobenius inner product of two basis matrices.
    pub fn inner(&self, a: (usize, usize), b: (usize, usize)) -> f64 {
        self.kernel(a.0, a.1)
            .iter()
            .zip(self.kernel(b.0, b.1))
            .map(|(p, q)| p * q)
            .sum()
    }

    /// Largest deviation from orthonormality over all 4096 basis pairs.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..FREQUENCIES {
            for b in 0..FREQUENCIES {
                let delta = if a == b { 1.0 } else { 0.0 };
                let ip = self.inner((a / BLOCK, a % BLOCK), (b / BLOCK, b % BLOCK));
                worst = worst.max((ip - delta).abs());
            }
        }
        worst
    }
}

pub fn build_dct_kernels() -> DctKernelTable {
    let mut kernels = Vec::with_capacity(FREQUENCIES);
    for u in 0..BLOCK {
        for v in 0..BLOCK {
            let mut k = [0.0; FREQUENCIES];
            for x in 0..BLOCK {
                for y in 0..BLOCK {
                    k[x * BLOCK + y] = basis_1d(u, x) * basis_1d(v, y);
                }
            }
            kernels.push(k);
        }
    }
    DctKernelTable { kernels }
}

/// Zigzag permutation: rank `z` to frequency `(u, v)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZigzagOrder {
    order: [(usize, usize); FREQUENCIES],
    rank: [usize; FREQUENCIES],
}

impl ZigzagOrder {
    pub fn at(&self, rank: usize) -> (usize, usize) {
        self.order[rank]
    }

    pub fn rank_of(&self, u: usize, v: usize) -> usize {
        self.rank[u * BLOCK + v]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.order.iter().copied()
    }
}

/// JPEG zigzag: walk the anti-diagonals `u + v = s` from DC outwards,
/// alternating direction so the first move goes to `(0, 1)`.
pub fn zigzag_order() -> ZigzagOrder {
    let mut order = [(0, 0); FREQUENCIES];
    let mut z = 0;
    for s in 0..(2 * BLOCK - 1) {
        let lo = s.saturating_sub(BLOCK - 1);
        let hi = s.min(BLOCK - 1);
        // even diagonals run with u decreasing, odd ones with u increasing
        let us: Vec<usize> = if s % 2 == 0 {
            (lo..=hi).rev().collect()
        } else {
            (lo..=hi).collect()
        };
        for u in us {
            order[z] = (u, s - u);
            z += 1;
        }
    }
    let mut rank = [0; FREQUENCIES];
    for (z, &(u, v)) in order.iter().enumerate() {
        rank[u * BLOCK + v] = z;
    }
    ZigzagOrder { order, rank }
}

/// Block-DCT coefficients `[N, 192, H/8, W/8]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyTensor(Tensor);

impl FrequencyTensor {
    pub fn new(t: Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 4 || s[1] != CHANNELS {
            return Err(Error::shape(
                "frequency tensor",
                format!("expected [N, {CHANNELS}, H/8, W/8], got {s:?}"),
            ));
        }
        Ok(Self(t))
    }

    pub fn channel(rank: usize, color: usize) -> usize {
        COLORS * rank + color
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}

/// The fixed `[192, 3, 8, 8]` filters realising the block DCT as a stride-8
/// convolution. Filter `3 z + c` carries the zigzag-rank-`z` kernel in colour
/// plane `c` and zeros in the other two planes.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelBank(Tensor);

impl KernelBank {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    #[cfg(test)]
    pub(crate) fn from_tensor_unchecked(t: Tensor) -> Self {
        Self(t)
    }
}

pub fn build_sf_kernel_bank(table: &DctKernelTable, order: &ZigzagOrder) -> KernelBank {
    let plane = FREQUENCIES;
    let mut data = vec![0.0f32; CHANNELS * COLORS * plane];
    for (z, (u, v)) in order.iter().enumerate() {
        for color in 0..COLORS {
            let filter = FrequencyTensor::channel(z, color);
            let dst = &mut data[(filter * COLORS + color) * plane..][..plane];
            for (d, &k) in dst.iter_mut().zip(table.kernel(u, v)) {
                *d = k as f32;
            }
        }
    }
    KernelBank(Tensor::new(&[CHANNELS, COLORS, BLOCK, BLOCK], data).expect("bank shape"))
}

/// The sf bank built from the standard table and order.
pub fn sf_kernel_bank() -> KernelBank {
    build_sf_kernel_bank(&build_dct_kernels(), &zigzag_order())
}

/// Separable transform constants shared by the forward and inverse paths.
struct BlockTransform {
    basis: [[f32; BLOCK]; BLOCK],
    rank: [usize; FREQUENCIES],
}

impl BlockTransform {
    fn new() -> Self {
        let mut basis = [[0.0; BLOCK]; BLOCK];
        for (u, row) in basis.iter_mut().enumerate() {
            for (x, b) in row.iter_mut().enumerate() {
                *b = basis_1d(u, x) as f32;
            }
        }
        let order = zigzag_order();
        Self {
            basis,
            rank: order.rank,
        }
    }

    /// `D = C B C^T` for one block.
    fn forward(&self, block: &[[f32; BLOCK]; BLOCK]) -> [[f32; BLOCK]; BLOCK] {
        let c = &self.basis;
        let mut tmp = [[0.0f32; BLOCK]; BLOCK];
        for u in 0..BLOCK {
            for y in 0..BLOCK {
                let mut acc = 0.0;
                for x in 0..BLOCK {
                    acc += c[u][x] * block[x][y];
                }
                tmp[u][y] = acc;
            }
        }
        let mut out = [[0.0f32; BLOCK]; BLOCK];
        for u in 0..BLOCK {
            for v in 0..BLOCK {
                let mut acc = 0.0;
                for y in 0..BLOCK {
                    acc += tmp[u][y] * c[v][y];
                }
                out[u][v] = acc;
            }
        }
        out
    }

    /// `B = C^T D C` for one block.
    fn inverse(&self, coeffs: &[[f32; BLOCK]; BLOCK]) -> [[f32; BLOCK]; BLOCK] {
        let c = &self.basis;
        let mut tmp = [[0.0f32; BLOCK]; BLOCK];
        for x in 0..BLOCK {
            for v in 0..BLOCK {
                let mut acc = 0.0;
                for u in 0..BLOCK {
                    acc += c[u][x] * coeffs[u][v];
                }
                tmp[x][v] = acc;
            }
        }
        let mut out = [[0.0f32; BLOCK]; BLOCK];
        for x in 0..BLOCK {
            for y in 0..BLOCK {
                let mut acc = 0.0;
                for v in 0..BLOCK {
                    acc += tmp[x][v] * c[v][y];
                }
                out[x][y] = acc;
            }
        }
        out
    }
}

fn check_images(images: &Tensor) -> Result<(usize, usize, usize)> {
    let s = images.shape();
    if s.len() != 4 || s[1] != COLORS {
        return Err(Error::shape(
            "block_dct",
            format!("expected [N, 3, H, W] images, got {s:?}"),
        ));
    }
    if !s[2].is_multiple_of(BLOCK) || !s[3].is_multiple_of(BLOCK) {
        return Err(Error::NotBlockAligned {
            height: s[2],
            width: s[3],
        });
    }
    Ok((s[0], s[2], s[3]))
}

/// Transforms every 8x8 block of every colour plane after subtracting
/// `level_shift`.
pub fn block_dct_forward(images: &Tensor, level_shift: f32) -> Result<FrequencyTensor> {
    let (n, h, w) = check_images(images)?;
    let (bh, bw) = (h / BLOCK, w / BLOCK);
    let t = BlockTransform::new();
    let mut out = vec![0.0f32; n * CHANNELS * bh * bw];
    let src = images.data();
    let mut block = [[0.0f32; BLOCK]; BLOCK];
    for item in 0..n {
        for color in 0..COLORS {
            let plane = &src[(item * COLORS + color) * h * w..][..h * w];
            for by in 0..bh {
                for bx in 0..bw {
                    for (x, row) in block.iter_mut().enumerate() {
                        let line = &plane[(by * BLOCK + x) * w + bx * BLOCK..][..BLOCK];
                        for (b, &p) in row.iter_mut().zip(line) {
                            *b = p - level_shift;
                        }
                    }
                    let d = t.forward(&block);
                    for u in 0..BLOCK {
                        for v in 0..BLOCK {
                            let ch = FrequencyTensor::channel(t.rank[u * BLOCK + v], color);
                            out[((item * CHANNELS + ch) * bh + by) * bw + bx] = d[u][v];
                        }
                    }
                }
            }
        }
    }
    FrequencyTensor::new(Tensor::new(&[n, CHANNELS, bh, bw], out)?)
}

/// Exact inverse of [`block_dct_forward`]; clamps pixels to `[0, 1]` when
/// `clamp` is set.
pub fn block_dct_inverse(freq: &FrequencyTensor, level_shift: f32, clamp: bool) -> Tensor {
    let s = freq.tensor().shape();
    let (n, bh, bw) = (s[0], s[2], s[3]);
    let (h, w) = (bh * BLOCK, bw * BLOCK);
    let t = BlockTransform::new();
    let src = freq.tensor().data();
    let mut out = vec![0.0f32; n * COLORS * h * w];
    let mut coeffs = [[0.0f32; BLOCK]; BLOCK];
    for item in 0..n {
        for color in 0..COLORS {
            let plane = &mut out[(item * COLORS + color) * h * w..][..h * w];
            for by in 0..bh {
                for bx in 0..bw {
                    for u in 0..BLOCK {
                        for v in 0..BLOCK {
                            let ch = FrequencyTensor::channel(t.rank[u * BLOCK + v], color);
                            coeffs[u][v] = src[((item * CHANNELS + ch) * bh + by) * bw + bx];
                        }
                    }
                    let b = t.inverse(&coeffs);
                    for (x, row) in b.iter().enumerate() {
                        let line = &mut plane[(by * BLOCK + x) * w + bx * BLOCK..][..BLOCK];
                        for (p, &v) in line.iter_mut().zip(row) {
                            let px = v + level_shift;
                            *p = if clamp { px.clamp(0.0, 1.0) } else { px };
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[n, COLORS, h, w], out).expect("inverse shape")
}

/// Which coefficients survive a frequency reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reconstruction {
    /// Only the DC coefficient of every block and colour.
    Low,
    /// Everything except the DC coefficients.
    High,
}

/// Reconstruction without the final clamp, so that `low + high - shift`
/// reproduces the input.
pub fn frequency_reconstruct_unclamped(images: &Tensor, mode: Reconstruction, level_shift: f32) -> Result<Tensor> {
    let mut freq = block_dct_forward(images, level_shift)?;
    let s = freq.tensor().shape().to_vec();
    let plane = s[2] * s[3];
    let dc_channels = 0..COLORS;
    for item in 0..s[0] {
        for ch in 0..CHANNELS {
            let keep = match mode {
                Reconstruction::Low => dc_channels.contains(&ch),
                Reconstruction::High => !dc_channels.contains(&ch),
            };
            if !keep {
                freq.tensor_mut().data_mut()[(item * CHANNELS + ch) * plane..][..plane].fill(0.0);
            }
        }
    }
    Ok(block_dct_inverse(&freq, level_shift, false))
}

/// Low (DC only) or high (all but DC) frequency reconstruction, clamped to
/// `[0, 1]`.
pub fn frequency_reconstruct(images: &Tensor, mode: Reconstruction) -> Result<Tensor> {
    Ok(frequency_reconstruct_unclamped(images, mode, LEVEL_SHIFT)?.map(|p| p.clamp(0.0, 1.0)))
}

/// Worst-case pixel change reachable by an l-infinity frequency perturbation
/// of radius `eps_f`: `eps_f * max_{x,y} sum_{u,v} |K[u,v][x,y]|`.
pub fn max_pixel_deviation(eps_f: f32) -> f32 {
    let table = build_dct_kernels();
    let mut worst = 0.0f64;
    for x in 0..BLOCK {
        for y in 0..BLOCK {
            let mut total = 0.0;
            for u in 0..BLOCK {
                for v in 0..BLOCK {
                    total += table.value(u, v, x, y).abs();
                }
            }
            worst = worst.max(total);
        }
    }
    (f64::from(eps_f) * worst) as f32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{conv2d, Rng};

    fn random_images(n: usize, h: usize, w: usize, rng: &mut Rng) -> Tensor {
        let data = (0..n * 3 * h * w).map(|_| rng.uniform(0.0, 1.0)).collect();
        Tensor::new(&[n, 3, h, w], data).unwrap()
    }

    /// Direct double sum of the DCT definition, written independently of the
    /// separable implementation.
    fn naive_block(block: &[f64; 64], u: usize, v: usize) -> f64 {
        let c = |k: usize| if k == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
        let mut acc = 0.0;
        for x in 0..8 {
            for y in 0..8 {
                acc += block[x * 8 + y] * c(u) * c(v) / 4.0
                    * (((2 * x + 1) * u) as f64 * PI / 16.0).cos()
                    * (((2 * y + 1) * v) as f64 * PI / 16.0).cos();
            }
        }
        acc
    }

    #[test]
    fn dc_kernel_is_constant_eighth() {
        let t = build_dct_kernels();
        assert!(t.kernel(0, 0).iter().all(|&k| (k - 0.125).abs() < 1e-15));
    }

    #[test]
    fn dc_and_first_ac_are_orthogonal() {
        assert!(build_dct_kernels().inner((0, 0), (0, 1)).abs() < 1e-12);
    }

    #[test]
    fn full_orthonormality_sweep() {
        assert!(build_dct_kernels().orthonormality_error() < 1e-9);
    }

    #[test]
    fn zigzag_matches_jpeg_table() {
        // Raster positions of the standard JPEG zigzag scan.
        const JPEG: [usize; 64] = [
            0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7,
            14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46,
            53, 60, 61, 54, 47, 55, 62, 63,
        ];
        let z = zigzag_order();
        for (rank, &pos) in JPEG.iter().enumerate() {
            assert_eq!(z.at(rank), (pos / 8, pos % 8), "rank {rank}");
        }
        assert_eq!(z.at(0), (0, 0));
        assert_eq!(z.at(63), (7, 7));
        let first: Vec<_> = (1..=5).map(|r| z.at(r)).collect();
        assert_eq!(first, vec![(0, 1), (1, 0), (2, 0), (1, 1), (0, 2)]);
    }

    #[test]
    fn zigzag_bijection_and_neighbours() {
        let z = zigzag_order();
        let mut seen = [false; 64];
        for rank in 0..64 {
            let (u, v) = z.at(rank);
            assert!(!seen[u * 8 + v]);
            seen[u * 8 + v] = true;
            assert_eq!(z.rank_of(u, v), rank);
            if rank > 0 {
                let (pu, pv) = z.at(rank - 1);
                let step = (u as isize - pu as isize).abs().max((v as isize - pv as isize).abs());
                assert_eq!(step, 1, "rank {rank} jumps from {:?}", (pu, pv));
            }
        }
    }

    #[test]
    fn constant_one_image_has_only_dc() {
        let img = Tensor::ones(&[1, 3, 16, 8]);
        let f = block_dct_forward(&img, 0.5).unwrap();
        let s = f.tensor().shape().to_vec();
        assert_eq!(s, vec![1, 192, 2, 1]);
        for ch in 0..192 {
            for &v in &f.tensor().data()[ch * 2..ch * 2 + 2] {
                let want = if ch < 3 { 4.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-5, "channel {ch}: {v}");
            }
        }
    }

    #[test]
    fn centred_image_is_all_zero() {
        let f = block_dct_forward(&Tensor::full(&[2, 3, 8, 8], 0.5), 0.5).unwrap();
        assert!(f.tensor().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_naive_sum() {
        let mut rng = Rng::new(5);
        let img = random_images(1, 8, 8, &mut rng);
        let f = block_dct_forward(&img, 0.5).unwrap();
        let z = zigzag_order();
        for color in 0..3 {
            let mut block = [0.0f64; 64];
            for (i, b) in block.iter_mut().enumerate() {
                *b = f64::from(img.data()[color * 64 + i]) - 0.5;
            }
            for u in 0..8 {
                for v in 0..8 {
                    let ch = 3 * z.rank_of(u, v) + color;
                    let got = f64::from(f.tensor().data()[ch]);
                    assert!((got - naive_block(&block, u, v)).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let mut rng = Rng::new(6);
        let img = random_images(2, 16, 24, &mut rng);
        let back = block_dct_inverse(&block_dct_forward(&img, 0.5).unwrap(), 0.5, false);
        assert!(back.max_abs_diff(&img) < 1e-5);
    }

    #[test]
    fn zero_coefficients_invert_to_shift() {
        let f = FrequencyTensor::new(Tensor::zeros(&[1, 192, 1, 2])).unwrap();
        let img = block_dct_inverse(&f, 0.5, true);
        assert!(img.data().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn unit_dc_coefficient_raises_one_block_by_an_eighth() {
        let mut f = FrequencyTensor::new(Tensor::zeros(&[1, 192, 1, 2])).unwrap();
        f.tensor_mut().data_mut()[1] = 1.0; // channel 0, block (0, 1)
        let img = block_dct_inverse(&f, 0.5, false);
        for x in 0..8 {
            for y in 0..16 {
                let p = img.data()[x * 16 + y];
                let want = if y >= 8 { 0.625 } else { 0.5 };
                assert!((p - want).abs() < 1e-6);
            }
        }
        // other colour planes untouched
        assert!(img.data()[128..].iter().all(|&p| (p - 0.5).abs() < 1e-6));
    }

    #[test]
    fn parseval_holds_per_block() {
        let mut rng = Rng::new(8);
        let img = random_images(3, 8, 8, &mut rng);
        let f = block_dct_forward(&img, 0.5).unwrap();
        for item in 0..3 {
            let pix: f64 = img.item(item).iter().map(|&p| f64::from(p - 0.5).powi(2)).sum();
            let fr: f64 = f.tensor().item(item).iter().map(|&c| f64::from(c).powi(2)).sum();
            assert!((pix.sqrt() - fr.sqrt()).abs() <= 1e-4 * pix.sqrt());
        }
    }

    #[test]
    fn bank_layout() {
        let table = build_dct_kernels();
        let bank = sf_kernel_bank();
        let t = bank.tensor();
        assert_eq!(t.shape(), &[192, 3, 8, 8]);
        for (i, &w) in t.data()[..64].iter().enumerate() {
            assert_eq!(w, table.kernel(0, 0)[i] as f32);
        }
        assert!(t.data()[64..192].iter().all(|&w| w == 0.0));
        for filter in 0..192 {
            let zeros = t.item(filter).iter().filter(|&&w| w == 0.0).count();
            assert_eq!(zeros, 128, "filter {filter}");
            let nonzero_planes = (0..3)
                .filter(|&c| t.item(filter)[c * 64..(c + 1) * 64].iter().any(|&w| w != 0.0))
                .count();
            assert_eq!(nonzero_planes, 1);
        }
    }

    #[test]
    fn bank_convolution_equals_block_transform() {
        let mut rng = Rng::new(10);
        let bank = sf_kernel_bank();
        let img = random_images(4, 32, 32, &mut rng);
        let shifted = img.map(|p| p - 0.5);
        let conv = conv2d(&shifted, bank.tensor(), 8, 0).unwrap();
        let dct = block_dct_forward(&img, 0.5).unwrap();
        assert!(conv.max_abs_diff(dct.tensor()) <= 1e-5);
    }

    #[test]
    fn misaligned_extents_rejected() {
        let err = block_dct_forward(&Tensor::zeros(&[1, 3, 12, 8]), 0.5).unwrap_err();
        assert!(matches!(err, Error::NotBlockAligned { height: 12, width: 8 }));
        assert!(err.to_string().contains("resize"));
    }

    #[test]
    fn constant_image_reconstructions() {
        let img = Tensor::full(&[1, 3, 8, 16], 0.8);
        let low = frequency_reconstruct(&img, Reconstruction::Low).unwrap();
        let high = frequency_reconstruct(&img, Reconstruction::High).unwrap();
        assert!(low.max_abs_diff(&img) < 1e-6);
        assert!(high.data().iter().all(|&p| (p - 0.5).abs() < 1e-6));
    }

    #[test]
    fn low_plus_high_reproduces_input() {
        let mut rng = Rng::new(12);
        let img = random_images(2, 16, 16, &mut rng);
        let low = frequency_reconstruct_unclamped(&img, Reconstruction::Low, 0.5).unwrap();
        let high = frequency_reconstruct_unclamped(&img, Reconstruction::High, 0.5).unwrap();
        let sum = low.zip_map(&high, |a, b| a + b - 0.5).unwrap();
        assert!(sum.max_abs_diff(&img) < 1e-5);
    }

    #[test]
    fn pure_ac_pattern_splits_cleanly() {
        let table = build_dct_kernels();
        let k = table.kernel(0, 2);
        let mut data = Vec::new();
        for _ in 0..3 {
            data.extend(k.iter().map(|&v| 0.5 + v as f32));
        }
        let img = Tensor::new(&[1, 3, 8, 8], data).unwrap();
        let low = frequency_reconstruct(&img, Reconstruction::Low).unwrap();
        let high = frequency_reconstruct(&img, Reconstruction::High).unwrap();
        assert!(low.data().iter().all(|&p| (p - 0.5).abs() < 1e-6));
        assert!(high.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn deviation_bound_is_linear() {
        assert_eq!(max_pixel_deviation(0.0), 0.0);
        let a = max_pixel_deviation(0.004);
        assert!((max_pixel_deviation(0.008) - 2.0 * a).abs() < 1e-7);
    }

    #[test]
    fn deviation_bound_is_attained() {
        // Setting every coefficient of a block to eps * sign(K[u,v][x*,y*])
        // moves pixel (x*, y*) by exactly the bound.
        let eps = 0.003f32;
        let table = build_dct_kernels();
        let z = zigzag_order();
        let bound = max_pixel_deviation(eps);
        let mut best = 0.0f32;
        for x in 0..8 {
            for y in 0..8 {
                let mut f = Tensor::zeros(&[1, 192, 1, 1]);
                for u in 0..8 {
                    for v in 0..8 {
                        f.data_mut()[3 * z.rank_of(u, v)] = eps * table.value(u, v, x, y).signum() as f32;
                    }
                }
                let img = block_dct_inverse(&FrequencyTensor::new(f).unwrap(), 0.0, false);
                best = best.max(img.data()[x * 8 + y].abs());
            }
        }
        assert!((best - bound).abs() < 1e-6, "{best} vs {bound}");
    }
}
