use rayon::prelude::*;

/// Strided view of a row-major-or-transposed matrix operand.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a> {
    pub data: &'a [f32],
    pub rs: usize,
    pub cs: usize,
}

impl<'a> Mat<'a> {
    pub fn rows(data: &'a [f32], cols: usize) -> Self {
        Self { data, rs: cols, cs: 1 }
    }

    /// The transpose of a row-major `rows x cols` matrix.
    pub fn transposed(data: &'a [f32], cols: usize) -> Self {
        Self { data, rs: 1, cs: cols }
    }
}

const PAR_THRESHOLD: usize = 1 << 20;

/// `c[m,n] = beta * c + a[m,k] * b[k,n]`, with `c` dense row-major.
///
/// Rows of `c` are split across the rayon pool. Every output element is
/// computed by one thread over the full `k` range, so results do not depend
/// on the thread count.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: Mat, b: Mat, beta: f32, c: &mut [f32]) {
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let threads = rayon::current_num_threads();
    if threads <= 1 || m * n * k < PAR_THRESHOLD || m < 2 * threads {
        sgemm_block(m, k, n, a, b, beta, c, n);
        return;
    }
    let rows_per = m.div_ceil(threads);
    c.par_chunks_mut(rows_per * n).enumerate().for_each(|(chunk, c_chunk)| {
        let row0 = chunk * rows_per;
        let rows = c_chunk.len() / n;
        let a_off = Mat {
            data: &a.data[row0 * a.rs..],
            rs: a.rs,
            cs: a.cs,
        };
        sgemm_block(rows, k, n, a_off, b, beta, c_chunk, n);
    });
}

#[allow(clippy::too_many_arguments)]
fn sgemm_block(m: usize, k: usize, n: usize, a: Mat, b: Mat, beta: f32, c: &mut [f32], ldc: usize) {
    if k == 0 {
        for x in c.iter_mut() {
            *x *= beta;
        }
        return;
    }
    // Bounds the strided reads below.
    assert!(a.data.len() > (m - 1) * a.rs + (k - 1) * a.cs);
    assert!(b.data.len() > (k - 1) * b.rs + (n - 1) * b.cs);
    assert!(c.len() >= (m - 1) * ldc + n);
    // SAFETY: the asserts above keep every access of the m x k, k x n and
    // m x n operands inside their slices.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}
