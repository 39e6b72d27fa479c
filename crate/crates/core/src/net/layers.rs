//! Batched NHWC kernels with explicit backward passes.

/// `c = a * b + beta * c` for row/column-strided matrices.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len(), "gemm: lhs too short");
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len(), "gemm: rhs too short");
    assert!(c.len() >= m * n, "gemm: output too short");
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is a distinct mutable borrow.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dims {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub fn pixels(&self) -> usize {
        self.batch * self.height * self.width
    }
}

/// Zero-padded 3x3 patches: one row per output pixel, `9 * cin` columns
/// ordered `(ky, kx, channel)`.
pub(crate) fn im2col3(x: &[f64], d: Dims, cin: usize) -> Vec<f64> {
    let row_len = 9 * cin;
    let mut cols = vec![0.0; d.pixels() * row_len];
    for b in 0..d.batch {
        for y in 0..d.height {
            for xx in 0..d.width {
                let row = ((b * d.height + y) * d.width + xx) * row_len;
                for ky in 0..3 {
                    let sy = y + ky;
                    if sy == 0 || sy > d.height {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx + kx;
                        if sx == 0 || sx > d.width {
                            continue;
                        }
                        let src = ((b * d.height + sy - 1) * d.width + sx - 1) * cin;
                        let dst = row + (ky * 3 + kx) * cin;
                        cols[dst..dst + cin].copy_from_slice(&x[src..src + cin]);
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add of patch gradients back onto the input grid.
pub(crate) fn col2im3(dcols: &[f64], d: Dims, cin: usize) -> Vec<f64> {
    let row_len = 9 * cin;
    let mut dx = vec![0.0; d.pixels() * cin];
    for b in 0..d.batch {
        for y in 0..d.height {
            for xx in 0..d.width {
                let row = ((b * d.height + y) * d.width + xx) * row_len;
                for ky in 0..3 {
                    let sy = y + ky;
                    if sy == 0 || sy > d.height {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx + kx;
                        if sx == 0 || sx > d.width {
                            continue;
                        }
                        let dst = ((b * d.height + sy - 1) * d.width + sx - 1) * cin;
                        let src = row + (ky * 3 + kx) * cin;
                        for c in 0..cin {
                            dx[dst + c] += dcols[src + c];
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Dense layer over rows: `y = x W (+ bias)`, `x` is `rows x cin`, `W` is `cin x cout`.
pub(crate) fn linear_rows(x: &[f64], rows: usize, cin: usize, w: &[f64], bias: Option<&[f64]>, cout: usize) -> Vec<f64> {
    let mut y = vec![0.0; rows * cout];
    if let Some(bias) = bias {
        for r in 0..rows {
            y[r * cout..(r + 1) * cout].copy_from_slice(bias);
        }
    }
    gemm(rows, cin, cout, x, (cin, 1), w, (cout, 1), 1.0, &mut y);
    y
}

/// `dW = x^T dy` accumulated into `dw`.
pub(crate) fn linear_rows_weight_grad(x: &[f64], rows: usize, cin: usize, dy: &[f64], cout: usize, dw: &mut [f64]) {
    gemm(cin, rows, cout, x, (1, cin), dy, (cout, 1), 1.0, dw);
}

/// `dx = dy W^T`.
pub(crate) fn linear_rows_input_grad(dy: &[f64], rows: usize, cout: usize, w: &[f64], cin: usize) -> Vec<f64> {
    let mut dx = vec![0.0; rows * cin];
    gemm(rows, cout, cin, dy, (cout, 1), w, (1, cout), 0.0, &mut dx);
    dx
}

pub(crate) fn bias_grad(dy: &[f64], cout: usize, db: &mut [f64]) {
    for row in dy.chunks_exact(cout) {
        for (g, v) in db.iter_mut().zip(row) {
            *g += v;
        }
    }
}

pub(crate) fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReluBackward {
    /// Pass gradient where the unit was active.
    Standard,
    /// Additionally drop negative upstream gradient.
    Guided,
}

pub(crate) fn relu_backward(grad: &mut [f64], activation: &[f64], mode: ReluBackward) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        let pass = a > 0.0 && (mode == ReluBackward::Standard || *g > 0.0);
        if !pass {
            *g = 0.0;
        }
    }
}

/// 2x2 max pooling (odd trailing rows/columns dropped). Returns the pooled
/// values and, per output, the flat input index of the winner. Ties go to the
/// earliest element in row-major window order.
pub(crate) fn maxpool2(x: &[f64], d: Dims, c: usize) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (d.height / 2, d.width / 2);
    let mut out = Vec::with_capacity(d.batch * oh * ow * c);
    let mut arg = Vec::with_capacity(out.capacity());
    for b in 0..d.batch {
        for y in 0..oh {
            for xx in 0..ow {
                for ch in 0..c {
                    let mut best_idx = ((b * d.height + 2 * y) * d.width + 2 * xx) * c + ch;
                    let mut best = x[best_idx];
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = ((b * d.height + 2 * y + dy) * d.width + 2 * xx + dx) * c + ch;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                    out.push(best);
                    arg.push(best_idx as u32);
                }
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool2_backward(dy: &[f64], argmax: &[u32], input_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (g, &i) in dy.iter().zip(argmax) {
        dx[i as usize] += g;
    }
    dx
}

/// Mean over the spatial axes: `(B, H, W, C) -> (B, C)`.
pub(crate) fn global_avg_pool(x: &[f64], d: Dims, c: usize) -> Vec<f64> {
    let area = d.height * d.width;
    let mut out = vec![0.0; d.batch * c];
    for b in 0..d.batch {
        let acc = &mut out[b * c..(b + 1) * c];
        for px in x[b * area * c..(b + 1) * area * c].chunks_exact(c) {
            for (a, v) in acc.iter_mut().zip(px) {
                *a += v;
            }
        }
        for a in acc.iter_mut() {
            *a /= area as f64;
        }
    }
    out
}

pub(crate) fn global_avg_pool_backward(dy: &[f64], d: Dims, c: usize) -> Vec<f64> {
    let area = d.height * d.width;
    let mut dx = vec![0.0; d.pixels() * c];
    for b in 0..d.batch {
        let g = &dy[b * c..(b + 1) * c];
        for px in dx[b * area * c..(b + 1) * area * c].chunks_exact_mut(c) {
            for (o, v) in px.iter_mut().zip(g) {
                *o = v / area as f64;
            }
        }
    }
    dx
}
