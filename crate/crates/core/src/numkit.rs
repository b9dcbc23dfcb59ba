//! Numeric kernels the rest of the engine is built from.
//!
//! Every function here is pure. Convolution and pooling are "valid"
//! (unpadded): an output dimension is `floor((in - k) / stride) + 1`.

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Grid, KernelBank, Matrix, Tensor3};

/// Output length of a valid sliding window along one axis, or `None` when
/// the window does not fit.
#[inline]
pub fn output_dim(input: usize, window: usize, stride: usize) -> Option<usize> {
    if window == 0 || stride == 0 || window > input {
        None
    } else {
        Some((input - window) / stride + 1)
    }
}

/// Dot product of two equal-length `f32` slices accumulated in `f64`.
#[inline]
pub fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    const LANES: usize = 8;
    let mut acc = [0.0f64; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] += x[l] as f64 * y[l] as f64;
        }
    }
    let mut tail = 0.0f64;
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x as f64 * y as f64;
    }
    acc.iter().sum::<f64>() + tail
}

const IM2COL_BLOCK_BYTES: usize = 1 << 22;

/// Valid 2-D convolution (cross-correlation form, as in every CNN library).
///
/// Lowered to an im2col matrix and a single-precision GEMM.
pub fn conv2d(input: &Tensor3, kernels: &KernelBank, stride: usize) -> Result<Tensor3> {
    let (h, w, c) = input.shape();
    if c != kernels.in_channels() {
        return Err(shape_err(format!(
            "conv2d: input has {c} channels, kernels expect {}",
            kernels.in_channels()
        )));
    }
    if stride == 0 {
        return Err(shape_err("conv2d: stride must be positive"));
    }
    let (kh, kw) = (kernels.kernel_height(), kernels.kernel_width());
    let (oh, ow) = match (output_dim(h, kh, stride), output_dim(w, kw, stride)) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(shape_err(format!(
                "conv2d: {kh}x{kw} kernel does not fit {h}x{w} input"
            )))
        }
    };
    let n = kernels.out_channels();
    let m = oh * ow;
    let k = kh * kw * c;

    // Each im2col row is `kh` runs of `kw * c` contiguous input values.
    // Rows are lowered in blocks so the packed buffer stays cache-sized.
    let run = kw * c;
    let block = (IM2COL_BLOCK_BYTES / (k * 4)).clamp(1, m);
    let mut cols = vec![0.0f32; block * k];
    let src = input.data();
    let mut out = Vec::with_capacity(m * n);
    for _ in 0..m {
        out.extend_from_slice(kernels.bias());
    }
    for first in (0..m).step_by(block) {
        let rows = block.min(m - first);
        for i in 0..rows {
            let (oy, ox) = ((first + i) / ow, (first + i) % ow);
            let row = &mut cols[i * k..(i + 1) * k];
            for ky in 0..kh {
                let start = ((oy * stride + ky) * w + ox * stride) * c;
                row[ky * run..(ky + 1) * run].copy_from_slice(&src[start..start + run]);
            }
        }
        // SAFETY: `cols` holds `rows` x k, the weights are k x n and the
        // output slice starting at row `first` is `rows` x n, all row-major
        // with the strides passed below.
        unsafe {
            matrixmultiply::sgemm(
                rows,
                k,
                n,
                1.0,
                cols.as_ptr(),
                k as isize,
                1,
                kernels.weights().as_ptr(),
                n as isize,
                1,
                1.0,
                out.as_mut_ptr().add(first * n),
                n as isize,
                1,
            );
        }
    }
    Tensor3::new(oh, ow, n, out)
}

/// Stride-1 kernels pre-transformed for F(2x2, 3x3) Winograd convolution.
///
/// A `kh x kw` kernel is cut into zero-padded 3x3 blocks; the blocks are
/// stacked along the reduction axis so each of the 16 transformed taps is
/// one `(blocks * cin) x cout` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WinogradKernels {
    kh: usize,
    kw: usize,
    cin: usize,
    cout: usize,
    blocks: Vec<(usize, usize)>,
    u: Vec<f32>,
    bias: Vec<f32>,
}

impl WinogradKernels {
    pub fn new(kernels: &KernelBank) -> Result<Self> {
        let (kh, kw) = (kernels.kernel_height(), kernels.kernel_width());
        let (cin, cout) = (kernels.in_channels(), kernels.out_channels());
        let blocks: Vec<(usize, usize)> = (0..kh.div_ceil(3))
            .flat_map(|by| (0..kw.div_ceil(3)).map(move |bx| (3 * by, 3 * bx)))
            .collect();
        let depth = blocks.len() * cin;
        let mut u = vec![0.0f32; 16 * depth * cout];
        for (bi, &(oy, ox)) in blocks.iter().enumerate() {
            for ci in 0..cin {
                for co in 0..cout {
                    let g = |ky: usize, kx: usize| {
                        let (y, x) = (oy + ky, ox + kx);
                        if y < kh && x < kw {
                            kernels.weight(y, x, ci, co) as f64
                        } else {
                            0.0
                        }
                    };
                    // G g G^T with G = [1 0 0; .5 .5 .5; .5 -.5 .5; 0 0 1].
                    let mut gg = [[0.0f64; 3]; 4];
                    for kx in 0..3 {
                        let (a, b, c) = (g(0, kx), g(1, kx), g(2, kx));
                        gg[0][kx] = a;
                        gg[1][kx] = 0.5 * (a + b + c);
                        gg[2][kx] = 0.5 * (a - b + c);
                        gg[3][kx] = c;
                    }
                    for (i, row) in gg.iter().enumerate() {
                        let (a, b, c) = (row[0], row[1], row[2]);
                        let t = [a, 0.5 * (a + b + c), 0.5 * (a - b + c), c];
                        for (j, v) in t.iter().enumerate() {
                            u[((i * 4 + j) * depth + bi * cin + ci) * cout + co] = *v as f32;
                        }
                    }
                }
            }
        }
        Ok(Self {
            kh,
            kw,
            cin,
            cout,
            blocks,
            u,
            bias: kernels.bias().to_vec(),
        })
    }

    pub fn in_channels(&self) -> usize {
        self.cin
    }

    pub fn out_channels(&self) -> usize {
        self.cout
    }
}

/// Same result as `conv2d(input, kernels, 1)`, computed on 2x2 output
/// blocks with 16 multiplies per 3x3 kernel block instead of 36.
pub fn conv2d_winograd(input: &Tensor3, kernels: &WinogradKernels) -> Result<Tensor3> {
    let (h, w, c) = input.shape();
    if c != kernels.cin {
        return Err(shape_err(format!(
            "conv2d: input has {c} channels, kernels expect {}",
            kernels.cin
        )));
    }
    let (kh, kw) = (kernels.kh, kernels.kw);
    let (oh, ow) = match (output_dim(h, kh, 1), output_dim(w, kw, 1)) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(shape_err(format!(
                "conv2d: {kh}x{kw} kernel does not fit {h}x{w} input"
            )))
        }
    };
    let (th, tw) = (oh.div_ceil(2), ow.div_ceil(2));
    let tiles = th * tw;
    let depth = kernels.blocks.len() * c;
    let n = kernels.cout;
    let src = input.data();

    // V[xi] = B^T d B for every tile and kernel block, laid out
    // 16 x tiles x (blocks * c). Reads past the input only feed zero
    // weights or discarded outputs.
    let mut v = vec![0.0f32; 16 * tiles * depth];
    let mut d = vec![0.0f32; 16 * c];
    let mut t = vec![0.0f32; 16 * c];
    for ty in 0..th {
        for tx in 0..tw {
            let tile = ty * tw + tx;
            for (bi, &(oy, ox)) in kernels.blocks.iter().enumerate() {
                for i in 0..4 {
                    for j in 0..4 {
                        let (y, x) = (2 * ty + oy + i, 2 * tx + ox + j);
                        let dst = &mut d[(i * 4 + j) * c..(i * 4 + j + 1) * c];
                        if y < h && x < w {
                            dst.copy_from_slice(&src[(y * w + x) * c..(y * w + x + 1) * c]);
                        } else {
                            dst.fill(0.0);
                        }
                    }
                }
                // Rows, then columns, with B^T = [1 0 -1 0; 0 1 1 0; 0 -1 1 0; 0 1 0 -1].
                for j in 0..4 {
                    let at = |i: usize| (i * 4 + j) * c;
                    for ch in 0..c {
                        let (d0, d1, d2, d3) = (d[at(0) + ch], d[at(1) + ch], d[at(2) + ch], d[at(3) + ch]);
                        t[at(0) + ch] = d0 - d2;
                        t[at(1) + ch] = d1 + d2;
                        t[at(2) + ch] = d2 - d1;
                        t[at(3) + ch] = d1 - d3;
                    }
                }
                for i in 0..4 {
                    let at = |j: usize| (i * 4 + j) * c;
                    let out = |j: usize| ((i * 4 + j) * tiles + tile) * depth + bi * c;
                    for ch in 0..c {
                        let (t0, t1, t2, t3) = (t[at(0) + ch], t[at(1) + ch], t[at(2) + ch], t[at(3) + ch]);
                        v[out(0) + ch] = t0 - t2;
                        v[out(1) + ch] = t1 + t2;
                        v[out(2) + ch] = t2 - t1;
                        v[out(3) + ch] = t1 - t3;
                    }
                }
            }
        }
    }

    let mut m = vec![0.0f32; 16 * tiles * n];
    for xi in 0..16 {
        // SAFETY: V[xi] is tiles x depth, U[xi] is depth x n and M[xi] is
        // tiles x n, all row-major and in bounds of their buffers.
        unsafe {
            matrixmultiply::sgemm(
                tiles,
                depth,
                n,
                1.0,
                v.as_ptr().add(xi * tiles * depth),
                depth as isize,
                1,
                kernels.u.as_ptr().add(xi * depth * n),
                n as isize,
                1,
                0.0,
                m.as_mut_ptr().add(xi * tiles * n),
                n as isize,
                1,
            );
        }
    }

    // Y = A^T M A with A^T = [1 1 1 0; 0 1 -1 -1].
    let mut out = vec![0.0f32; oh * ow * n];
    let mut r = vec![0.0f32; 8 * n];
    for ty in 0..th {
        for tx in 0..tw {
            let tile = ty * tw + tx;
            let mm = |i: usize, j: usize| ((i * 4 + j) * tiles + tile) * n;
            for j in 0..4 {
                for co in 0..n {
                    let (m0, m1, m2, m3) = (m[mm(0, j) + co], m[mm(1, j) + co], m[mm(2, j) + co], m[mm(3, j) + co]);
                    r[j * n + co] = m0 + m1 + m2;
                    r[(4 + j) * n + co] = m1 - m2 - m3;
                }
            }
            for a in 0..2 {
                let y = 2 * ty + a;
                if y >= oh {
                    continue;
                }
                let row = &r[a * 4 * n..(a + 1) * 4 * n];
                for b in 0..2 {
                    let x = 2 * tx + b;
                    if x >= ow {
                        continue;
                    }
                    let dst = &mut out[(y * ow + x) * n..(y * ow + x + 1) * n];
                    for co in 0..n {
                        let (q0, q1, q2, q3) = (row[co], row[n + co], row[2 * n + co], row[3 * n + co]);
                        let val = if b == 0 { q0 + q1 + q2 } else { q1 - q2 - q3 };
                        dst[co] = val + kernels.bias[co];
                    }
                }
            }
        }
    }
    Tensor3::new(oh, ow, n, out)
}

pub fn relu(input: &Tensor3) -> Tensor3 {
    let mut out = input.clone();
    relu_in_place(&mut out);
    out
}

pub fn relu_in_place(t: &mut Tensor3) {
    for v in t.data_mut() {
        *v = v.max(0.0);
    }
}

/// Valid per-channel max pooling over `size x size` windows.
pub fn max_pool(input: &Tensor3, size: usize, stride: usize) -> Result<Tensor3> {
    let (h, w, c) = input.shape();
    let (oh, ow) = match (output_dim(h, size, stride), output_dim(w, size, stride)) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(shape_err(format!(
                "max_pool: window {size} (stride {stride}) does not fit {h}x{w} input"
            )))
        }
    };
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut acc = vec![0.0f32; c];
    for oy in 0..oh {
        for ox in 0..ow {
            acc.fill(f32::NEG_INFINITY);
            for y in oy * stride..oy * stride + size {
                for x in ox * stride..ox * stride + size {
                    for (a, &v) in acc.iter_mut().zip(input.pixel(y, x)) {
                        *a = a.max(v);
                    }
                }
            }
            out.extend_from_slice(&acc);
        }
    }
    Tensor3::new(oh, ow, c, out)
}

/// Spatial mean of every channel.
pub fn global_avg_pool(input: &Tensor3) -> Vec<f64> {
    input.channel_means()
}

/// Logistic sigmoid, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Largest `f64` strictly below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// `sigmoid(w2 * relu(w1 * descriptor))` with no bias terms.
///
/// Outputs are kept inside the open interval `(0, 1)` even where the exact
/// sigmoid rounds to an endpoint.
pub fn dense_sigmoid_mlp(descriptor: &[f64], w1: &Matrix, w2: &Matrix) -> Result<Vec<f64>> {
    if w1.cols() != descriptor.len() {
        return Err(shape_err(format!(
            "mlp: first layer expects {} inputs, descriptor has {}",
            w1.cols(),
            descriptor.len()
        )));
    }
    if w2.cols() != w1.rows() {
        return Err(shape_err(format!(
            "mlp: second layer expects {} inputs, hidden layer has {}",
            w2.cols(),
            w1.rows()
        )));
    }
    let hidden: Vec<f64> = (0..w1.rows())
        .map(|r| {
            let s: f64 = w1
                .row(r)
                .iter()
                .zip(descriptor)
                .map(|(&w, &d)| w as f64 * d)
                .sum();
            s.max(0.0)
        })
        .collect();
    let out: Vec<f64> = (0..w2.rows())
        .map(|r| {
            let s: f64 = w2
                .row(r)
                .iter()
                .zip(&hidden)
                .map(|(&w, &h)| w as f64 * h)
                .sum();
            sigmoid(s).clamp(f64::MIN_POSITIVE, BELOW_ONE)
        })
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dense_sigmoid_mlp"));
    }
    Ok(out)
}

/// Catmull-Rom (a = -0.5) weights for the four taps around a sample at
/// fractional offset `t` in `[0, 1]` from tap 1.
#[inline]
pub fn catmull_rom_weights(t: f64) -> [f64; 4] {
    [
        ((-0.5 * t + 1.0) * t - 0.5) * t,
        (1.5 * t - 2.5) * t * t + 1.0,
        ((-1.5 * t + 2.0) * t + 0.5) * t,
        (0.5 * t - 0.5) * t * t,
    ]
}

/// Interpolation taps along one axis for a corner-aligned resize.
struct AxisTaps {
    // Per output position: first tap index (may be -1) and the four weights.
    taps: Vec<(isize, [f64; 4])>,
}

impl AxisTaps {
    fn new(input: usize, output: usize) -> Self {
        let scale = if output > 1 {
            (input - 1) as f64 / (output - 1) as f64
        } else {
            0.0
        };
        let taps = (0..output)
            .map(|i| {
                let x = i as f64 * scale;
                let base = (x.floor() as usize).min(input - 2);
                let t = x - base as f64;
                (base as isize - 1, catmull_rom_weights(t))
            })
            .collect();
        Self { taps }
    }
}

/// Reads a 1-D sequence with linearly extrapolated ghost samples one step
/// beyond each end, so linear data stays linear at the borders.
#[inline]
fn extended(line: impl Fn(usize) -> f64, len: usize, i: isize) -> f64 {
    if i < 0 {
        2.0 * line(0) - line(1)
    } else if i as usize >= len {
        2.0 * line(len - 1) - line(len - 2)
    } else {
        line(i as usize)
    }
}

/// Corner-aligned Catmull-Rom resize of a 2-D grid.
///
/// The first and last input samples land exactly on the first and last
/// output samples. Taps that fall outside the grid are linear
/// extrapolations of the border pair.
pub fn bicubic_resize(map: &Grid, out_rows: usize, out_cols: usize) -> Result<Grid> {
    let (rows, cols) = map.shape();
    if rows < 2 || cols < 2 {
        return Err(shape_err(format!("bicubic_resize: input {rows}x{cols} is smaller than 2x2")));
    }
    if out_rows == 0 || out_cols == 0 {
        return Err(shape_err(format!(
            "bicubic_resize: degenerate output size {out_rows}x{out_cols}"
        )));
    }
    if (rows, cols) == (out_rows, out_cols) {
        return Ok(map.clone());
    }

    let col_taps = AxisTaps::new(cols, out_cols);
    let mut horiz = vec![0.0f64; rows * out_cols];
    for r in 0..rows {
        let line = |c: usize| map.get(r, c);
        for (j, (first, w)) in col_taps.taps.iter().enumerate() {
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                acc += wk * extended(line, cols, first + k as isize);
            }
            horiz[r * out_cols + j] = acc;
        }
    }

    let row_taps = AxisTaps::new(rows, out_rows);
    let mut out = vec![0.0f64; out_rows * out_cols];
    for j in 0..out_cols {
        let line = |r: usize| horiz[r * out_cols + j];
        for (i, (first, w)) in row_taps.taps.iter().enumerate() {
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                acc += wk * extended(line, rows, first + k as isize);
            }
            out[i * out_cols + j] = acc;
        }
    }
    Grid::new(out_rows, out_cols, out)
}

/// Position of the maximum.
///
/// Ties go to the cell closest to the grid center, then to the first in
/// row-major order.
pub fn argmax2d(map: &Grid) -> (usize, usize) {
    let (rows, cols) = map.shape();
    let cy = (rows as f64 - 1.0) / 2.0;
    let cx = (cols as f64 - 1.0) / 2.0;
    let dist = |r: usize, c: usize| {
        let dy = r as f64 - cy;
        let dx = c as f64 - cx;
        dy * dy + dx * dx
    };
    let mut best = (0, 0);
    let mut best_val = map.get(0, 0);
    let mut best_dist = dist(0, 0);
    for r in 0..rows {
        for c in 0..cols {
            let v = map.get(r, c);
            if v > best_val || (v == best_val && dist(r, c) < best_dist) {
                best = (r, c);
                best_val = v;
                best_dist = dist(r, c);
            }
        }
    }
    best
}
