//! Batched `N × C × H × W` tensors and the convolution-network kernels.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::dtcwt::{StackTag, SubbandStack};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Floating-point type the networks run in: `f32` for training and
/// inference, `f64` for gradient checks.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + 'static {
    /// `C = alpha·A·B + beta·C` on strided row/column layouts.
    ///
    /// # Safety
    /// The pointers and strides must describe valid `m×k`, `k×n` and `m×n`
    /// matrices; `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite constant")
    }
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// `C (m×n) = op(A)·op(B) + beta·C`, all row-major. A transposed operand is
/// stored with its dimensions swapped (`k×m` for A, `n×k` for B).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    trans_a: bool,
    b: &[T],
    trans_b: bool,
    beta: T,
    c: &mut [T],
) {
    assert!(
        a.len() >= m * k && b.len() >= k * n && c.len() >= m * n,
        "gemm operand too short"
    );
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the lengths were checked above and `c` is a distinct &mut.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// Dense `N × C × H × W` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Tensor<T> {
        Tensor {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Tensor<T>> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::dim(format!(
                "tensor data has {} values, shape {shape:?} needs {}",
                data.len(),
                shape.iter().product::<usize>()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    /// Values per sample.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [T] {
        let len = self.sample_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Batch of samples, each `C × H × W` values long.
    pub fn from_samples(samples: &[&[T]], c: usize, h: usize, w: usize) -> Result<Tensor<T>> {
        let len = c * h * w;
        if samples.iter().any(|s| s.len() != len) {
            return Err(Error::dim("sample length does not match the tensor shape"));
        }
        let mut data = Vec::with_capacity(len * samples.len());
        for s in samples {
            data.extend_from_slice(s);
        }
        Ok(Tensor {
            shape: [samples.len(), c, h, w],
            data,
        })
    }

    /// One sample per stack, channels in subband order.
    pub fn from_stacks(stacks: &[&SubbandStack]) -> Result<Tensor<T>> {
        let Some(first) = stacks.first() else {
            return Err(Error::dim("no stacks to convert"));
        };
        let (h, w) = first.shape();
        let mut data = Vec::with_capacity(stacks.len() * 6 * h * w);
        for s in stacks {
            if s.shape() != (h, w) {
                return Err(Error::dim("stacks in a batch differ in shape"));
            }
            data.extend(s.values().map(T::of));
        }
        Tensor::from_vec([stacks.len(), 6, h, w], data)
    }

    /// Inverse of [`Tensor::from_stacks`]; needs exactly six channels.
    pub fn to_stacks(&self, tag: StackTag) -> Result<Vec<SubbandStack>> {
        let [n, c, h, w] = self.shape;
        if c != 6 {
            return Err(Error::dim(format!("a subband stack needs 6 channels, tensor has {c}")));
        }
        (0..n)
            .map(|i| {
                let s = self.sample(i);
                let planes = std::array::from_fn(|ch| {
                    let vals = s[ch * h * w..(ch + 1) * h * w]
                        .iter()
                        .map(|v| v.to_f64().unwrap_or(f64::NAN))
                        .collect();
                    Grid::from_vec(h, w, vals).expect("plane length matches")
                });
                SubbandStack::new(tag, planes)
            })
            .collect()
    }
}

/// Geometry of a square-kernel "same" convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.k * self.k
    }

    fn col_rows(&self) -> usize {
        self.cin * self.k * self.k
    }
}

/// Unfold one `C × H × W` sample into `(C·k·k) × (H·W)` patch columns with
/// zero padding.
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let hw = h * w;
    let pad = (k / 2) as isize;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[(ci * k * k + ky * k + kx) * hw..][..hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    shifted_copy(src, out, dx);
                }
            }
        }
    }
}

/// `out[x] = src[x + dx]`, zero outside.
fn shifted_copy<T: Scalar>(src: &[T], out: &mut [T], dx: isize) {
    let w = src.len();
    let shift = dx.unsigned_abs();
    if shift >= w {
        out.fill(T::zero());
    } else if dx >= 0 {
        out[..w - shift].copy_from_slice(&src[shift..]);
        out[w - shift..].fill(T::zero());
    } else {
        out[..shift].fill(T::zero());
        out[shift..].copy_from_slice(&src[..w - shift]);
    }
}

/// Adjoint of [`im2col`]: accumulate patch columns back into a sample.
fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize, k: usize, x: &mut [T]) {
    let hw = h * w;
    let pad = (k / 2) as isize;
    for ci in 0..c {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[(ci * k * k + ky * k + kx) * hw..][..hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..][..w];
                    let src = &row[y * w..(y + 1) * w];
                    for (xo, &v) in src.iter().enumerate() {
                        let sx = xo as isize + dx;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] = dst[sx as usize] + v;
                        }
                    }
                }
            }
        }
    }
}

/// "Same" convolution (cross-correlation) of every sample.
pub(crate) fn conv_forward<T: Scalar>(x: &Tensor<T>, weight: &[T], bias: &[T], s: ConvShape) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    debug_assert_eq!(c, s.cin);
    let hw = h * w;
    let mut y = Tensor::zeros([n, s.cout, h, w]);
    let mut col = if s.k == 1 {
        Vec::new()
    } else {
        vec![T::zero(); s.col_rows() * hw]
    };
    for i in 0..n {
        let xs = x.sample(i);
        let patches: &[T] = if s.k == 1 {
            xs
        } else {
            im2col(xs, c, h, w, s.k, &mut col);
            &col
        };
        let ys = y.sample_mut(i);
        for (co, plane) in ys.chunks_mut(hw).enumerate() {
            plane.fill(bias[co]);
        }
        gemm(s.cout, s.col_rows(), hw, weight, false, patches, false, T::one(), ys);
    }
    y
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// asked for.
pub(crate) fn conv_backward<T: Scalar>(
    x: &Tensor<T>,
    dy: &Tensor<T>,
    weight: &[T],
    s: ConvShape,
    dweight: &mut [T],
    dbias: &mut [T],
    need_dx: bool,
) -> Option<Tensor<T>> {
    let [n, c, h, w] = x.shape();
    let hw = h * w;
    let rows = s.col_rows();
    let mut col = if s.k == 1 {
        Vec::new()
    } else {
        vec![T::zero(); rows * hw]
    };
    let mut dcol = vec![T::zero(); rows * hw];
    let mut dx = need_dx.then(|| Tensor::zeros([n, c, h, w]));
    for i in 0..n {
        let xs = x.sample(i);
        let dys = dy.sample(i);
        let patches: &[T] = if s.k == 1 {
            xs
        } else {
            im2col(xs, c, h, w, s.k, &mut col);
            &col
        };
        // dW += dy · colᵀ
        gemm(s.cout, hw, rows, dys, false, patches, true, T::one(), dweight);
        for (co, plane) in dys.chunks(hw).enumerate() {
            dbias[co] = dbias[co] + plane.iter().fold(T::zero(), |a, &b| a + b);
        }
        if let Some(dx) = dx.as_mut() {
            let dxs = dx.sample_mut(i);
            if s.k == 1 {
                gemm(rows, s.cout, hw, weight, true, dys, false, T::zero(), dxs);
            } else {
                gemm(rows, s.cout, hw, weight, true, dys, false, T::zero(), &mut dcol);
                col2im(&dcol, c, h, w, s.k, dxs);
            }
        }
    }
    dx
}

/// 2×2 max pooling; also returns the winning flat index per output value.
pub(crate) fn maxpool_forward<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    let [n, c, h, w] = x.shape();
    let (ho, wo) = (h / 2, w / 2);
    let mut y = Tensor::zeros([n, c, ho, wo]);
    let mut arg = Vec::with_capacity(n * c * ho * wo);
    let src = x.as_slice();
    let dst = y.as_mut_slice();
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for r in 0..ho {
            for q in 0..wo {
                let mut best = base + 2 * r * w + 2 * q;
                for idx in [best + 1, best + w, best + w + 1] {
                    // strict comparison: ties go to the first position
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                dst[o] = src[best];
                arg.push(best as u32);
                o += 1;
            }
        }
    }
    (y, arg)
}

pub(crate) fn maxpool_backward<T: Scalar>(dy: &Tensor<T>, arg: &[u32], input_shape: [usize; 4]) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.as_mut_slice();
    for (&g, &i) in dy.as_slice().iter().zip(arg) {
        d[i as usize] = d[i as usize] + g;
    }
    dx
}

/// Nearest-neighbour 2× upsampling.
pub(crate) fn upsample_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let mut y = Tensor::zeros([n, c, 2 * h, 2 * w]);
    let src = x.as_slice();
    let dst = y.as_mut_slice();
    for plane in 0..n * c {
        for r in 0..2 * h {
            for q in 0..2 * w {
                dst[plane * 4 * h * w + r * 2 * w + q] = src[plane * h * w + (r / 2) * w + q / 2];
            }
        }
    }
    y
}

pub(crate) fn upsample_backward<T: Scalar>(dy: &Tensor<T>) -> Tensor<T> {
    let [n, c, h2, w2] = dy.shape();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Tensor::zeros([n, c, h, w]);
    let src = dy.as_slice();
    let dst = dx.as_mut_slice();
    for plane in 0..n * c {
        for r in 0..h2 {
            for q in 0..w2 {
                let i = plane * h * w + (r / 2) * w + q / 2;
                dst[i] = dst[i] + src[plane * h2 * w2 + r * w2 + q];
            }
        }
    }
    dx
}

/// Channel concatenation `[a, b]`.
pub(crate) fn concat<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let [n, ca, h, w] = a.shape();
    let cb = b.channels();
    let mut y = Tensor::zeros([n, ca + cb, h, w]);
    for i in 0..n {
        let out = y.sample_mut(i);
        out[..ca * h * w].copy_from_slice(a.sample(i));
        out[ca * h * w..].copy_from_slice(b.sample(i));
    }
    y
}

/// Split a concatenation gradient into its `[a, b]` parts.
pub(crate) fn split<T: Scalar>(d: &Tensor<T>, ca: usize) -> (Tensor<T>, Tensor<T>) {
    let [n, c, h, w] = d.shape();
    let mut da = Tensor::zeros([n, ca, h, w]);
    let mut db = Tensor::zeros([n, c - ca, h, w]);
    for i in 0..n {
        let s = d.sample(i);
        da.sample_mut(i).copy_from_slice(&s[..ca * h * w]);
        db.sample_mut(i).copy_from_slice(&s[ca * h * w..]);
    }
    (da, db)
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub(crate) const BN_EPS: f64 = 1e-5;

/// Saved values of a training-mode batch normalisation.
#[derive(Debug, Clone)]
pub(crate) struct BnCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Unbiased batch variance, for the running estimate.
    pub var_unbiased: Vec<T>,
}

/// Per-channel normalisation over batch and space with batch statistics.
pub(crate) fn bn_forward_train<T: Scalar>(x: &Tensor<T>, gamma: &[T], beta: &[T]) -> (Tensor<T>, BnCache<T>) {
    let [n, c, h, w] = x.shape();
    let hw = h * w;
    let count = n * hw;
    let m = T::of(count as f64);
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for i in 0..n {
        for (ch, plane) in x.sample(i).chunks(hw).enumerate() {
            mean[ch] = mean[ch] + plane.iter().fold(T::zero(), |a, &b| a + b);
        }
    }
    mean.iter_mut().for_each(|v| *v = *v / m);
    for i in 0..n {
        for (ch, plane) in x.sample(i).chunks(hw).enumerate() {
            var[ch] = var[ch]
                + plane
                    .iter()
                    .fold(T::zero(), |a, &b| a + (b - mean[ch]) * (b - mean[ch]));
        }
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v / m + T::of(BN_EPS)).sqrt()).collect();
    let var_unbiased = var
        .iter()
        .map(|&v| {
            if count > 1 {
                v / T::of((count - 1) as f64)
            } else {
                T::zero()
            }
        })
        .collect();
    let mut xhat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    for i in 0..n {
        let xs = x.sample(i);
        let hs = xhat.sample_mut(i);
        for ch in 0..c {
            for j in ch * hw..(ch + 1) * hw {
                hs[j] = (xs[j] - mean[ch]) * inv_std[ch];
            }
        }
        let ys = y.sample_mut(i);
        for ch in 0..c {
            for j in ch * hw..(ch + 1) * hw {
                ys[j] = gamma[ch] * xhat.sample(i)[j] + beta[ch];
            }
        }
    }
    let cache = BnCache {
        xhat,
        inv_std,
        mean,
        var_unbiased,
    };
    (y, cache)
}

/// Inference-mode normalisation with stored statistics.
pub(crate) fn bn_forward_infer<T: Scalar>(x: &Tensor<T>, gamma: &[T], beta: &[T], mean: &[T], var: &[T]) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let hw = h * w;
    let mut y = x.clone();
    for i in 0..n {
        let ys = y.sample_mut(i);
        for ch in 0..c {
            let scale = gamma[ch] / (var[ch] + T::of(BN_EPS)).sqrt();
            let shift = beta[ch] - mean[ch] * scale;
            for v in &mut ys[ch * hw..(ch + 1) * hw] {
                *v = *v * scale + shift;
            }
        }
    }
    y
}

/// Backward pass of the training-mode normalisation.
pub(crate) fn bn_backward<T: Scalar>(
    cache: &BnCache<T>,
    dy: &Tensor<T>,
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Tensor<T> {
    let [n, c, h, w] = dy.shape();
    let hw = h * w;
    let m = T::of((n * hw) as f64);
    let mut sum_dy = vec![T::zero(); c];
    let mut sum_dy_xhat = vec![T::zero(); c];
    for i in 0..n {
        let ds = dy.sample(i);
        let hs = cache.xhat.sample(i);
        for ch in 0..c {
            for j in ch * hw..(ch + 1) * hw {
                sum_dy[ch] = sum_dy[ch] + ds[j];
                sum_dy_xhat[ch] = sum_dy_xhat[ch] + ds[j] * hs[j];
            }
        }
    }
    for ch in 0..c {
        dgamma[ch] = dgamma[ch] + sum_dy_xhat[ch];
        dbeta[ch] = dbeta[ch] + sum_dy[ch];
    }
    let mut dx = Tensor::zeros(dy.shape());
    for i in 0..n {
        let ds = dy.sample(i);
        let hs = cache.xhat.sample(i);
        let out = dx.sample_mut(i);
        for ch in 0..c {
            let k = gamma[ch] * cache.inv_std[ch] / m;
            for j in ch * hw..(ch + 1) * hw {
                out[j] = k * (m * ds[j] - sum_dy[ch] - hs[j] * sum_dy_xhat[ch]);
            }
        }
    }
    dx
}
