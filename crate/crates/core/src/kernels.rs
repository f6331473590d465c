//! Raw compute kernels behind the autodiff ops. Everything is NCHW.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{gemm, numel, MatRef, Real};

/// Stride and symmetric zero padding of a square-kernel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub pad: usize,
}

pub fn conv_out_dim(input: usize, kernel: usize, geom: ConvGeom) -> Option<usize> {
    let padded = input + 2 * geom.pad;
    if padded < kernel || geom.stride == 0 {
        return None;
    }
    Some((padded - kernel) / geom.stride + 1)
}

struct ConvDims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

impl ConvDims {
    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.ho * self.wo
    }
}

/// Output positions `[lo, hi)` whose input position `o * stride + k - pad`
/// lies inside `[0, w)`.
fn valid_range(w: usize, wo: usize, kj: usize, geom: ConvGeom) -> (usize, usize) {
    let s = geom.stride;
    let lo = if kj >= geom.pad { 0 } else { (geom.pad - kj).div_ceil(s) };
    let limit = w + geom.pad;
    let hi = if limit > kj { ((limit - kj - 1) / s + 1).min(wo) } else { 0 };
    (lo.min(hi), hi)
}

/// Unfolds `x` into a `[C*k*k, N*Ho*Wo]` column matrix.
fn im2col<T: Real>(x: &[T], d: &ConvDims, geom: ConvGeom) -> Vec<T> {
    let p = d.positions();
    let cols_w = d.n * p;
    let mut cols = vec![T::zero(); d.patch() * cols_w];
    for c in 0..d.c {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (c * d.kh + ki) * d.kw + kj;
                let dst_row = &mut cols[row * cols_w..(row + 1) * cols_w];
                let (rlo, rhi) = valid_range(d.h, d.ho, ki, geom);
                let (lo, hi) = valid_range(d.w, d.wo, kj, geom);
                for n in 0..d.n {
                    let src = &x[(n * d.c + c) * d.h * d.w..(n * d.c + c + 1) * d.h * d.w];
                    let dst = &mut dst_row[n * p..(n + 1) * p];
                    for oh in rlo..rhi {
                        let ih = oh * geom.stride + ki - geom.pad;
                        let src_row = &src[ih * d.w..(ih + 1) * d.w];
                        let dst_o = &mut dst[oh * d.wo..(oh + 1) * d.wo];
                        if geom.stride == 1 {
                            let base = lo + kj - geom.pad;
                            dst_o[lo..hi].copy_from_slice(&src_row[base..base + hi - lo]);
                        } else {
                            for ow in lo..hi {
                                dst_o[ow] = src_row[ow * geom.stride + kj - geom.pad];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Folds a `[C*k*k, N*Ho*Wo]` column matrix back into an `[N,C,H,W]` buffer,
/// accumulating overlapping contributions.
fn col2im<T: Real>(cols: &[T], d: &ConvDims, geom: ConvGeom) -> Vec<T> {
    let p = d.positions();
    let cols_w = d.n * p;
    let mut x = vec![T::zero(); d.n * d.c * d.h * d.w];
    for c in 0..d.c {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (c * d.kh + ki) * d.kw + kj;
                let src_row = &cols[row * cols_w..(row + 1) * cols_w];
                let (rlo, rhi) = valid_range(d.h, d.ho, ki, geom);
                let (lo, hi) = valid_range(d.w, d.wo, kj, geom);
                for n in 0..d.n {
                    let dst = &mut x[(n * d.c + c) * d.h * d.w..(n * d.c + c + 1) * d.h * d.w];
                    let src = &src_row[n * p..(n + 1) * p];
                    for oh in rlo..rhi {
                        let ih = oh * geom.stride + ki - geom.pad;
                        let dst_r = &mut dst[ih * d.w..(ih + 1) * d.w];
                        let src_o = &src[oh * d.wo..(oh + 1) * d.wo];
                        if geom.stride == 1 {
                            let base = lo + kj - geom.pad;
                            for (o, v) in dst_r[base..base + hi - lo].iter_mut().zip(&src_o[lo..hi]) {
                                *o = *o + *v;
                            }
                        } else {
                            for ow in lo..hi {
                                let iw = ow * geom.stride + kj - geom.pad;
                                dst_r[iw] = dst_r[iw] + src_o[ow];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

fn is_pointwise(d: &ConvDims, geom: ConvGeom) -> bool {
    d.kh == 1 && d.kw == 1 && geom.stride == 1 && geom.pad == 0
}

/// `[N,C,P]` → `[C, N*P]`.
fn to_channel_major<T: Real>(x: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for ni in 0..n {
        for ci in 0..c {
            out[ci * n * p + ni * p..ci * n * p + (ni + 1) * p]
                .copy_from_slice(&x[(ni * c + ci) * p..(ni * c + ci + 1) * p]);
        }
    }
    out
}

/// `[C, N*P]` → `[N,C,P]`.
fn from_channel_major<T: Real>(x: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for ci in 0..c {
        for ni in 0..n {
            out[(ni * c + ci) * p..(ni * c + ci + 1) * p]
                .copy_from_slice(&x[ci * n * p + ni * p..ci * n * p + (ni + 1) * p]);
        }
    }
    out
}

/// Cross-correlation `y = conv(x, w)`; `x: [N,C,H,W]`, `w: [O,C,kh,kw]`.
pub fn conv2d<T: Real>(
    x: &[T],
    x_shape: &[usize],
    w: &[T],
    w_shape: &[usize],
    geom: ConvGeom,
) -> (Vec<T>, [usize; 4]) {
    let (n, c, h, wd) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (o, kh, kw) = (w_shape[0], w_shape[2], w_shape[3]);
    let ho = conv_out_dim(h, kh, geom).expect("conv output height");
    let wo = conv_out_dim(wd, kw, geom).expect("conv output width");
    let d = ConvDims { n, c, h, w: wd, kh, kw, ho, wo };
    let p = d.positions();
    let mut tmp = vec![T::zero(); o * n * p];
    let wmat = MatRef::new(w, o, d.patch());
    if is_pointwise(&d, geom) {
        let xc = to_channel_major(x, n, c, p);
        gemm(wmat, MatRef::new(&xc, c, n * p), &mut tmp, false);
    } else {
        let cols = im2col(x, &d, geom);
        gemm(wmat, MatRef::new(&cols, d.patch(), n * p), &mut tmp, false);
    }
    (from_channel_major(&tmp, n, o, p), [n, o, ho, wo])
}

/// Adjoint of [`conv2d`] in its input: maps `g: [N,O,Ho,Wo]` to `[N,C,H,W]`.
pub fn conv2d_transpose<T: Real>(
    g: &[T],
    g_shape: &[usize],
    w: &[T],
    w_shape: &[usize],
    geom: ConvGeom,
    out_hw: (usize, usize),
) -> Vec<T> {
    let (n, o, ho, wo) = (g_shape[0], g_shape[1], g_shape[2], g_shape[3]);
    let (c, kh, kw) = (w_shape[1], w_shape[2], w_shape[3]);
    let d = ConvDims { n, c, h: out_hw.0, w: out_hw.1, kh, kw, ho, wo };
    let p = d.positions();
    let gc = to_channel_major(g, n, o, p);
    let mut cols = vec![T::zero(); d.patch() * n * p];
    gemm(MatRef::new(w, o, d.patch()).t(), MatRef::new(&gc, o, n * p), &mut cols, false);
    if is_pointwise(&d, geom) {
        from_channel_major(&cols, n, c, p)
    } else {
        col2im(&cols, &d, geom)
    }
}

/// Adjoint of [`conv2d`] in its weight: `sum_n g_n @ cols_n^T`, shaped `[O,C,kh,kw]`.
pub fn conv2d_weight_grad<T: Real>(
    x: &[T],
    x_shape: &[usize],
    g: &[T],
    g_shape: &[usize],
    kernel: (usize, usize),
    geom: ConvGeom,
) -> Vec<T> {
    let (n, c, h, wd) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (o, ho, wo) = (g_shape[1], g_shape[2], g_shape[3]);
    let d = ConvDims { n, c, h, w: wd, kh: kernel.0, kw: kernel.1, ho, wo };
    let p = d.positions();
    let gc = to_channel_major(g, n, o, p);
    let mut out = vec![T::zero(); o * d.patch()];
    if is_pointwise(&d, geom) {
        let xc = to_channel_major(x, n, c, p);
        gemm(MatRef::new(&gc, o, n * p), MatRef::new(&xc, c, n * p).t(), &mut out, false);
    } else {
        let cols = im2col(x, &d, geom);
        gemm(MatRef::new(&gc, o, n * p), MatRef::new(&cols, d.patch(), n * p).t(), &mut out, false);
    }
    out
}

/// Merges adjacent axes that are both broadcast or both kept, returning
/// `(dst extent, source stride or 0)` per merged axis.
fn collapse(src: &[usize], dst: &[usize]) -> Vec<(usize, usize)> {
    let mut axes: Vec<(usize, bool)> = Vec::new();
    for (&s, &d) in src.iter().zip(dst) {
        if d == 1 {
            continue;
        }
        let kept = s != 1;
        match axes.last_mut() {
            Some((n, k)) if *k == kept => *n *= d,
            _ => axes.push((d, kept)),
        }
    }
    let mut out = vec![(0, 0); axes.len()];
    let mut stride = 1;
    for (i, (n, kept)) in axes.iter().enumerate().rev() {
        out[i] = (*n, if *kept { stride } else { 0 });
        if *kept {
            stride *= n;
        }
    }
    out
}

fn broadcast_rec<T: Real>(x: &[T], off: usize, axes: &[(usize, usize)], out: &mut Vec<T>) {
    match axes {
        [] => out.push(x[off]),
        [(n, 0)] => out.extend(core::iter::repeat_n(x[off], *n)),
        [(n, _)] => out.extend_from_slice(&x[off..off + n]),
        [(n, s), rest @ ..] => {
            for i in 0..*n {
                broadcast_rec(x, off + i * s, rest, out);
            }
        }
    }
}

fn sum_rec<T: Real>(x: &[T], pos: &mut usize, off: usize, axes: &[(usize, usize)], out: &mut [T]) {
    match axes {
        [] => {
            out[off] = out[off] + x[*pos];
            *pos += 1;
        }
        [(n, 0)] => {
            let s: T = x[*pos..*pos + n].iter().copied().sum();
            out[off] = out[off] + s;
            *pos += n;
        }
        [(n, _)] => {
            for (o, v) in out[off..off + n].iter_mut().zip(&x[*pos..*pos + n]) {
                *o = *o + *v;
            }
            *pos += n;
        }
        [(n, s), rest @ ..] => {
            for i in 0..*n {
                sum_rec(x, pos, off + i * s, rest, out);
            }
        }
    }
}

/// Same-rank broadcast: every axis of `src` is either 1 or equal to `dst`'s.
pub fn broadcast_to<T: Real>(x: &[T], src: &[usize], dst: &[usize]) -> Vec<T> {
    if src == dst {
        return x.to_vec();
    }
    if x.len() == 1 {
        return vec![x[0]; numel(dst)];
    }
    let mut out = Vec::with_capacity(numel(dst));
    broadcast_rec(x, 0, &collapse(src, dst), &mut out);
    out
}

/// Sums `x` (shaped `src`) down to `dst`, the reverse of [`broadcast_to`].
pub fn sum_to<T: Real>(x: &[T], src: &[usize], dst: &[usize]) -> Vec<T> {
    if src == dst {
        return x.to_vec();
    }
    if numel(dst) == 1 {
        return vec![x.iter().copied().sum()];
    }
    let mut out = vec![T::zero(); numel(dst)];
    sum_rec(x, &mut 0, 0, &collapse(dst, src), &mut out);
    out
}

/// `(outer, axis_len, inner)` view of `shape` around `axis`.
pub fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn slice_axis<T: Real>(x: &[T], shape: &[usize], axis: usize, start: usize, len: usize) -> Vec<T> {
    let (outer, full, inner) = axis_split(shape, axis);
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * full + start) * inner;
        out.extend_from_slice(&x[base..base + len * inner]);
    }
    out
}

/// Embeds `x` at `start` inside a zero tensor whose `axis` has length `total`.
pub fn pad_axis<T: Real>(x: &[T], shape: &[usize], axis: usize, start: usize, total: usize) -> Vec<T> {
    let (outer, len, inner) = axis_split(shape, axis);
    let mut out = vec![T::zero(); outer * total * inner];
    for o in 0..outer {
        let dst = (o * total + start) * inner;
        out[dst..dst + len * inner].copy_from_slice(&x[o * len * inner..(o + 1) * len * inner]);
    }
    out
}

pub fn concat_axis<T: Real>(parts: &[(&[T], &[usize])], axis: usize) -> Vec<T> {
    let (outer, _, inner) = axis_split(parts[0].1, axis);
    let total: usize = parts.iter().map(|(_, s)| s[axis]).sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (data, shape) in parts {
            let len = shape[axis] * inner;
            out.extend_from_slice(&data[o * len..(o + 1) * len]);
        }
    }
    out
}

pub fn permute_rows<T: Real>(x: &[T], rows: usize, perm: &[usize]) -> Vec<T> {
    let row = x.len() / rows;
    let mut out = Vec::with_capacity(x.len());
    for &p in perm {
        out.extend_from_slice(&x[p * row..(p + 1) * row]);
    }
    out
}

pub fn transpose2d<T: Real>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

pub fn matmul<T: Real>(a: &[T], m: usize, k: usize, b: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    gemm(MatRef::new(a, m, k), MatRef::new(b, k, n), &mut out, false);
    out
}
