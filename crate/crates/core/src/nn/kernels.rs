//! Slice-level forward/backward kernels used by the graph ops.

/// `C = A·B + beta·C` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(a.len() >= (m - 1) * rsa + (k.max(1) - 1) * csa + 1 || k == 0);
    debug_assert!(c.len() >= (m - 1) * rsc + (n - 1) * csc + 1);
    // SAFETY: the extents checked above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
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
            rsc as isize,
            csc as isize,
        );
    }
}

/// Valid destination column range for a horizontal shift `dx`.
fn shifted_range(w: usize, dx: isize) -> (usize, usize) {
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx).clamp(0, w as isize) as usize;
    (x0.min(x1), x1)
}

/// Unfold rows `y0..y1` of `src` (`[cin, h, w]`) into `cols`
/// (`[cin·k·k, (y1-y0)·w]`) for a stride-1 convolution with zero padding
/// `pad`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn im2col_rows(src: &[f32], cin: usize, h: usize, w: usize, k: usize, pad: usize, (y0, y1): (usize, usize), cols: &mut [f32]) {
    let hw = h * w;
    let bw = (y1 - y0) * w;
    for c in 0..cin {
        let plane = &src[c * hw..(c + 1) * hw];
        for ky in 0..k {
            let dy = ky as isize - pad as isize;
            for kx in 0..k {
                let dx = kx as isize - pad as isize;
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * bw..(row + 1) * bw];
                let (x0, x1) = shifted_range(w, dx);
                for y in y0..y1 {
                    let drow = &mut dst[(y - y0) * w..(y - y0 + 1) * w];
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        drow.fill(0.0);
                        continue;
                    }
                    let srow = &plane[sy as usize * w..(sy as usize + 1) * w];
                    drow[..x0].fill(0.0);
                    drow[x1..].fill(0.0);
                    let s0 = (x0 as isize + dx) as usize;
                    drow[x0..x1].copy_from_slice(&srow[s0..s0 + (x1 - x0)]);
                }
            }
        }
    }
}

#[cfg(test)]
pub(crate) fn im2col(src: &[f32], cin: usize, h: usize, w: usize, k: usize, pad: usize, cols: &mut [f32]) {
    im2col_rows(src, cin, h, w, k, pad, (0, h), cols)
}

/// Adjoint of [`im2col_rows`]: accumulate `cols` back into `dst`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn col2im_add_rows(cols: &[f32], cin: usize, h: usize, w: usize, k: usize, pad: usize, (y0, y1): (usize, usize), dst: &mut [f32]) {
    let hw = h * w;
    let bw = (y1 - y0) * w;
    for c in 0..cin {
        let plane = &mut dst[c * hw..(c + 1) * hw];
        for ky in 0..k {
            let dy = ky as isize - pad as isize;
            for kx in 0..k {
                let dx = kx as isize - pad as isize;
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * bw..(row + 1) * bw];
                let (x0, x1) = shifted_range(w, dx);
                if x0 >= x1 {
                    continue;
                }
                for y in y0..y1 {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s0 = (x0 as isize + dx) as usize;
                    let prow = &mut plane[sy as usize * w + s0..sy as usize * w + s0 + (x1 - x0)];
                    let r = (y - y0) * w;
                    for (p, v) in prow.iter_mut().zip(&src[r + x0..r + x1]) {
                        *p += v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
pub(crate) fn col2im_add(cols: &[f32], cin: usize, h: usize, w: usize, k: usize, pad: usize, dst: &mut [f32]) {
    col2im_add_rows(cols, cin, h, w, k, pad, (0, h), dst)
}

/// Unfolded band size (floats) targeted per GEMM, so that the band stays
/// cache resident.
const BAND_FLOATS: usize = 1 << 15;

fn row_bands(h: usize, w: usize, kk: usize) -> impl Iterator<Item = (usize, usize)> {
    let rows = (BAND_FLOATS / (kk * w).max(1)).clamp(1, h);
    (0..h).step_by(rows).map(move |y0| (y0, (y0 + rows).min(h)))
}

pub(crate) struct ConvShape {
    pub n: usize,
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl ConvShape {
    fn pad(&self) -> usize {
        self.k / 2
    }
    fn kk(&self) -> usize {
        self.cin * self.k * self.k
    }
}

pub(crate) fn conv2d_forward(s: &ConvShape, x: &[f32], weight: &[f32], bias: Option<&[f32]>) -> Vec<f32> {
    let hw = s.h * s.w;
    let kk = s.kk();
    let mut out = vec![0.0f32; s.n * s.cout * hw];
    let mut cols = Vec::new();
    for b in 0..s.n {
        let xb = &x[b * s.cin * hw..(b + 1) * s.cin * hw];
        let ob = &mut out[b * s.cout * hw..(b + 1) * s.cout * hw];
        if s.k > 1 {
            for (y0, y1) in row_bands(s.h, s.w, kk) {
                let bw = (y1 - y0) * s.w;
                cols.resize(kk * bw, 0.0);
                im2col_rows(xb, s.cin, s.h, s.w, s.k, s.pad(), (y0, y1), &mut cols);
                gemm(s.cout, kk, bw, weight, (kk, 1), &cols, (bw, 1), 0.0, &mut ob[y0 * s.w..], (hw, 1));
            }
        } else {
            gemm(s.cout, kk, hw, weight, (kk, 1), xb, (hw, 1), 0.0, ob, (hw, 1));
        }
        if let Some(bias) = bias {
            for (co, row) in ob.chunks_exact_mut(hw).enumerate() {
                let bv = bias[co];
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    out
}

/// Returns `(dx, dweight, dbias)`; each is computed only when requested.
pub(crate) fn conv2d_backward(
    s: &ConvShape,
    x: &[f32],
    weight: &[f32],
    gy: &[f32],
    need: (bool, bool, bool),
) -> (Option<Vec<f32>>, Option<Vec<f32>>, Option<Vec<f32>>) {
    let hw = s.h * s.w;
    let kk = s.kk();
    let mut dx = need.0.then(|| vec![0.0f32; s.n * s.cin * hw]);
    let mut dw = need.1.then(|| vec![0.0f32; s.cout * kk]);
    let mut db = need.2.then(|| vec![0.0f32; s.cout]);
    let (mut cols, mut dcols) = (Vec::new(), Vec::new());
    for b in 0..s.n {
        let gyb = &gy[b * s.cout * hw..(b + 1) * s.cout * hw];
        let xb = &x[b * s.cin * hw..(b + 1) * s.cin * hw];
        if s.k == 1 {
            if let Some(dw) = dw.as_mut() {
                // dW += gy · xᵀ
                gemm(s.cout, hw, kk, gyb, (hw, 1), xb, (1, hw), 1.0, dw, (kk, 1));
            }
            if let Some(dx) = dx.as_mut() {
                let dxb = &mut dx[b * s.cin * hw..(b + 1) * s.cin * hw];
                gemm(kk, s.cout, hw, weight, (1, kk), gyb, (hw, 1), 1.0, dxb, (hw, 1));
            }
        } else {
            for (y0, y1) in row_bands(s.h, s.w, kk) {
                let bw = (y1 - y0) * s.w;
                let gband = &gyb[y0 * s.w..];
                if let Some(dw) = dw.as_mut() {
                    cols.resize(kk * bw, 0.0);
                    im2col_rows(xb, s.cin, s.h, s.w, s.k, s.pad(), (y0, y1), &mut cols);
                    gemm(s.cout, bw, kk, gband, (hw, 1), &cols, (1, bw), 1.0, dw, (kk, 1));
                }
                if let Some(dx) = dx.as_mut() {
                    let dxb = &mut dx[b * s.cin * hw..(b + 1) * s.cin * hw];
                    dcols.resize(kk * bw, 0.0);
                    gemm(kk, s.cout, bw, weight, (1, kk), gband, (hw, 1), 0.0, &mut dcols, (bw, 1));
                    col2im_add_rows(&dcols, s.cin, s.h, s.w, s.k, s.pad(), (y0, y1), dxb);
                }
            }
        }
        if let Some(db) = db.as_mut() {
            for (co, row) in gyb.chunks_exact(hw).enumerate() {
                db[co] += row.iter().sum::<f32>();
            }
        }
    }
    (dx, dw, db)
}

/// Normalise each contiguous group of `group` values; returns the
/// normalised output and per-group inverse standard deviations.
pub(crate) fn normalize_groups(x: &[f32], group: usize, eps: f32) -> (Vec<f32>, Vec<f32>) {
    let mut y = vec![0.0f32; x.len()];
    let mut inv = Vec::with_capacity(x.len() / group);
    for (xs, ys) in x.chunks_exact(group).zip(y.chunks_exact_mut(group)) {
        let mean = xs.iter().map(|&v| v as f64).sum::<f64>() / group as f64;
        let var = xs.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / group as f64;
        let is = 1.0 / (var + eps as f64).sqrt();
        for (o, &v) in ys.iter_mut().zip(xs) {
            *o = ((v as f64 - mean) * is) as f32;
        }
        inv.push(is as f32);
    }
    (y, inv)
}

pub(crate) fn normalize_groups_backward(y: &[f32], inv: &[f32], gy: &[f32], group: usize) -> Vec<f32> {
    let mut dx = vec![0.0f32; y.len()];
    for (((ys, gs), ds), &is) in y
        .chunks_exact(group)
        .zip(gy.chunks_exact(group))
        .zip(dx.chunks_exact_mut(group))
        .zip(inv)
    {
        let mean_g = gs.iter().map(|&v| v as f64).sum::<f64>() / group as f64;
        let mean_gy = gs.iter().zip(ys).map(|(&g, &y)| g as f64 * y as f64).sum::<f64>() / group as f64;
        for ((d, &g), &yv) in ds.iter_mut().zip(gs).zip(ys) {
            *d = (is as f64 * (g as f64 - mean_g - yv as f64 * mean_gy)) as f32;
        }
    }
    dx
}

/// Move axis 1 of `[n, c, p]` last: `[n, p, c]` (and back with swapped
/// arguments).
pub(crate) fn swap_last_two(x: &[f32], n: usize, a: usize, b: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; x.len()];
    for i in 0..n {
        let src = &x[i * a * b..(i + 1) * a * b];
        let dst = &mut out[i * a * b..(i + 1) * a * b];
        for r in 0..a {
            for c in 0..b {
                dst[c * a + r] = src[r * b + c];
            }
        }
    }
    out
}

/// 2×2 max pooling, stride 2, over `planes` planes of `h × w`. Returns the
/// pooled values and the flat argmax offset inside each input plane.
pub(crate) fn max_pool2(x: &[f32], planes: usize, h: usize, w: usize) -> (Vec<f32>, Vec<u32>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(planes * ho * wo);
    let mut arg = Vec::with_capacity(planes * ho * wo);
    for p in 0..planes {
        let plane = &x[p * h * w..(p + 1) * h * w];
        for i in 0..ho {
            for j in 0..wo {
                let mut best = (2 * i * w + 2 * j, f32::NEG_INFINITY);
                for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let idx = (2 * i + di) * w + 2 * j + dj;
                    if plane[idx] > best.1 {
                        best = (idx, plane[idx]);
                    }
                }
                out.push(best.1);
                arg.push(best.0 as u32);
            }
        }
    }
    (out, arg)
}

/// Interpolation taps for ×2 bilinear upsampling with aligned corners.
pub(crate) fn upsample_taps(n: usize) -> Vec<(usize, usize, f32)> {
    let m = 2 * n;
    (0..m)
        .map(|i| {
            let src = if m > 1 { i as f64 * (n - 1) as f64 / (m - 1) as f64 } else { 0.0 };
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, (src - i0 as f64) as f32)
        })
        .collect()
}

pub(crate) fn upsample2(x: &[f32], planes: usize, h: usize, w: usize) -> Vec<f32> {
    let (ho, wo) = (2 * h, 2 * w);
    let rows = upsample_taps(h);
    let cols = upsample_taps(w);
    let mut out = vec![0.0f32; planes * ho * wo];
    let mut tmp = vec![0.0f32; h * wo];
    for p in 0..planes {
        let plane = &x[p * h * w..(p + 1) * h * w];
        for r in 0..h {
            let src = &plane[r * w..(r + 1) * w];
            for (j, &(c0, c1, f)) in cols.iter().enumerate() {
                tmp[r * wo + j] = src[c0] + f * (src[c1] - src[c0]);
            }
        }
        let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
        for (i, &(r0, r1, f)) in rows.iter().enumerate() {
            for j in 0..wo {
                let a = tmp[r0 * wo + j];
                let b = tmp[r1 * wo + j];
                dst[i * wo + j] = a + f * (b - a);
            }
        }
    }
    out
}

pub(crate) fn upsample2_backward(gy: &[f32], planes: usize, h: usize, w: usize) -> Vec<f32> {
    let (ho, wo) = (2 * h, 2 * w);
    let rows = upsample_taps(h);
    let cols = upsample_taps(w);
    let mut dx = vec![0.0f32; planes * h * w];
    let mut tmp = vec![0.0f32; h * wo];
    for p in 0..planes {
        let g = &gy[p * ho * wo..(p + 1) * ho * wo];
        tmp.fill(0.0);
        for (i, &(r0, r1, f)) in rows.iter().enumerate() {
            for j in 0..wo {
                let v = g[i * wo + j];
                tmp[r0 * wo + j] += (1.0 - f) * v;
                tmp[r1 * wo + j] += f * v;
            }
        }
        let d = &mut dx[p * h * w..(p + 1) * h * w];
        for r in 0..h {
            for (j, &(c0, c1, f)) in cols.iter().enumerate() {
                let v = tmp[r * wo + j];
                d[r * w + c0] += (1.0 - f) * v;
                d[r * w + c1] += f * v;
            }
        }
    }
    dx
}

/// Geometry of a time-axis attention call on `[t, c, p]` tensors.
pub(crate) struct AttnShape {
    pub t: usize,
    pub c: usize,
    pub p: usize,
    pub heads: usize,
}

impl AttnShape {
    fn dh(&self) -> usize {
        self.c / self.heads
    }
    fn at(&self, time: usize, ch: usize, pos: usize) -> usize {
        (time * self.c + ch) * self.p + pos
    }
}

/// Scaled dot-product attention along time, independently at every
/// position and head. Returns the output and, when `keep` is set, the
/// attention weights laid out as `[p, heads, t, t]`.
pub(crate) fn temporal_attention(s: &AttnShape, q: &[f32], k: &[f32], v: &[f32], keep: bool) -> (Vec<f32>, Vec<f32>) {
    let (t, dh) = (s.t, s.dh());
    let scale = 1.0 / (dh as f32).sqrt();
    let mut out = vec![0.0f32; q.len()];
    let mut weights = if keep { vec![0.0f32; s.p * s.heads * t * t] } else { Vec::new() };
    let mut a = vec![0.0f32; t * t];
    for pos in 0..s.p {
        for head in 0..s.heads {
            let c0 = head * dh;
            for i in 0..t {
                let row = &mut a[i * t..(i + 1) * t];
                for (j, r) in row.iter_mut().enumerate() {
                    let mut acc = 0.0f32;
                    for d in 0..dh {
                        acc += q[s.at(i, c0 + d, pos)] * k[s.at(j, c0 + d, pos)];
                    }
                    *r = acc * scale;
                }
                let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let mut sum = 0.0f32;
                for r in row.iter_mut() {
                    *r = (*r - max).exp();
                    sum += *r;
                }
                row.iter_mut().for_each(|r| *r /= sum);
                for d in 0..dh {
                    let mut acc = 0.0f32;
                    for (j, &aij) in row.iter().enumerate() {
                        acc += aij * v[s.at(j, c0 + d, pos)];
                    }
                    out[s.at(i, c0 + d, pos)] = acc;
                }
            }
            if keep {
                let off = (pos * s.heads + head) * t * t;
                weights[off..off + t * t].copy_from_slice(&a);
            }
        }
    }
    (out, weights)
}

pub(crate) fn temporal_attention_backward(
    s: &AttnShape,
    q: &[f32],
    k: &[f32],
    v: &[f32],
    weights: &[f32],
    gy: &[f32],
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let (t, dh) = (s.t, s.dh());
    let scale = 1.0 / (dh as f32).sqrt();
    let mut dq = vec![0.0f32; q.len()];
    let mut dk = vec![0.0f32; k.len()];
    let mut dv = vec![0.0f32; v.len()];
    let mut ds = vec![0.0f32; t * t];
    for pos in 0..s.p {
        for head in 0..s.heads {
            let c0 = head * dh;
            let off = (pos * s.heads + head) * t * t;
            let a = &weights[off..off + t * t];
            for i in 0..t {
                for j in 0..t {
                    let mut da = 0.0f32;
                    for d in 0..dh {
                        let g = gy[s.at(i, c0 + d, pos)];
                        da += g * v[s.at(j, c0 + d, pos)];
                        dv[s.at(j, c0 + d, pos)] += a[i * t + j] * g;
                    }
                    ds[i * t + j] = da;
                }
                let dot: f32 = (0..t).map(|j| a[i * t + j] * ds[i * t + j]).sum();
                for j in 0..t {
                    ds[i * t + j] = a[i * t + j] * (ds[i * t + j] - dot) * scale;
                }
            }
            for i in 0..t {
                for j in 0..t {
                    let g = ds[i * t + j];
                    for d in 0..dh {
                        dq[s.at(i, c0 + d, pos)] += g * k[s.at(j, c0 + d, pos)];
                        dk[s.at(j, c0 + d, pos)] += g * q[s.at(i, c0 + d, pos)];
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(s: &ConvShape, x: &[f32], w: &[f32]) -> Vec<f32> {
        let p = s.k as isize / 2;
        let mut out = vec![0.0; s.n * s.cout * s.h * s.w];
        for b in 0..s.n {
            for co in 0..s.cout {
                for y in 0..s.h {
                    for xx in 0..s.w {
                        let mut acc = 0.0;
                        for ci in 0..s.cin {
                            for ky in 0..s.k {
                                for kx in 0..s.k {
                                    let sy = y as isize + ky as isize - p;
                                    let sx = xx as isize + kx as isize - p;
                                    if sy < 0 || sx < 0 || sy >= s.h as isize || sx >= s.w as isize {
                                        continue;
                                    }
                                    acc += w[((co * s.cin + ci) * s.k + ky) * s.k + kx]
                                        * x[((b * s.cin + ci) * s.h + sy as usize) * s.w + sx as usize];
                                }
                            }
                        }
                        out[((b * s.cout + co) * s.h + y) * s.w + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loops() {
        for k in [1, 3, 5] {
            let s = ConvShape { n: 2, cin: 3, cout: 4, h: 5, w: 7, k };
            let x: Vec<f32> = (0..s.n * s.cin * s.h * s.w).map(|i| ((i * 37 % 11) as f32) - 5.0).collect();
            let w: Vec<f32> = (0..s.cout * s.cin * k * k).map(|i| ((i * 13 % 7) as f32) * 0.1 - 0.3).collect();
            let fast = conv2d_forward(&s, &x, &w, None);
            let slow = naive_conv(&s, &x, &w);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-4, "k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn banded_conv_matches_direct_loops_and_adjoints() {
        // wide enough that the unfolded image spans several row bands
        let s = ConvShape { n: 2, cin: 4, cout: 3, h: 9, w: 1100, k: 3 };
        assert!(row_bands(s.h, s.w, s.kk()).count() > 1);
        let x: Vec<f32> = (0..s.n * s.cin * s.h * s.w).map(|i| ((i * 37 % 11) as f32) - 5.0).collect();
        let w: Vec<f32> = (0..s.cout * s.cin * 9).map(|i| ((i * 13 % 7) as f32) * 0.1 - 0.3).collect();
        let y = conv2d_forward(&s, &x, &w, None);
        let slow = naive_conv(&s, &x, &w);
        assert!(y.iter().zip(&slow).all(|(a, b)| (a - b).abs() < 1e-3));
        let g: Vec<f32> = (0..y.len()).map(|i| ((i * 7 % 5) as f32) - 2.0).collect();
        let (dx, dw, _) = conv2d_backward(&s, &x, &w, &g, (true, true, false));
        let dot = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(&p, &q)| p as f64 * q as f64).sum::<f64>();
        let yg = dot(&y, &g);
        // f32 accumulation error scales with the magnitude of the terms
        let scale = y.iter().zip(&g).map(|(a, b)| (a * b).abs() as f64).sum::<f64>();
        let xd = dot(&dx.unwrap(), &x);
        assert!((xd - yg).abs() < 1e-6 * scale, "{xd} vs {yg}");
        assert!((dot(&dw.unwrap(), &w) - yg).abs() < 1e-6 * scale);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let (cin, h, w, k) = (2, 4, 5, 3);
        let x: Vec<f32> = (0..cin * h * w).map(|i| (i % 7) as f32 - 2.0).collect();
        let c: Vec<f32> = (0..cin * k * k * h * w).map(|i| (i % 5) as f32 - 1.5).collect();
        let mut cols = vec![0.0; c.len()];
        im2col(&x, cin, h, w, k, 1, &mut cols);
        let lhs: f32 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im_add(&c, cin, h, w, k, 1, &mut back);
        let rhs: f32 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-3);
    }

    #[test]
    fn upsample_keeps_corners_and_is_adjoint() {
        let x: Vec<f32> = (0..12).map(|i| i as f32).collect();
        let y = upsample2(&x, 1, 3, 4);
        assert_eq!(y.len(), 48);
        assert_eq!(y[0], 0.0);
        assert_eq!(y[7], 3.0);
        assert_eq!(y[47], 11.0);
        let g: Vec<f32> = (0..48).map(|i| ((i * 7) % 5) as f32).collect();
        let lhs: f32 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let dx = upsample2_backward(&g, 1, 3, 4);
        let rhs: f32 = dx.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-3);
    }

    #[test]
    fn max_pool_picks_block_maxima() {
        let x = vec![1.0, 2.0, 5.0, 0.0, 3.0, 4.0, 1.0, 6.0];
        let (y, arg) = max_pool2(&x, 1, 2, 4);
        assert_eq!(y, vec![4.0, 6.0]);
        assert_eq!(arg, vec![5, 7]);
    }
}
