use super::kernels::{self, AttnShape, ConvShape};
use super::{ParamId, ParamStore, Tensor};

/// Handle to a value recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(ParamId),
    Conv2d { x: Var, w: Var, b: Option<Var> },
    Norm { x: Var, inv: Vec<f32>, channels_last: Option<(usize, usize, usize)>, group: usize },
    ChannelAffine { x: Var, gamma: Var, beta: Var },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: f32 },
    MaxPool2 { x: Var, arg: Vec<u32> },
    Upsample2(Var),
    Cat { xs: Vec<Var>, dim: usize },
    Narrow { x: Var, dim: usize, start: usize },
    MeanDim0(Var),
    Attention { q: Var, k: Var, v: Var, heads: usize, weights: Vec<f32> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Tape of one forward pass over a parameter store.
pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    grad_enabled: bool,
}

/// Parameter gradients produced by [`Graph::backward`], indexed by
/// [`ParamId`]. Parameters that did not take part in the pass have none.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }
}

/// `(outer, size_along_dim, inner)` for a dimension split.
fn split_dims(shape: &[usize], dim: usize) -> (usize, usize, usize) {
    (
        shape[..dim].iter().product(),
        shape[dim],
        shape[dim + 1..].iter().product(),
    )
}

impl<'a> Graph<'a> {
    /// Graph that records what is needed for [`Graph::backward`].
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
            grad_enabled: true,
        }
    }

    /// Forward-only graph; no gradient caches are kept.
    pub fn inference(store: &'a ParamStore) -> Self {
        Graph {
            grad_enabled: false,
            ..Self::new(store)
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = self.grad_enabled && parents.iter().any(|&p| self.rg(p));
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf for a stored parameter. Repeated calls return the same node so
    /// that a weight used at several time steps gets one summed gradient.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: self.store.get(id).clone(),
            op: Op::Param(id),
            requires_grad: self.grad_enabled,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Stride-1 "same" convolution, `x: [N, Cin, H, W]`, `w: [Cout, Cin, k, k]`
    /// with odd `k`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let [n, cin, h, wd] = self.value(x).dims4();
        let [cout, wcin, k, k2] = self.value(w).dims4();
        assert_eq!(cin, wcin, "conv2d: input has {cin} channels, weight expects {wcin}");
        assert!(k == k2 && k % 2 == 1, "conv2d: kernel must be square and odd");
        let shape = ConvShape { n, cin, cout, h, w: wd, k };
        let out = kernels::conv2d_forward(
            &shape,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push(Tensor::from_vec(&[n, cout, h, wd], out), Op::Conv2d { x, w, b }, &parents)
    }

    /// Per-sample, per-channel normalisation over the spatial plane, without
    /// affine parameters.
    pub fn instance_norm(&mut self, x: Var, eps: f32) -> Var {
        let [_, _, h, w] = self.value(x).dims4();
        let (y, inv) = kernels::normalize_groups(self.value(x).data(), h * w, eps);
        let shape = self.shape(x).to_vec();
        self.push(
            Tensor::from_vec(&shape, y),
            Op::Norm { x, inv, channels_last: None, group: h * w },
            &[x],
        )
    }

    /// Normalisation across channels at every `(n, h, w)` position (layer
    /// norm over the feature vector), without affine parameters.
    pub fn channel_norm(&mut self, x: Var, eps: f32) -> Var {
        let [n, c, h, w] = self.value(x).dims4();
        let p = h * w;
        let xt = kernels::swap_last_two(self.value(x).data(), n, c, p);
        let (yt, inv) = kernels::normalize_groups(&xt, c, eps);
        let y = kernels::swap_last_two(&yt, n, p, c);
        self.push(
            Tensor::from_vec(&[n, c, h, w], y),
            Op::Norm { x, inv, channels_last: Some((n, c, p)), group: c },
            &[x],
        )
    }

    /// `y[:, c] = x[:, c] · gamma[c] + beta[c]`.
    pub fn channel_affine(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let [n, c, h, w] = self.value(x).dims4();
        let hw = h * w;
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut y = self.value(x).data().to_vec();
        for (i, plane) in y.chunks_exact_mut(hw).enumerate() {
            let ch = i % c;
            plane.iter_mut().for_each(|v| *v = *v * g[ch] + b[ch]);
        }
        self.push(
            Tensor::from_vec(&[n, c, h, w], y),
            Op::ChannelAffine { x, gamma, beta },
            &[x, gamma, beta],
        )
    }

    fn unary(&mut self, x: Var, f: impl Fn(f32) -> f32, op: Op) -> Var {
        let t = self.value(x);
        let y = Tensor::from_vec(t.shape(), t.data().iter().map(|&v| f(v)).collect());
        self.push(y, op, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f32::tanh, Op::Tanh(x))
    }

    /// `scale · x + shift`.
    pub fn affine(&mut self, x: Var, scale: f32, shift: f32) -> Var {
        self.unary(x, |v| scale * v + shift, Op::Affine { x, scale })
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f32, f32) -> f32, op: Op) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "elementwise op on mismatched shapes");
        let y: Vec<f32> = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let y = Tensor::from_vec(ta.shape(), y);
        self.push(y, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// 2×2 max pooling with stride 2; H and W must be even.
    pub fn max_pool2(&mut self, x: Var) -> Var {
        let [n, c, h, w] = self.value(x).dims4();
        assert!(h % 2 == 0 && w % 2 == 0, "max_pool2 needs even spatial dims, got {h}x{w}");
        let (y, arg) = kernels::max_pool2(self.value(x).data(), n * c, h, w);
        let arg = if self.grad_enabled { arg } else { Vec::new() };
        self.push(Tensor::from_vec(&[n, c, h / 2, w / 2], y), Op::MaxPool2 { x, arg }, &[x])
    }

    /// ×2 bilinear upsampling with aligned corners.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let [n, c, h, w] = self.value(x).dims4();
        let y = kernels::upsample2(self.value(x).data(), n * c, h, w);
        self.push(Tensor::from_vec(&[n, c, 2 * h, 2 * w], y), Op::Upsample2(x), &[x])
    }

    /// Concatenate along `dim`; all other extents must agree.
    pub fn cat(&mut self, xs: &[Var], dim: usize) -> Var {
        assert!(!xs.is_empty());
        let first = self.shape(xs[0]).to_vec();
        let mut out_shape = first.clone();
        out_shape[dim] = 0;
        for &x in xs {
            let s = self.shape(x);
            assert!(
                s.len() == first.len()
                    && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == dim || a == b),
                "cat: incompatible shapes {:?} and {:?}",
                first,
                s
            );
            out_shape[dim] += s[dim];
        }
        let (outer, _, inner) = split_dims(&out_shape, dim);
        let mut y = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for &x in xs {
                let len = self.shape(x)[dim] * inner;
                y.extend_from_slice(&self.value(x).data()[o * len..(o + 1) * len]);
            }
        }
        self.push(Tensor::from_vec(&out_shape, y), Op::Cat { xs: xs.to_vec(), dim }, xs)
    }

    /// Slice `len` entries of `dim` starting at `start`.
    pub fn narrow(&mut self, x: Var, dim: usize, start: usize, len: usize) -> Var {
        let shape = self.shape(x).to_vec();
        assert!(start + len <= shape[dim], "narrow out of range");
        let (outer, size, inner) = split_dims(&shape, dim);
        let data = self.value(x).data();
        let mut y = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * size + start) * inner;
            y.extend_from_slice(&data[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[dim] = len;
        self.push(Tensor::from_vec(&out_shape, y), Op::Narrow { x, dim, start }, &[x])
    }

    /// Mean over the leading axis, keeping it with extent 1.
    pub fn mean_dim0(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let t = shape[0];
        let inner = self.value(x).len() / t;
        let data = self.value(x).data();
        let mut y = vec![0.0f32; inner];
        for chunk in data.chunks_exact(inner) {
            for (a, b) in y.iter_mut().zip(chunk) {
                *a += b;
            }
        }
        y.iter_mut().for_each(|v| *v /= t as f32);
        let mut out_shape = shape;
        out_shape[0] = 1;
        self.push(Tensor::from_vec(&out_shape, y), Op::MeanDim0(x), &[x])
    }

    /// Multi-head scaled dot-product self-attention along the leading (time)
    /// axis of `[T, C, H, W]` tensors, independently at each pixel. `C` must
    /// be divisible by `heads`.
    pub fn temporal_attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Var {
        let [t, c, h, w] = self.value(q).dims4();
        assert_eq!(self.shape(k), self.shape(q));
        assert_eq!(self.shape(v), self.shape(q));
        assert!(heads >= 1 && c % heads == 0, "{c} channels not divisible into {heads} heads");
        let s = AttnShape { t, c, p: h * w, heads };
        let keep = self.grad_enabled && [q, k, v].iter().any(|&x| self.rg(x));
        let (y, weights) = kernels::temporal_attention(
            &s,
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            keep,
        );
        self.push(
            Tensor::from_vec(&[t, c, h, w], y),
            Op::Attention { q, k, v, heads, weights },
            &[q, k, v],
        )
    }

    /// Reverse pass from `output`, seeded with `seed = ∂L/∂output`.
    pub fn backward(self, output: Var, seed: Tensor) -> Gradients {
        assert_eq!(seed.shape(), self.shape(output), "seed shape must match output");
        let mut param_grads: Vec<Option<Tensor>> = vec![None; self.store.len()];
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed);
        let nodes = &self.nodes;
        let rg = |v: Var| nodes[v.0].requires_grad;
        let val = |v: Var| &nodes[v.0].value;

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=output.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => param_grads[id.0] = Some(gy),
                Op::Conv2d { x, w, b } => {
                    let [n, cin, h, wd] = val(*x).dims4();
                    let [cout, _, k, _] = val(*w).dims4();
                    let shape = ConvShape { n, cin, cout, h, w: wd, k };
                    let need = (rg(*x), rg(*w), b.is_some_and(rg));
                    let (dx, dw, db) =
                        kernels::conv2d_backward(&shape, val(*x).data(), val(*w).data(), gy.data(), need);
                    if let Some(dx) = dx {
                        acc(&mut grads, *x, Tensor::from_vec(val(*x).shape(), dx));
                    }
                    if let Some(dw) = dw {
                        acc(&mut grads, *w, Tensor::from_vec(val(*w).shape(), dw));
                    }
                    if let (Some(b), Some(db)) = (b, db) {
                        acc(&mut grads, *b, Tensor::from_vec(&[cout], db));
                    }
                }
                Op::Norm { x, inv, channels_last, group } => {
                    let dx = match *channels_last {
                        None => kernels::normalize_groups_backward(node.value.data(), inv, gy.data(), *group),
                        Some((n, c, p)) => {
                            let yt = kernels::swap_last_two(node.value.data(), n, c, p);
                            let gt = kernels::swap_last_two(gy.data(), n, c, p);
                            let dxt = kernels::normalize_groups_backward(&yt, inv, &gt, *group);
                            kernels::swap_last_two(&dxt, n, p, c)
                        }
                    };
                    acc(&mut grads, *x, Tensor::from_vec(node.value.shape(), dx));
                }
                Op::ChannelAffine { x, gamma, beta } => {
                    let [_, c, h, w] = val(*x).dims4();
                    let hw = h * w;
                    let g = val(*gamma).data();
                    let mut dx = gy.data().to_vec();
                    let mut dgamma = vec![0.0f32; c];
                    let mut dbeta = vec![0.0f32; c];
                    for (i, (dplane, xplane)) in
                        dx.chunks_exact_mut(hw).zip(val(*x).data().chunks_exact(hw)).enumerate()
                    {
                        let ch = i % c;
                        for (d, &xv) in dplane.iter_mut().zip(xplane) {
                            dgamma[ch] += *d * xv;
                            dbeta[ch] += *d;
                            *d *= g[ch];
                        }
                    }
                    if rg(*x) {
                        acc(&mut grads, *x, Tensor::from_vec(val(*x).shape(), dx));
                    }
                    if rg(*gamma) {
                        acc(&mut grads, *gamma, Tensor::from_vec(&[c], dgamma));
                    }
                    if rg(*beta) {
                        acc(&mut grads, *beta, Tensor::from_vec(&[c], dbeta));
                    }
                }
                Op::Relu(x) | Op::Sigmoid(x) | Op::Tanh(x) | Op::Affine { x, .. } => {
                    let y = node.value.data();
                    let g = gy.data();
                    let dx: Vec<f32> = match &node.op {
                        Op::Relu(_) => g.iter().zip(y).map(|(&g, &y)| if y > 0.0 { g } else { 0.0 }).collect(),
                        Op::Sigmoid(_) => g.iter().zip(y).map(|(&g, &y)| g * y * (1.0 - y)).collect(),
                        Op::Tanh(_) => g.iter().zip(y).map(|(&g, &y)| g * (1.0 - y * y)).collect(),
                        Op::Affine { scale, .. } => g.iter().map(|&g| g * scale).collect(),
                        _ => unreachable!(),
                    };
                    acc(&mut grads, *x, Tensor::from_vec(y_shape(node), dx));
                }
                Op::Add(a, b) => {
                    if rg(*a) {
                        acc(&mut grads, *a, gy.clone());
                    }
                    if rg(*b) {
                        acc(&mut grads, *b, gy);
                    }
                }
                Op::Sub(a, b) => {
                    if rg(*a) {
                        acc(&mut grads, *a, gy.clone());
                    }
                    if rg(*b) {
                        let neg = gy.data().iter().map(|v| -v).collect();
                        acc(&mut grads, *b, Tensor::from_vec(gy.shape(), neg));
                    }
                }
                Op::Mul(a, b) => {
                    if rg(*a) {
                        let d = gy.data().iter().zip(val(*b).data()).map(|(g, v)| g * v).collect();
                        acc(&mut grads, *a, Tensor::from_vec(gy.shape(), d));
                    }
                    if rg(*b) {
                        let d = gy.data().iter().zip(val(*a).data()).map(|(g, v)| g * v).collect();
                        acc(&mut grads, *b, Tensor::from_vec(gy.shape(), d));
                    }
                }
                Op::MaxPool2 { x, arg } => {
                    let [_, _, h, w] = val(*x).dims4();
                    let plane_out = (h / 2) * (w / 2);
                    let mut dx = vec![0.0f32; val(*x).len()];
                    for (j, (&g, &a)) in gy.data().iter().zip(arg).enumerate() {
                        dx[(j / plane_out) * h * w + a as usize] += g;
                    }
                    acc(&mut grads, *x, Tensor::from_vec(val(*x).shape(), dx));
                }
                Op::Upsample2(x) => {
                    let [n, c, h, w] = val(*x).dims4();
                    let dx = kernels::upsample2_backward(gy.data(), n * c, h, w);
                    acc(&mut grads, *x, Tensor::from_vec(val(*x).shape(), dx));
                }
                Op::Cat { xs, dim } => {
                    let (outer, _, inner) = split_dims(gy.shape(), *dim);
                    let mut offset = 0;
                    let g = gy.data();
                    let total = gy.shape()[*dim] * inner;
                    for &x in xs {
                        let len = val(x).shape()[*dim] * inner;
                        if rg(x) {
                            let mut d = Vec::with_capacity(outer * len);
                            for o in 0..outer {
                                d.extend_from_slice(&g[o * total + offset..o * total + offset + len]);
                            }
                            acc(&mut grads, x, Tensor::from_vec(val(x).shape(), d));
                        }
                        offset += len;
                    }
                }
                Op::Narrow { x, dim, start } => {
                    let (outer, size, inner) = split_dims(val(*x).shape(), *dim);
                    let len = gy.shape()[*dim];
                    let mut d = vec![0.0f32; val(*x).len()];
                    for o in 0..outer {
                        let base = (o * size + start) * inner;
                        d[base..base + len * inner]
                            .copy_from_slice(&gy.data()[o * len * inner..(o + 1) * len * inner]);
                    }
                    acc(&mut grads, *x, Tensor::from_vec(val(*x).shape(), d));
                }
                Op::MeanDim0(x) => {
                    let t = val(*x).shape()[0];
                    let scaled: Vec<f32> = gy.data().iter().map(|v| v / t as f32).collect();
                    let d: Vec<f32> = scaled.iter().copied().cycle().take(val(*x).len()).collect();
                    acc(&mut grads, *x, Tensor::from_vec(val(*x).shape(), d));
                }
                Op::Attention { q, k, v, heads, weights } => {
                    let [t, c, h, w] = val(*q).dims4();
                    let s = AttnShape { t, c, p: h * w, heads: *heads };
                    let (dq, dk, dv) = kernels::temporal_attention_backward(
                        &s,
                        val(*q).data(),
                        val(*k).data(),
                        val(*v).data(),
                        weights,
                        gy.data(),
                    );
                    let shape = val(*q).shape().to_vec();
                    for (var, d) in [(*q, dq), (*k, dk), (*v, dv)] {
                        if rg(var) {
                            acc(&mut grads, var, Tensor::from_vec(&shape, d));
                        }
                    }
                }
            }
        }
        Gradients { grads: param_grads }
    }
}

fn y_shape(node: &Node) -> &[usize] {
    node.value.shape()
}
