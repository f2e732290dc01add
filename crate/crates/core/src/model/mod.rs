//! The CAVE network and the plain U-Net baseline.
//!
//! Every frame of a series goes through the same encoder; at each of the
//! `depth + 1` scales a temporal module collapses the time axis, and a 2D
//! decoder with skip connections turns the collapsed pyramid into two
//! independent sigmoid channels (artery, vein). With
//! [`TemporalModule::None`] the same layout is a plain U-Net on one image.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DsaSeries;
use crate::error::{CaveError, Result};
use crate::nn::{Graph, ParamId, ParamStore, Tensor, Var};

pub const NORM_EPS: f32 = 1e-5;
/// Initial bias of the ConvGRU update gate. Negative so the state starts out
/// as a slow running summary: early (arterial) frames survive to the last
/// step instead of decaying by half per frame.
pub const GRU_UPDATE_BIAS: f32 = -2.0;
/// Initial ConvLSTM forget-gate bias (the usual +1).
pub const LSTM_FORGET_BIAS: f32 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TemporalModule {
    None,
    ConvGru,
    ConvLstm,
    TemporalTransformer,
}

impl TemporalModule {
    pub const TEMPORAL: [TemporalModule; 3] = [Self::ConvGru, Self::ConvLstm, Self::TemporalTransformer];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "NONE",
            Self::ConvGru => "CONV_GRU",
            Self::ConvLstm => "CONV_LSTM",
            Self::TemporalTransformer => "TEMPORAL_TRANSFORMER",
        }
    }
}

impl std::str::FromStr for TemporalModule {
    type Err = CaveError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "NONE" | "UNET" => Ok(Self::None),
            "CONV_GRU" | "GRU" => Ok(Self::ConvGru),
            "CONV_LSTM" | "LSTM" => Ok(Self::ConvLstm),
            "TEMPORAL_TRANSFORMER" | "TRANSFORMER" => Ok(Self::TemporalTransformer),
            other => Err(CaveError::Config(format!("unknown temporal module {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaveConfig {
    pub base_channels: usize,
    /// Number of down/up layer pairs.
    pub depth: usize,
    pub temporal_module: TemporalModule,
    pub temporal_kernel: (usize, usize),
    pub attn_heads: usize,
    pub attn_layers: usize,
    pub out_channels: usize,
    /// Aggregate the full-resolution features too. When off, the scale-0
    /// skip carries the last frame's features.
    pub aggregate_scale0: bool,
    /// Sinusoidal time encoding in the transformer.
    pub positional_encoding: bool,
}

impl Default for CaveConfig {
    fn default() -> Self {
        CaveConfig {
            base_channels: 64,
            depth: 4,
            temporal_module: TemporalModule::ConvGru,
            temporal_kernel: (3, 3),
            attn_heads: 4,
            attn_layers: 1,
            out_channels: 2,
            aggregate_scale0: true,
            positional_encoding: true,
        }
    }
}

impl CaveConfig {
    pub fn unet(base_channels: usize, depth: usize) -> Self {
        CaveConfig {
            base_channels,
            depth,
            temporal_module: TemporalModule::None,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 || self.base_channels < 1 || self.out_channels < 1 {
            return Err(CaveError::Config("depth, base_channels and out_channels must be >= 1".into()));
        }
        let (kh, kw) = self.temporal_kernel;
        if kh != kw || kh % 2 == 0 {
            return Err(CaveError::Config(format!(
                "temporal_kernel must be square and odd, got {kh}x{kw}"
            )));
        }
        if self.temporal_module == TemporalModule::TemporalTransformer {
            if self.attn_heads < 1 || self.attn_layers < 1 {
                return Err(CaveError::Config("attn_heads and attn_layers must be >= 1".into()));
            }
            if self.base_channels % self.attn_heads != 0 {
                return Err(CaveError::Config(format!(
                    "base_channels {} not divisible by attn_heads {}",
                    self.base_channels, self.attn_heads
                )));
            }
        }
        Ok(())
    }

    /// Channels at scale `s`.
    pub fn channels(&self, s: usize) -> usize {
        self.base_channels << s
    }

    pub fn is_temporal(&self) -> bool {
        self.temporal_module != TemporalModule::None
    }

    fn aggregates(&self, s: usize) -> bool {
        self.is_temporal() && (s > 0 || self.aggregate_scale0)
    }
}

#[derive(Clone, Copy, Debug)]
struct DoubleConv {
    w1: ParamId,
    w2: ParamId,
}

#[derive(Clone, Debug)]
struct AttnBlock {
    q: (ParamId, ParamId),
    k: (ParamId, ParamId),
    v: (ParamId, ParamId),
    o: (ParamId, ParamId),
    ln1: (ParamId, ParamId),
    ff1: (ParamId, ParamId),
    ff2: (ParamId, ParamId),
    ln2: (ParamId, ParamId),
}

#[derive(Clone, Debug)]
enum Aggregator {
    Gru { gates: (ParamId, ParamId), cand: (ParamId, ParamId) },
    Lstm { gates: (ParamId, ParamId) },
    Transformer { blocks: Vec<AttnBlock> },
}

/// Network weights plus the layer layout that indexes them.
#[derive(Clone, Debug)]
pub struct SegNet {
    cfg: CaveConfig,
    params: ParamStore,
    enc: Vec<DoubleConv>,
    agg: Vec<Option<Aggregator>>,
    dec: Vec<DoubleConv>,
    head: (ParamId, ParamId),
}

struct Init<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Init<'_> {
    /// Uniform ±1/√fan_in for weights and biases.
    fn conv(&mut self, name: &str, cout: usize, cin: usize, k: usize, bias: bool) -> (ParamId, Option<ParamId>) {
        let bound = 1.0 / ((cin * k * k) as f32).sqrt();
        let mut draw = |n: usize| -> Vec<f32> { (0..n).map(|_| self.rng.random_range(-bound..bound)).collect() };
        let w = Tensor::from_vec(&[cout, cin, k, k], draw(cout * cin * k * k));
        let b = bias.then(|| Tensor::from_vec(&[cout], draw(cout)));
        let wid = self.store.add(format!("{name}.w"), w);
        let bid = b.map(|b| self.store.add(format!("{name}.b"), b));
        (wid, bid)
    }

    fn conv_b(&mut self, name: &str, cout: usize, cin: usize, k: usize) -> (ParamId, ParamId) {
        let (w, b) = self.conv(name, cout, cin, k, true);
        (w, b.unwrap())
    }

    fn double(&mut self, name: &str, cin: usize, cout: usize) -> DoubleConv {
        DoubleConv {
            w1: self.conv(&format!("{name}.conv1"), cout, cin, 3, false).0,
            w2: self.conv(&format!("{name}.conv2"), cout, cout, 3, false).0,
        }
    }

    /// Overwrite `bias[offset..offset + len]` with `value`.
    fn set_bias(&mut self, id: ParamId, offset: usize, len: usize, value: f32) {
        self.store.get_mut(id).data_mut()[offset..offset + len].fill(value);
    }

    fn layer_norm(&mut self, name: &str, c: usize) -> (ParamId, ParamId) {
        (
            self.store.add(format!("{name}.g"), Tensor::full(&[c], 1.0)),
            self.store.add(format!("{name}.b"), Tensor::zeros(&[c])),
        )
    }
}

impl SegNet {
    /// Fresh, seeded weights for `cfg`.
    pub fn new(cfg: CaveConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut init = Init {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let mut enc = Vec::new();
        for s in 0..=cfg.depth {
            let cin = if s == 0 { 1 } else { cfg.channels(s - 1) };
            enc.push(init.double(&format!("enc.{s}"), cin, cfg.channels(s)));
        }
        let k = cfg.temporal_kernel.0;
        let mut agg = Vec::new();
        for s in 0..=cfg.depth {
            if !cfg.aggregates(s) {
                agg.push(None);
                continue;
            }
            let c = cfg.channels(s);
            let name = format!("agg.{s}");
            agg.push(Some(match cfg.temporal_module {
                TemporalModule::ConvGru => {
                    let gates = init.conv_b(&format!("{name}.gates"), 2 * c, 2 * c, k);
                    init.set_bias(gates.1, 0, c, GRU_UPDATE_BIAS);
                    Aggregator::Gru {
                        gates,
                        cand: init.conv_b(&format!("{name}.cand"), c, 2 * c, k),
                    }
                }
                TemporalModule::ConvLstm => {
                    let gates = init.conv_b(&format!("{name}.gates"), 4 * c, 2 * c, k);
                    init.set_bias(gates.1, c, c, LSTM_FORGET_BIAS);
                    Aggregator::Lstm { gates }
                }
                TemporalModule::TemporalTransformer => Aggregator::Transformer {
                    blocks: (0..cfg.attn_layers)
                        .map(|l| {
                            let p = format!("{name}.layer{l}");
                            AttnBlock {
                                q: init.conv_b(&format!("{p}.q"), c, c, 1),
                                k: init.conv_b(&format!("{p}.k"), c, c, 1),
                                v: init.conv_b(&format!("{p}.v"), c, c, 1),
                                o: init.conv_b(&format!("{p}.o"), c, c, 1),
                                ln1: init.layer_norm(&format!("{p}.ln1"), c),
                                ff1: init.conv_b(&format!("{p}.ff1"), 2 * c, c, 1),
                                ff2: init.conv_b(&format!("{p}.ff2"), c, 2 * c, 1),
                                ln2: init.layer_norm(&format!("{p}.ln2"), c),
                            }
                        })
                        .collect(),
                },
                TemporalModule::None => unreachable!(),
            }));
        }
        let mut dec = Vec::new();
        for s in 0..cfg.depth {
            dec.push(init.double(&format!("dec.{s}"), cfg.channels(s + 1) + cfg.channels(s), cfg.channels(s)));
        }
        let head = init.conv_b("head", cfg.out_channels, cfg.channels(0), 1);
        Ok(SegNet {
            cfg,
            params: store,
            enc,
            agg,
            dec,
            head,
        })
    }

    pub fn config(&self) -> &CaveConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Network input for a series: all frames for temporal models, the MinIP
    /// for the U-Net. Shape `[T, 1, H, W]` (T = 1 for the U-Net), raw
    /// intensities.
    pub fn input_for(&self, series: &DsaSeries) -> Tensor {
        if self.cfg.is_temporal() {
            frames_tensor(series.frames.view())
        } else {
            image_tensor(series.min_intensity_projection().view())
        }
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let [t, c, h, w] = match shape {
            &[t, c, h, w] => [t, c, h, w],
            _ => return Err(CaveError::Shape(format!("expected [T, 1, H, W], got {shape:?}"))),
        };
        if t == 0 {
            return Err(CaveError::EmptySeries);
        }
        if c != 1 {
            return Err(CaveError::Shape(format!("expected one input channel, got {c}")));
        }
        let m = 1usize << self.cfg.depth;
        if h % m != 0 || w % m != 0 || h == 0 || w == 0 {
            return Err(CaveError::Shape(format!(
                "{h}x{w} input is not divisible by 2^depth = {m}"
            )));
        }
        if !self.cfg.is_temporal() && t != 1 {
            return Err(CaveError::Shape(format!("U-Net takes a single image, got {t} frames")));
        }
        Ok(())
    }

    fn double_conv(&self, g: &mut Graph, x: Var, dc: DoubleConv) -> Var {
        let w1 = g.param(dc.w1);
        let y = g.conv2d(x, w1, None);
        let y = g.instance_norm(y, NORM_EPS);
        let y = g.relu(y);
        let w2 = g.param(dc.w2);
        let y = g.conv2d(y, w2, None);
        let y = g.instance_norm(y, NORM_EPS);
        g.relu(y)
    }

    fn conv_p(&self, g: &mut Graph, x: Var, (w, b): (ParamId, ParamId)) -> Var {
        let w = g.param(w);
        let b = g.param(b);
        g.conv2d(x, w, Some(b))
    }

    /// Per-frame feature pyramid, `[T, C_s, H/2^s, W/2^s]` for `s = 0..=depth`.
    /// `x` holds raw intensities; they are scaled to [0, 1] here.
    pub fn spatial_encode(&self, g: &mut Graph, x: Var) -> Result<Vec<Var>> {
        self.check_input(g.shape(x))?;
        let mut feats = Vec::with_capacity(self.cfg.depth + 1);
        let mut h = g.affine(x, 1.0 / 255.0, 0.0);
        for (s, &dc) in self.enc.iter().enumerate() {
            if s > 0 {
                h = g.max_pool2(h);
            }
            h = self.double_conv(g, h, dc);
            feats.push(h);
        }
        Ok(feats)
    }

    /// Collapse the time axis at every scale: `[T, C, h, w] → [1, C, h, w]`.
    pub fn temporal_aggregate(&self, g: &mut Graph, pyramid: &[Var]) -> Result<Vec<Var>> {
        if pyramid.len() != self.cfg.depth + 1 {
            return Err(CaveError::Shape(format!(
                "pyramid has {} scales, expected {}",
                pyramid.len(),
                self.cfg.depth + 1
            )));
        }
        let mut out = Vec::with_capacity(pyramid.len());
        for (s, &x) in pyramid.iter().enumerate() {
            let t = g.shape(x)[0];
            if t == 0 {
                return Err(CaveError::EmptySeries);
            }
            let y = match &self.agg[s] {
                Some(Aggregator::Gru { gates, cand }) => self.conv_gru(g, x, *gates, *cand),
                Some(Aggregator::Lstm { gates }) => self.conv_lstm(g, x, *gates),
                Some(Aggregator::Transformer { blocks }) => self.transformer(g, x, blocks),
                // U-Net (T = 1) or the non-aggregated scale 0: last frame
                None => g.narrow(x, 0, t - 1, 1),
            };
            out.push(y);
        }
        Ok(out)
    }

    fn conv_gru(&self, g: &mut Graph, x: Var, gates: (ParamId, ParamId), cand: (ParamId, ParamId)) -> Var {
        let [t, c, hh, ww] = g.value(x).dims4();
        let mut h = g.constant(Tensor::zeros(&[1, c, hh, ww]));
        for step in 0..t {
            let xt = g.narrow(x, 0, step, 1);
            let xh = g.cat(&[xt, h], 1);
            let zr = self.conv_p(g, xh, gates);
            let z = g.narrow(zr, 1, 0, c);
            let z = g.sigmoid(z);
            let r = g.narrow(zr, 1, c, c);
            let r = g.sigmoid(r);
            let rh = g.mul(r, h);
            let xrh = g.cat(&[xt, rh], 1);
            let n = self.conv_p(g, xrh, cand);
            let n = g.tanh(n);
            // h = (1 - z) h + z n
            let d = g.sub(n, h);
            let zd = g.mul(z, d);
            h = g.add(h, zd);
        }
        h
    }

    fn conv_lstm(&self, g: &mut Graph, x: Var, gates: (ParamId, ParamId)) -> Var {
        let [t, c, hh, ww] = g.value(x).dims4();
        let mut h = g.constant(Tensor::zeros(&[1, c, hh, ww]));
        let mut cell = g.constant(Tensor::zeros(&[1, c, hh, ww]));
        for step in 0..t {
            let xt = g.narrow(x, 0, step, 1);
            let xh = g.cat(&[xt, h], 1);
            let all = self.conv_p(g, xh, gates);
            let i = g.narrow(all, 1, 0, c);
            let i = g.sigmoid(i);
            let f = g.narrow(all, 1, c, c);
            let f = g.sigmoid(f);
            let o = g.narrow(all, 1, 2 * c, c);
            let o = g.sigmoid(o);
            let gg = g.narrow(all, 1, 3 * c, c);
            let gg = g.tanh(gg);
            let fc = g.mul(f, cell);
            let ig = g.mul(i, gg);
            cell = g.add(fc, ig);
            let tc = g.tanh(cell);
            h = g.mul(o, tc);
        }
        h
    }

    fn transformer(&self, g: &mut Graph, x: Var, blocks: &[AttnBlock]) -> Var {
        let [t, c, hh, ww] = g.value(x).dims4();
        let mut y = x;
        if self.cfg.positional_encoding {
            let pe = g.constant(positional_encoding(t, c, hh, ww));
            y = g.add(y, pe);
        }
        for b in blocks {
            let q = self.conv_p(g, y, b.q);
            let k = self.conv_p(g, y, b.k);
            let v = self.conv_p(g, y, b.v);
            let a = g.temporal_attention(q, k, v, self.cfg.attn_heads);
            let a = self.conv_p(g, a, b.o);
            let r = g.add(y, a);
            y = self.layer_norm(g, r, b.ln1);
            let f = self.conv_p(g, y, b.ff1);
            let f = g.relu(f);
            let f = self.conv_p(g, f, b.ff2);
            let r = g.add(y, f);
            y = self.layer_norm(g, r, b.ln2);
        }
        g.mean_dim0(y)
    }

    fn layer_norm(&self, g: &mut Graph, x: Var, (gamma, beta): (ParamId, ParamId)) -> Var {
        let n = g.channel_norm(x, NORM_EPS);
        let gamma = g.param(gamma);
        let beta = g.param(beta);
        g.channel_affine(n, gamma, beta)
    }

    /// Decoder from the aggregated pyramid to `[1, out_channels, H, W]` logits.
    pub fn spatial_decode(&self, g: &mut Graph, aggregated: &[Var]) -> Result<Var> {
        if aggregated.len() != self.cfg.depth + 1 {
            return Err(CaveError::Shape(format!(
                "aggregated pyramid has {} scales, expected {}",
                aggregated.len(),
                self.cfg.depth + 1
            )));
        }
        for (s, &a) in aggregated.iter().enumerate() {
            let shape = g.shape(a);
            if shape.len() != 4 || shape[0] != 1 || shape[1] != self.cfg.channels(s) {
                return Err(CaveError::Shape(format!("scale {s} map has shape {shape:?}")));
            }
        }
        let mut d = aggregated[self.cfg.depth];
        for s in (0..self.cfg.depth).rev() {
            let u = g.upsample2(d);
            let skip = aggregated[s];
            if g.shape(u)[2..] != g.shape(skip)[2..] {
                return Err(CaveError::Shape(format!(
                    "skip at scale {s} is {:?}, upsampled path is {:?}",
                    g.shape(skip),
                    g.shape(u)
                )));
            }
            let cat = g.cat(&[u, skip], 1);
            d = self.double_conv(g, cat, self.dec[s]);
        }
        Ok(self.conv_p(g, d, self.head))
    }

    /// Full network on a `[T, 1, H, W]` input: logits `[1, out, H, W]`.
    pub fn logits(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let pyramid = self.spatial_encode(g, x)?;
        let agg = self.temporal_aggregate(g, &pyramid)?;
        self.spatial_decode(g, &agg)
    }

    /// Probabilities `[out, H, W]` for a prepared input tensor.
    pub fn predict_tensor(&self, input: Tensor) -> Result<Array3<f32>> {
        let mut g = Graph::inference(&self.params);
        let x = g.constant(input);
        let logits = self.logits(&mut g, x)?;
        let y = g.sigmoid(logits);
        let [_, c, h, w] = g.value(y).dims4();
        Ok(Array3::from_shape_vec((c, h, w), g.value(y).data().to_vec()).expect("shape"))
    }

    /// Probabilities `[out, H, W]` for a series (frames or MinIP depending
    /// on the configuration).
    pub fn predict(&self, series: &DsaSeries) -> Result<Array3<f32>> {
        self.predict_tensor(self.input_for(series))
    }
}

/// `[T, H, W]` frames → `[T, 1, H, W]` tensor.
pub fn frames_tensor(frames: ArrayView3<f32>) -> Tensor {
    let (t, h, w) = frames.dim();
    Tensor::from_vec(&[t, 1, h, w], frames.iter().copied().collect())
}

pub fn image_tensor(image: ArrayView2<f32>) -> Tensor {
    let (h, w) = image.dim();
    Tensor::from_vec(&[1, 1, h, w], image.iter().copied().collect())
}

/// Sinusoidal time encoding, constant over the `h × w` plane.
pub fn positional_encoding(t: usize, c: usize, h: usize, w: usize) -> Tensor {
    let p = h * w;
    let mut data = Vec::with_capacity(t * c * p);
    for pos in 0..t {
        for ch in 0..c {
            let i = (ch / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * i / c as f64);
            let v = if ch % 2 == 0 { angle.sin() } else { angle.cos() } as f32;
            data.extend(std::iter::repeat_n(v, p));
        }
    }
    Tensor::from_vec(&[t, c, h, w], data)
}

/// CAVE on a series: probabilities `[2, H, W]`.
pub fn cave_forward(model: &SegNet, series: &DsaSeries) -> Result<Array3<f32>> {
    if !model.config().is_temporal() {
        return Err(CaveError::Config("cave_forward needs a temporal module; use unet_forward".into()));
    }
    model.predict_tensor(frames_tensor(series.frames.view()))
}

/// U-Net on one image (e.g. the MinIP): probabilities `[2, H, W]`.
pub fn unet_forward(model: &SegNet, image: &Array2<f32>) -> Result<Array3<f32>> {
    if model.config().is_temporal() {
        return Err(CaveError::Config("unet_forward needs temporal_module NONE".into()));
    }
    model.predict_tensor(image_tensor(image.view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn cfg(module: TemporalModule, base: usize, depth: usize) -> CaveConfig {
        CaveConfig {
            base_channels: base,
            depth,
            temporal_module: module,
            ..Default::default()
        }
    }

    fn random_series(t: usize, h: usize, w: usize, seed: u64) -> DsaSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DsaSeries::new(Array3::from_shape_fn((t, h, w), |_| rng.random_range(0.0..255.0)), 1.0).unwrap()
    }

    fn pyramid_shapes(net: &SegNet, series: &DsaSeries) -> Vec<Vec<usize>> {
        let mut g = Graph::inference(net.params());
        let x = g.constant(frames_tensor(series.frames.view()));
        let p = net.spatial_encode(&mut g, x).unwrap();
        p.iter().map(|&v| g.shape(v).to_vec()).collect()
    }

    #[test]
    fn pyramid_follows_channel_doubling() {
        let net = SegNet::new(cfg(TemporalModule::ConvGru, 2, 4), 0).unwrap();
        let shapes = pyramid_shapes(&net, &random_series(5, 64, 64, 1));
        let expect: Vec<Vec<usize>> = (0..5).map(|s| vec![5, 2 << s, 64 >> s, 64 >> s]).collect();
        assert_eq!(shapes, expect);
    }

    #[test]
    fn indivisible_input_is_rejected() {
        let net = SegNet::new(cfg(TemporalModule::ConvGru, 2, 3), 0).unwrap();
        assert!(matches!(net.predict(&random_series(2, 20, 16, 0)), Err(CaveError::Shape(_))));
    }

    #[test]
    fn config_validation() {
        assert!(SegNet::new(cfg(TemporalModule::ConvGru, 2, 0), 0).is_err());
        let mut c = cfg(TemporalModule::ConvGru, 2, 2);
        c.temporal_kernel = (2, 2);
        assert!(c.validate().is_err());
        assert!(cfg(TemporalModule::TemporalTransformer, 6, 2).validate().is_err());
        assert_eq!("conv_gru".parse::<TemporalModule>().unwrap(), TemporalModule::ConvGru);
        let json = serde_json::to_string(&TemporalModule::TemporalTransformer).unwrap();
        assert_eq!(json, "\"TEMPORAL_TRANSFORMER\"");
    }

    #[test]
    fn outputs_are_probabilities_for_every_module() {
        for m in TemporalModule::TEMPORAL {
            let net = SegNet::new(cfg(m, 4, 2), 3).unwrap();
            for t in [1, 3] {
                let p = cave_forward(&net, &random_series(t, 16, 16, 9)).unwrap();
                assert_eq!(p.dim(), (2, 16, 16));
                assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
            }
        }
    }

    #[test]
    fn zero_recurrent_weights_give_zero_state() {
        for m in [TemporalModule::ConvGru, TemporalModule::ConvLstm] {
            let mut net = SegNet::new(cfg(m, 2, 1), 0).unwrap();
            let ids: Vec<ParamId> = net.params().ids().filter(|&id| net.params().name(id).starts_with("agg.")).collect();
            for id in ids {
                net.params_mut().get_mut(id).data_mut().fill(0.0);
            }
            let series = random_series(4, 8, 8, 2);
            let mut g = Graph::inference(net.params());
            let x = g.constant(frames_tensor(series.frames.view()));
            let p = net.spatial_encode(&mut g, x).unwrap();
            for a in net.temporal_aggregate(&mut g, &p).unwrap() {
                assert!(g.value(a).data().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn reversing_frames_changes_the_output() {
        for m in TemporalModule::TEMPORAL {
            let net = SegNet::new(cfg(m, 4, 2), 11).unwrap();
            let series = random_series(4, 16, 16, 5);
            let mut rev = series.clone();
            rev.frames.invert_axis(ndarray::Axis(0));
            let a = cave_forward(&net, &series).unwrap();
            let b = cave_forward(&net, &rev).unwrap();
            let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
            assert!(diff > 1e-6, "{m:?}: {diff}");
        }
    }

    #[test]
    fn parameter_count_depends_on_config_only() {
        let net = SegNet::new(cfg(TemporalModule::ConvLstm, 4, 2), 0).unwrap();
        let again = SegNet::new(cfg(TemporalModule::ConvLstm, 4, 2), 99).unwrap();
        assert_eq!(net.num_params(), again.num_params());
        // closed form: encoder + decoder + LSTM gates + head
        let (b, d) = (4usize, 2usize);
        let c = |s: usize| b << s;
        let mut expect = 0;
        for s in 0..=d {
            let cin = if s == 0 { 1 } else { c(s - 1) };
            expect += 9 * cin * c(s) + 9 * c(s) * c(s);
            expect += 4 * c(s) * 2 * c(s) * 9 + 4 * c(s);
        }
        for s in 0..d {
            expect += 9 * 3 * c(s) * c(s) + 9 * c(s) * c(s);
        }
        expect += 2 * c(0) + 2;
        assert_eq!(net.num_params(), expect);
    }

    /// Direct ndarray ConvGRU on `[C, H, W]` maps (zero padding).
    fn naive_conv(x: &Array3<f32>, w: &Tensor, b: &Tensor) -> Array3<f32> {
        let [co, ci, k, _] = w.dims4();
        let (_, h, wd) = x.dim();
        let r = (k / 2) as isize;
        Array3::from_shape_fn((co, h, wd), |(o, i, j)| {
            let mut acc = b.data()[o];
            for c in 0..ci {
                for di in 0..k {
                    for dj in 0..k {
                        let (y, z) = (i as isize + di as isize - r, j as isize + dj as isize - r);
                        if y >= 0 && z >= 0 && (y as usize) < h && (z as usize) < wd {
                            acc += w.data()[((o * ci + c) * k + di) * k + dj] * x[[c, y as usize, z as usize]];
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn gru_matches_direct_unrolling_on_a_constant_sequence() {
        let net = SegNet::new(cfg(TemporalModule::ConvGru, 2, 1), 4).unwrap();
        let c = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let frame = Array3::from_shape_fn((c, 6, 6), |_| rng.random_range(-1.0f32..1.0));
        let t = 4;
        let mut seq = Vec::new();
        for _ in 0..t {
            seq.extend(frame.iter().copied());
        }
        let mut g = Graph::inference(net.params());
        let x = g.constant(Tensor::from_vec(&[t, c, 6, 6], seq));
        let dummy = g.constant(Tensor::zeros(&[t, 2 * c, 3, 3]));
        let out = net.temporal_aggregate(&mut g, &[x, dummy]).unwrap()[0];

        let p = |n: &str| net.params().get(net.params().find(n).unwrap()).clone();
        let (gw, gb, cw, cb) = (p("agg.0.gates.w"), p("agg.0.gates.b"), p("agg.0.cand.w"), p("agg.0.cand.b"));
        let sig = |v: f32| 1.0 / (1.0 + (-v).exp());
        let mut h = Array3::<f32>::zeros((c, 6, 6));
        for _ in 0..t {
            let xh = ndarray::concatenate![ndarray::Axis(0), frame, h];
            let zr = naive_conv(&xh, &gw, &gb);
            let z = zr.slice(ndarray::s![..c, .., ..]).mapv(sig);
            let r = zr.slice(ndarray::s![c.., .., ..]).mapv(sig);
            let xrh = ndarray::concatenate![ndarray::Axis(0), frame, &r * &h];
            let n = naive_conv(&xrh, &cw, &cb).mapv(f32::tanh);
            h = (1.0 - &z) * &h + &z * &n;
        }
        let got = g.value(out).data();
        for (a, b) in got.iter().zip(h.iter()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn scale0_aggregation_can_be_disabled() {
        let mut c = cfg(TemporalModule::ConvGru, 2, 2);
        c.aggregate_scale0 = false;
        let net = SegNet::new(c, 0).unwrap();
        assert!(net.params().find("agg.0.gates.w").is_none());
        assert!(net.params().find("agg.1.gates.w").is_some());
        assert_eq!(cave_forward(&net, &random_series(3, 8, 8, 0)).unwrap().dim(), (2, 8, 8));
    }

    #[test]
    fn unet_ignores_frame_order_through_minip() {
        let net = SegNet::new(CaveConfig::unet(4, 2), 2).unwrap();
        let series = random_series(5, 16, 16, 3);
        let mut rev = series.clone();
        rev.frames.invert_axis(ndarray::Axis(0));
        assert_eq!(net.predict(&series).unwrap(), net.predict(&rev).unwrap());
        assert!(cave_forward(&net, &series).is_err());
    }

    #[test]
    fn positional_encoding_values() {
        let pe = positional_encoding(3, 4, 1, 2);
        let at = |t: usize, c: usize| pe.data()[(t * 4 + c) * 2];
        assert_eq!(at(0, 0), 0.0);
        assert_eq!(at(0, 1), 1.0);
        assert!((at(2, 0) - 2f32.sin()).abs() < 1e-6);
        assert!((at(1, 3) - (1.0f64 / 100.0).cos() as f32).abs() < 1e-6);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt/model.ckpt");
        let net = SegNet::new(cfg(TemporalModule::TemporalTransformer, 4, 2), 7).unwrap();
        save_checkpoint(&net, &serde_json::json!({"epoch": 3}), &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.meta["epoch"], 3);
        assert_eq!(back.model.params(), net.params());
        assert_eq!(back.model.config(), net.config());
        std::fs::write(dir.path().join("bad"), b"nope").unwrap();
        assert!(matches!(load_checkpoint(dir.path().join("bad")), Err(CaveError::Format(_))));
    }
}
