//! The two-stream head.
//!
//! Each stream runs a two-layer MLP (`d → h1 → h2`, ReLU after both layers)
//! over its instances and pools the outputs with a permutation-invariant
//! aggregator. The final layer maps `concat(global_summary, local_summary)`
//! (length `2·h2`) to one logit. A disabled stream contributes a zero block,
//! so the final layer has the same shape across every aggregator choice.
//!
//! Attention pooling uses one trainable latent query `z` over key/value
//! projections of the MLP outputs:
//! `α = softmax(z·(Wk u_j) / √h2)`, `summary = Σ_j α_j Wv u_j`.

mod checkpoint;
mod model;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::embedset::EmbedBag;
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use model::{Model, TrainMode};

pub const DEFAULT_HIDDEN1: usize = 16;
pub const DEFAULT_HIDDEN2: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggKind {
    Mean,
    Max,
    Attention,
    None,
}

impl AggKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AggKind::Mean => "mean",
            AggKind::Max => "max",
            AggKind::Attention => "attention",
            AggKind::None => "none",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            AggKind::None => 0,
            AggKind::Mean => 1,
            AggKind::Max => 2,
            AggKind::Attention => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => AggKind::None,
            1 => AggKind::Mean,
            2 => AggKind::Max,
            3 => AggKind::Attention,
            _ => return None,
        })
    }
}

impl fmt::Display for AggKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(AggKind::Mean),
            "max" => Ok(AggKind::Max),
            "attention" => Ok(AggKind::Attention),
            "none" => Ok(AggKind::None),
            other => Err(Error::invalid(format!(
                "unknown aggregator '{other}' (expected mean, max, attention or none)"
            ))),
        }
    }
}

/// Aggregator choice for the two streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggConfig {
    pub global: AggKind,
    pub local: AggKind,
}

impl AggConfig {
    pub fn new(global: AggKind, local: AggKind) -> Result<Self> {
        if global == AggKind::None && local == AggKind::None {
            return Err(Error::invalid("at least one stream must be enabled"));
        }
        Ok(AggConfig { global, local })
    }

    pub fn kind(&self, stream: StreamId) -> AggKind {
        match stream {
            StreamId::Global => self.global,
            StreamId::Local => self.local,
        }
    }
}

impl Default for AggConfig {
    fn default() -> Self {
        AggConfig {
            global: AggKind::Max,
            local: AggKind::Attention,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamId {
    Global,
    Local,
}

impl StreamId {
    pub fn as_str(self) -> &'static str {
        match self {
            StreamId::Global => "global",
            StreamId::Local => "local",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadDims {
    pub embed_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl HeadDims {
    pub fn new(embed_dim: usize) -> Self {
        HeadDims {
            embed_dim,
            hidden1: DEFAULT_HIDDEN1,
            hidden2: DEFAULT_HIDDEN2,
        }
    }
}

/// One named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    /// Input width for weight matrices; `None` for biases.
    pub fan_in: Option<usize>,
}

impl Segment {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.rows * self.cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct StreamLayout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    // z, wk, wv
    attn: Option<(usize, usize, usize)>,
}

/// Where every tensor lives in the flat parameter vector. The order is the
/// checkpoint order: global stream (w1, b1, w2, b2, [z, wk, wv]), local
/// stream, then the final layer's weights and bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    dims: HeadDims,
    agg: AggConfig,
    global: Option<StreamLayout>,
    local: Option<StreamLayout>,
    head_w: usize,
    head_b: usize,
    len: usize,
}

impl ParamLayout {
    pub fn new(dims: HeadDims, agg: AggConfig) -> Result<Self> {
        let agg = AggConfig::new(agg.global, agg.local)?;
        if dims.embed_dim == 0 || dims.hidden1 == 0 || dims.hidden2 == 0 {
            return Err(Error::invalid(format!("all head dimensions must be positive: {dims:?}")));
        }
        let (d, h1, h2) = (dims.embed_dim, dims.hidden1, dims.hidden2);
        let mut off = 0;
        let mut take = |n: usize| {
            let o = off;
            off += n;
            o
        };
        let mut stream = |kind: AggKind| {
            (kind != AggKind::None).then(|| StreamLayout {
                w1: take(h1 * d),
                b1: take(h1),
                w2: take(h2 * h1),
                b2: take(h2),
                attn: (kind == AggKind::Attention).then(|| (take(h2), take(h2 * h2), take(h2 * h2))),
            })
        };
        let global = stream(agg.global);
        let local = stream(agg.local);
        let head_w = take(2 * h2);
        let head_b = take(1);
        Ok(ParamLayout {
            dims,
            agg,
            global,
            local,
            head_w,
            head_b,
            len: off,
        })
    }

    pub fn dims(&self) -> HeadDims {
        self.dims
    }

    pub fn agg(&self) -> AggConfig {
        self.agg
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn stream(&self, id: StreamId) -> Option<&StreamLayout> {
        match id {
            StreamId::Global => self.global.as_ref(),
            StreamId::Local => self.local.as_ref(),
        }
    }

    /// All tensors in storage order.
    pub fn segments(&self) -> Vec<Segment> {
        let HeadDims {
            embed_dim: d,
            hidden1: h1,
            hidden2: h2,
        } = self.dims;
        let seg = |name: String, offset, rows, cols, fan_in| Segment {
            name,
            offset,
            rows,
            cols,
            fan_in,
        };
        let mut out = Vec::new();
        for id in [StreamId::Global, StreamId::Local] {
            let Some(l) = self.stream(id) else { continue };
            let p = id.as_str();
            out.push(seg(format!("{p}.w1"), l.w1, h1, d, Some(d)));
            out.push(seg(format!("{p}.b1"), l.b1, h1, 1, None));
            out.push(seg(format!("{p}.w2"), l.w2, h2, h1, Some(h1)));
            out.push(seg(format!("{p}.b2"), l.b2, h2, 1, None));
            if let Some((z, wk, wv)) = l.attn {
                out.push(seg(format!("{p}.z"), z, h2, 1, Some(h2)));
                out.push(seg(format!("{p}.wk"), wk, h2, h2, Some(h2)));
                out.push(seg(format!("{p}.wv"), wv, h2, h2, Some(h2)));
            }
        }
        out.push(seg("head.w".into(), self.head_w, 2 * h2, 1, Some(2 * h2)));
        out.push(seg("head.b".into(), self.head_b, 1, 1, None));
        out
    }

    /// Human-readable location of flat index `i`, e.g. `local.wk[2,5]`.
    pub fn path(&self, i: usize) -> String {
        for seg in self.segments() {
            if seg.range().contains(&i) {
                let k = i - seg.offset;
                return if seg.cols == 1 {
                    format!("{}[{}]", seg.name, k)
                } else {
                    format!("{}[{},{}]", seg.name, k / seg.cols, k % seg.cols)
                };
            }
        }
        format!("<out of range {i}>")
    }
}

/// Number of trainable parameters: per enabled stream `d·h1 + h1 + h1·h2 + h2`,
/// plus `2·h2² + h2` per attention aggregator, plus `2·h2 + 1` for the final layer.
pub fn count_params(agg: AggConfig, dims: HeadDims) -> Result<usize> {
    Ok(ParamLayout::new(dims, agg)?.len())
}

/// All trainable parameters, stored flat in [`ParamLayout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    layout: ParamLayout,
    values: Vec<f64>,
}

/// A gradient with exactly the shape of [`HeadParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grad {
    layout: ParamLayout,
    values: Vec<f64>,
}

macro_rules! flat_vector_impl {
    ($t:ty) => {
        impl $t {
            pub fn zeros(layout: ParamLayout) -> Self {
                let values = vec![0.0; layout.len()];
                Self { layout, values }
            }

            pub fn from_values(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
                if values.len() != layout.len() {
                    return Err(Error::Dimension(format!(
                        "{} values for a layout of {} parameters",
                        values.len(),
                        layout.len()
                    )));
                }
                Ok(Self { layout, values })
            }

            pub fn layout(&self) -> &ParamLayout {
                &self.layout
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.values
            }

            pub fn into_values(self) -> Vec<f64> {
                self.values
            }

            /// Fails with the path of the first non-finite entry.
            pub fn check_finite(&self) -> Result<()> {
                match self.values.iter().position(|v| !v.is_finite()) {
                    Some(i) => Err(Error::NonFiniteParam {
                        path: self.layout.path(i),
                    }),
                    None => Ok(()),
                }
            }
        }
    };
}

flat_vector_impl!(HeadParams);
flat_vector_impl!(Grad);

/// Borrowed view of one stream's tensors.
#[derive(Debug, Clone)]
pub struct StreamRef<'a> {
    pub kind: AggKind,
    pub w1: ArrayView2<'a, f64>,
    pub b1: ArrayView1<'a, f64>,
    pub w2: ArrayView2<'a, f64>,
    pub b2: ArrayView1<'a, f64>,
    pub attn: Option<AttnRef<'a>>,
}

#[derive(Debug, Clone)]
pub struct AttnRef<'a> {
    pub z: ArrayView1<'a, f64>,
    pub wk: ArrayView2<'a, f64>,
    pub wv: ArrayView2<'a, f64>,
}

impl HeadParams {
    pub fn dims(&self) -> HeadDims {
        self.layout.dims
    }

    pub fn agg(&self) -> AggConfig {
        self.layout.agg
    }

    pub fn stream(&self, id: StreamId) -> Option<StreamRef<'_>> {
        let l = self.layout.stream(id)?;
        let HeadDims {
            embed_dim: d,
            hidden1: h1,
            hidden2: h2,
        } = self.layout.dims;
        let v = &self.values;
        let mat = |off: usize, r: usize, c: usize| ArrayView2::from_shape((r, c), &v[off..off + r * c]).unwrap();
        let vec = |off: usize, n: usize| ArrayView1::from(&v[off..off + n]);
        Some(StreamRef {
            kind: self.layout.agg.kind(id),
            w1: mat(l.w1, h1, d),
            b1: vec(l.b1, h1),
            w2: mat(l.w2, h2, h1),
            b2: vec(l.b2, h2),
            attn: l.attn.map(|(z, wk, wv)| AttnRef {
                z: vec(z, h2),
                wk: mat(wk, h2, h2),
                wv: mat(wv, h2, h2),
            }),
        })
    }

    pub fn head_weights(&self) -> &[f64] {
        &self.values[self.layout.head_w..self.layout.head_w + 2 * self.layout.dims.hidden2]
    }

    pub fn head_bias(&self) -> f64 {
        self.values[self.layout.head_b]
    }
}

impl Grad {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn add_scaled(&mut self, other: &Grad, scale: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// Adds an owned stream gradient into this flat gradient.
    pub(crate) fn add_stream(&mut self, id: StreamId, g: &StreamGrad) {
        let Some(l) = self.layout.stream(id).copied() else {
            return;
        };
        // Logical (row-major) iteration; gradient arrays may have any strides.
        let mut add = |off: usize, src: ndarray::iter::Iter<'_, f64, ndarray::IxDyn>| {
            for (a, b) in self.values[off..].iter_mut().zip(src) {
                *a += b;
            }
        };
        add(l.w1, g.w1.view().into_dyn().iter());
        add(l.b1, g.b1.view().into_dyn().iter());
        add(l.w2, g.w2.view().into_dyn().iter());
        add(l.b2, g.b2.view().into_dyn().iter());
        if let (Some((z, wk, wv)), Some(a)) = (l.attn, &g.attn) {
            add(z, a.z.view().into_dyn().iter());
            add(wk, a.wk.view().into_dyn().iter());
            add(wv, a.wv.view().into_dyn().iter());
        }
    }

    pub(crate) fn add_head(&mut self, dw: &[f64], db: f64) {
        let off = self.layout.head_w;
        for (a, b) in self.values[off..off + dw.len()].iter_mut().zip(dw) {
            *a += b;
        }
        self.values[self.layout.head_b] += db;
    }
}

/// A bag's embeddings promoted to 64-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct BagFeatures {
    pub global: Array2<f64>,
    pub tiles: Array2<f64>,
    pub label: f64,
}

impl BagFeatures {
    pub fn new(global: Array2<f64>, tiles: Array2<f64>, label: f64) -> Result<Self> {
        if global.ncols() != tiles.ncols() {
            return Err(Error::Dimension(format!(
                "global rows have {} values, tile rows {}",
                global.ncols(),
                tiles.ncols()
            )));
        }
        Ok(BagFeatures { global, tiles, label })
    }

    pub fn dim(&self) -> usize {
        self.global.ncols()
    }
}

impl From<&EmbedBag> for BagFeatures {
    fn from(bag: &EmbedBag) -> Self {
        let d = bag.dim;
        let promote = |v: &[f32]| -> Array2<f64> {
            Array2::from_shape_vec((v.len() / d.max(1), d), v.iter().map(|&x| x as f64).collect())
                .expect("row-major embedding buffer")
        };
        BagFeatures {
            global: promote(&bag.global_embeds),
            tiles: promote(&bag.tile_embeds),
            label: bag.label as f64,
        }
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a logit: `max(ℓ,0) − ℓ·y + ln(1 + e^{−|ℓ|})`.
pub fn bce_loss(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

/// Intermediate values of one stream's MLP over a batch of instances.
#[derive(Debug, Clone)]
pub(crate) struct MlpTrace {
    pub a1: Array2<f64>,
    pub h1: Array2<f64>,
    pub a2: Array2<f64>,
    pub u: Array2<f64>,
}

pub(crate) fn mlp_batch(x: ArrayView2<'_, f64>, s: &StreamRef<'_>) -> MlpTrace {
    let mut a1 = x.dot(&s.w1.t());
    a1 += &s.b1;
    let h1 = a1.mapv(relu);
    let mut a2 = h1.dot(&s.w2.t());
    a2 += &s.b2;
    let u = a2.mapv(relu);
    MlpTrace { a1, h1, a2, u }
}

/// `ReLU(W2·ReLU(W1·e + b1) + b2)` for a single instance.
pub fn mlp_forward(e: &[f64], s: &StreamRef<'_>) -> Result<Vec<f64>> {
    if e.len() != s.w1.ncols() {
        return Err(Error::Dimension(format!(
            "instance has {} values, stream expects {}",
            e.len(),
            s.w1.ncols()
        )));
    }
    let x = ArrayView2::from_shape((1, e.len()), e).unwrap();
    Ok(mlp_batch(x, s).u.row(0).to_vec())
}

#[derive(Debug, Clone)]
pub(crate) enum AggTrace {
    Mean,
    Max {
        argmax: Vec<usize>,
    },
    Attention {
        keys: Array2<f64>,
        values: Array2<f64>,
        alpha: Array1<f64>,
    },
}

/// Result of pooling one instance set.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub summary: Vec<f64>,
    /// Attention weights over instances, present only for attention pooling.
    pub weights: Option<Vec<f64>>,
}

pub(crate) fn softmax_in_place(scores: &mut Array1<f64>) {
    let m = scores.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    scores.mapv_inplace(|v| (v - m).exp());
    let total = scores.sum();
    *scores /= total;
}

pub(crate) fn aggregate_traced(
    kind: AggKind,
    u: ArrayView2<'_, f64>,
    s: &StreamRef<'_>,
) -> Result<(Array1<f64>, AggTrace)> {
    let n = u.nrows();
    if n == 0 {
        return Err(Error::invalid(format!("{kind} pooling over an empty instance set")));
    }
    match kind {
        AggKind::Mean => Ok((u.sum_axis(Axis(0)) / n as f64, AggTrace::Mean)),
        AggKind::Max => {
            let h = u.ncols();
            let mut argmax = vec![0usize; h];
            let mut summary = u.row(0).to_owned();
            for j in 1..n {
                for c in 0..h {
                    // Strict comparison keeps the lowest index on ties.
                    if u[(j, c)] > summary[c] {
                        summary[c] = u[(j, c)];
                        argmax[c] = j;
                    }
                }
            }
            Ok((summary, AggTrace::Max { argmax }))
        }
        AggKind::Attention => {
            let a = s
                .attn
                .as_ref()
                .ok_or_else(|| Error::invalid("attention pooling without attention parameters"))?;
            let keys = u.dot(&a.wk.t());
            let values = u.dot(&a.wv.t());
            let scale = 1.0 / (a.z.len() as f64).sqrt();
            let mut alpha = keys.dot(&a.z) * scale;
            softmax_in_place(&mut alpha);
            let summary = values.t().dot(&alpha);
            Ok((summary, AggTrace::Attention { keys, values, alpha }))
        }
        AggKind::None => Err(Error::invalid("cannot pool with a disabled aggregator")),
    }
}

/// Pools MLP outputs (one row per instance).
pub fn aggregate(kind: AggKind, features: ArrayView2<'_, f64>, s: &StreamRef<'_>) -> Result<Aggregate> {
    let (summary, trace) = aggregate_traced(kind, features, s)?;
    let weights = match trace {
        AggTrace::Attention { alpha, .. } => Some(alpha.to_vec()),
        _ => None,
    };
    Ok(Aggregate {
        summary: summary.to_vec(),
        weights,
    })
}

#[derive(Debug, Clone)]
pub(crate) struct StreamTrace {
    pub mlp: MlpTrace,
    pub agg: AggTrace,
    pub summary: Array1<f64>,
}

/// Runs one stream over its instance matrix. `Ok(None)` means the stream is
/// enabled but has no instances; its summary is then the zero vector.
pub(crate) fn stream_forward(x: ArrayView2<'_, f64>, s: &StreamRef<'_>) -> Result<Option<StreamTrace>> {
    if x.ncols() != s.w1.ncols() {
        return Err(Error::Dimension(format!(
            "bag embeddings have dimension {}, head expects {}",
            x.ncols(),
            s.w1.ncols()
        )));
    }
    if x.nrows() == 0 {
        return Ok(None);
    }
    let mlp = mlp_batch(x, s);
    let (summary, agg) = aggregate_traced(s.kind, mlp.u.view(), s)?;
    Ok(Some(StreamTrace { mlp, agg, summary }))
}

/// Full trace of a bag's forward pass.
#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    pub logit: f64,
    pub global: Option<StreamTrace>,
    pub local: Option<StreamTrace>,
}

pub(crate) fn forward_traced(bag: &BagFeatures, p: &HeadParams) -> Result<ForwardTrace> {
    let h2 = p.dims().hidden2;
    let w = p.head_weights();
    let mut logit = p.head_bias();
    let mut run = |id: StreamId, x: ArrayView2<'_, f64>, block: &[f64]| -> Result<Option<StreamTrace>> {
        let Some(s) = p.stream(id) else {
            return Ok(None);
        };
        let trace = stream_forward(x, &s)?;
        match &trace {
            Some(t) => logit += t.summary.iter().zip(block).map(|(a, b)| a * b).sum::<f64>(),
            None => log::warn!("{} stream enabled but bag has no instances; using a zero summary", id.as_str()),
        }
        Ok(trace)
    };
    let global = run(StreamId::Global, bag.global.view(), &w[..h2])?;
    let local = run(StreamId::Local, bag.tiles.view(), &w[h2..])?;
    Ok(ForwardTrace { logit, global, local })
}

/// Outcome of a bag's forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logit: f64,
    pub global_summary: Vec<f64>,
    pub local_summary: Vec<f64>,
    pub global_weights: Option<Vec<f64>>,
    /// Attention weights over the bag's tiles, in tile order.
    pub local_weights: Option<Vec<f64>>,
}

impl Forward {
    pub fn probability(&self) -> f64 {
        sigmoid(self.logit)
    }
}

/// `logit = w · concat(global_summary, local_summary) + b`.
pub fn forward(bag: &BagFeatures, p: &HeadParams) -> Result<Forward> {
    if bag.dim() != p.dims().embed_dim {
        return Err(Error::Dimension(format!(
            "bag dimension {} vs head dimension {}",
            bag.dim(),
            p.dims().embed_dim
        )));
    }
    let h2 = p.dims().hidden2;
    let t = forward_traced(bag, p)?;
    let unpack = |s: &Option<StreamTrace>| -> (Vec<f64>, Option<Vec<f64>>) {
        match s {
            Some(t) => (
                t.summary.to_vec(),
                match &t.agg {
                    AggTrace::Attention { alpha, .. } => Some(alpha.to_vec()),
                    _ => None,
                },
            ),
            None => (vec![0.0; h2], None),
        }
    };
    let (global_summary, global_weights) = unpack(&t.global);
    let (local_summary, local_weights) = unpack(&t.local);
    Ok(Forward {
        logit: t.logit,
        global_summary,
        local_summary,
        global_weights,
        local_weights,
    })
}

/// Logit of a single global embedding through the global stream alone.
pub(crate) fn view_logit(row: ArrayView1<'_, f64>, p: &HeadParams) -> Result<f64> {
    let s = p
        .stream(StreamId::Global)
        .ok_or_else(|| Error::invalid("single-view scoring needs the global stream"))?;
    let x = row.insert_axis(Axis(0));
    let t = stream_forward(x, &s)?.expect("one row");
    let h2 = p.dims().hidden2;
    let w = p.head_weights();
    Ok(p.head_bias() + t.summary.iter().zip(&w[..h2]).map(|(a, b)| a * b).sum::<f64>())
}

/// Owned gradient of one stream's tensors.
#[derive(Debug, Clone)]
pub(crate) struct StreamGrad {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub attn: Option<AttnGrad>,
}

#[derive(Debug, Clone)]
pub(crate) struct AttnGrad {
    pub z: Array1<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
}
