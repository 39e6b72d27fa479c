//! Two-block residual convnet for single-channel images.
//!
//! ```text
//! x -> [conv3x3 -> relu -> conv3x3 (+ skip) -> relu] -> maxpool 2x2
//!   -> [conv3x3 -> relu -> conv3x3 (+ skip) -> relu] -> global avg pool -> fc -> sigmoid
//! ```
//!
//! The skip is a bias-free 1x1 projection where the block changes the channel
//! count and the identity otherwise. Activations are NHWC.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, Dims, ReluBackward};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvNetConfig {
    pub input_h: usize,
    pub input_w: usize,
    #[serde(default = "default_block1")]
    pub block1_filters: usize,
    #[serde(default = "default_block2")]
    pub block2_filters: usize,
}

fn default_block1() -> usize {
    32
}

fn default_block2() -> usize {
    64
}

impl ConvNetConfig {
    pub fn new(input_h: usize, input_w: usize) -> Self {
        Self {
            input_h,
            input_w,
            block1_filters: default_block1(),
            block2_filters: default_block2(),
        }
    }

    pub fn with_filters(mut self, block1: usize, block2: usize) -> Self {
        self.block1_filters = block1;
        self.block2_filters = block2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_h < 4 || self.input_w < 4 {
            return Err(Error::invalid(format!(
                "input must be at least 4x4, got {}x{}",
                self.input_h, self.input_w
            )));
        }
        if self.block1_filters == 0 || self.block2_filters == 0 {
            return Err(Error::invalid("filter counts must be positive"));
        }
        Ok(())
    }

    /// Parameter tensors in their stable order.
    pub fn layer_manifest(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (c1, c2) = (self.block1_filters, self.block2_filters);
        let mut out = vec![
            ("block1.conv_a.weight", vec![3, 3, 1, c1]),
            ("block1.conv_a.bias", vec![c1]),
            ("block1.conv_b.weight", vec![3, 3, c1, c1]),
            ("block1.conv_b.bias", vec![c1]),
        ];
        if c1 != 1 {
            out.push(("block1.skip.weight", vec![1, c1]));
        }
        out.extend([
            ("block2.conv_a.weight", vec![3, 3, c1, c2]),
            ("block2.conv_a.bias", vec![c2]),
            ("block2.conv_b.weight", vec![3, 3, c2, c2]),
            ("block2.conv_b.bias", vec![c2]),
        ]);
        if c1 != c2 {
            out.push(("block2.skip.weight", vec![c1, c2]));
        }
        out.extend([("fc.weight", vec![c2]), ("fc.bias", vec![1])]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.layer_manifest().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Slots {
    c1a_w: usize,
    c1a_b: usize,
    c1b_w: usize,
    c1b_b: usize,
    skip1: Option<usize>,
    c2a_w: usize,
    c2a_b: usize,
    c2b_w: usize,
    c2b_b: usize,
    skip2: Option<usize>,
    fc_w: usize,
    fc_b: usize,
}

impl Slots {
    fn of(config: &ConvNetConfig) -> Self {
        let skip1 = config.block1_filters != 1;
        let skip2 = config.block1_filters != config.block2_filters;
        let b2 = 4 + usize::from(skip1);
        let fc = b2 + 4 + usize::from(skip2);
        Slots {
            c1a_w: 0,
            c1a_b: 1,
            c1b_w: 2,
            c1b_b: 3,
            skip1: skip1.then_some(4),
            c2a_w: b2,
            c2a_b: b2 + 1,
            c2b_w: b2 + 2,
            c2b_b: b2 + 3,
            skip2: skip2.then_some(b2 + 4),
            fc_w: fc,
            fc_b: fc + 1,
        }
    }
}

/// Weights of a [`ConvNetConfig`] network. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ConvNetConfig,
    tensors: Vec<Tensor>,
}

pub type Gradients = ModelParams;

impl ModelParams {
    pub fn zeros(config: ConvNetConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config
            .layer_manifest()
            .into_iter()
            .map(|(_, shape)| Tensor::zeros(shape))
            .collect();
        Ok(Self { config, tensors })
    }

    /// He-uniform weights `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero biases.
    pub fn init<R: Rng + ?Sized>(config: ConvNetConfig, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        for ((name, shape), t) in config.layer_manifest().iter().zip(&mut params.tensors) {
            if name.ends_with(".bias") {
                continue;
            }
            let fan_in: usize = shape[..shape.len() - 1].iter().product::<usize>().max(1);
            let limit = (6.0 / fan_in as f64).sqrt();
            for v in t.data_mut() {
                *v = rng.random_range(-limit..limit);
            }
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config,
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect(),
        }
    }

    pub fn config(&self) -> &ConvNetConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// `(name, tensor)` pairs in stable order.
    pub fn named(&self) -> impl Iterator<Item = (&'static str, &Tensor)> {
        self.config
            .layer_manifest()
            .into_iter()
            .map(|(n, _)| n)
            .zip(self.tensors.iter())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.named().find(|(n, _)| *n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = self.config.layer_manifest().iter().position(|(n, _)| *n == name)?;
        Some(&mut self.tensors[i])
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn unflatten(config: ConvNetConfig, flat: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let total = config.param_count();
        if flat.len() != total {
            return Err(Error::invalid(format!(
                "parameter vector has {} values, configuration needs {total}",
                flat.len()
            )));
        }
        let mut offset = 0;
        for t in &mut params.tensors {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(params)
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_all_zero(&self) -> bool {
        self.tensors.iter().all(|t| t.data().iter().all(|&v| v == 0.0))
    }

    fn t(&self, i: usize) -> &[f64] {
        self.tensors[i].data()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<Dims> {
        let c = &self.config;
        match batch.shape() {
            &[b, h, w, 1] if h == c.input_h && w == c.input_w && b > 0 => Ok(Dims {
                batch: b,
                height: h,
                width: w,
            }),
            other => Err(Error::ShapeMismatch {
                layer: "input".into(),
                expected: vec![0, c.input_h, c.input_w, 1],
                found: other.to_vec(),
            }),
        }
    }

    /// Class probabilities and the activations needed by [`ModelParams::backward`].
    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let d1 = self.check_batch(batch)?;
        let s = Slots::of(&self.config);
        let (c1, c2) = (self.config.block1_filters, self.config.block2_filters);
        let x = batch.data().to_vec();
        let (cols1a, a1a, cols1b, a1b) = block_forward(self, &x, d1, 1, c1, s.c1a_w, s.c1a_b, s.c1b_w, s.c1b_b, s.skip1);
        let (pooled, argmax) = layers::maxpool2(&a1b, d1, c1);
        let d2 = Dims {
            batch: d1.batch,
            height: d1.height / 2,
            width: d1.width / 2,
        };
        let (cols2a, a2a, cols2b, a2b) =
            block_forward(self, &pooled, d2, c1, c2, s.c2a_w, s.c2a_b, s.c2b_w, s.c2b_b, s.skip2);
        let gap = layers::global_avg_pool(&a2b, d2, c2);
        let logits = layers::linear_rows(&gap, d1.batch, c2, self.t(s.fc_w), Some(self.t(s.fc_b)), 1);
        let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let prob = Tensor::new(vec![d1.batch], probs)?;
        prob.ensure_finite("forward output")?;
        let cache = ForwardCache {
            config: self.config,
            d1,
            d2,
            x,
            cols1a,
            a1a,
            cols1b,
            a1b,
            argmax,
            pooled,
            cols2a,
            a2a,
            cols2b,
            a2b,
            gap,
            logits,
            consumed: false,
        };
        Ok((prob, cache))
    }

    /// Probabilities for an arbitrarily large batch, evaluated in chunks.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<f64>> {
        Ok(self.predict_logits(batch)?.into_iter().map(sigmoid).collect())
    }

    pub fn predict_logits(&self, batch: &Tensor) -> Result<Vec<f64>> {
        let d = self.check_batch(batch)?;
        let per = d.height * d.width;
        let mut out = Vec::with_capacity(d.batch);
        for chunk in batch.data().chunks(PREDICT_CHUNK * per) {
            let t = Tensor::new(vec![chunk.len() / per, d.height, d.width, 1], chunk.to_vec())?;
            let (_, cache) = self.forward(&t)?;
            out.extend_from_slice(&cache.logits);
        }
        Ok(out)
    }

    /// Parameter gradients given `dloss/dlogit` per sample. Consumes the cache.
    pub fn backward(&self, cache: &mut ForwardCache, dlogits: &[f64]) -> Result<Gradients> {
        let (grads, _) = self.backprop(cache, dlogits, ReluBackward::Standard, true, false)?;
        Ok(grads.expect("requested"))
    }

    /// Gradient of the upstream signal with respect to the input batch, shaped
    /// like the input. Consumes the cache.
    pub fn input_gradient(&self, cache: &mut ForwardCache, dlogits: &[f64], mode: ReluBackward) -> Result<Tensor> {
        let (_, dx) = self.backprop(cache, dlogits, mode, false, true)?;
        let d = cache.d1;
        Tensor::new(vec![d.batch, d.height, d.width, 1], dx.expect("requested"))
    }

    fn backprop(
        &self,
        cache: &mut ForwardCache,
        dlogits: &[f64],
        mode: ReluBackward,
        want_params: bool,
        want_input: bool,
    ) -> Result<(Option<Gradients>, Option<Vec<f64>>)> {
        if cache.consumed {
            return Err(Error::CacheConsumed);
        }
        if cache.config != self.config {
            return Err(Error::invalid("forward cache comes from a different configuration"));
        }
        let (d1, d2) = (cache.d1, cache.d2);
        if dlogits.len() != d1.batch {
            return Err(Error::invalid(format!(
                "expected {} logit gradients, got {}",
                d1.batch,
                dlogits.len()
            )));
        }
        cache.consumed = true;
        let s = Slots::of(&self.config);
        let (c1, c2) = (self.config.block1_filters, self.config.block2_filters);
        let mut g = self.zeros_like();

        // head
        if want_params {
            layers::linear_rows_weight_grad(&cache.gap, d1.batch, c2, dlogits, 1, g.tensors[s.fc_w].data_mut());
            g.tensors[s.fc_b].data_mut()[0] = dlogits.iter().sum();
        }
        let dgap = layers::linear_rows_input_grad(dlogits, d1.batch, 1, self.t(s.fc_w), c2);
        let da2b = layers::global_avg_pool_backward(&dgap, d2, c2);

        let dpooled = self.block_backward(
            &mut g,
            BlockCache {
                input: &cache.pooled,
                cols_a: &cache.cols2a,
                a: &cache.a2a,
                cols_b: &cache.cols2b,
                out: &cache.a2b,
            },
            da2b,
            d2,
            (c1, c2),
            (s.c2a_w, s.c2a_b, s.c2b_w, s.c2b_b, s.skip2),
            mode,
            want_params,
            true,
        );
        let da1b = layers::maxpool2_backward(&dpooled.expect("requested"), &cache.argmax, cache.a1b.len());
        let dx = self.block_backward(
            &mut g,
            BlockCache {
                input: &cache.x,
                cols_a: &cache.cols1a,
                a: &cache.a1a,
                cols_b: &cache.cols1b,
                out: &cache.a1b,
            },
            da1b,
            d1,
            (1, c1),
            (s.c1a_w, s.c1a_b, s.c1b_w, s.c1b_b, s.skip1),
            mode,
            want_params,
            want_input,
        );
        if want_params {
            for (t, (name, _)) in g.tensors.iter().zip(self.config.layer_manifest()) {
                t.ensure_finite(name)?;
            }
        }
        Ok((want_params.then_some(g), dx))
    }

    #[allow(clippy::too_many_arguments)]
    fn block_backward(
        &self,
        g: &mut Gradients,
        cache: BlockCache<'_>,
        mut dout: Vec<f64>,
        d: Dims,
        (cin, cout): (usize, usize),
        (wa, ba, wb, bb, skip): (usize, usize, usize, usize, Option<usize>),
        mode: ReluBackward,
        want_params: bool,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let rows = d.pixels();
        layers::relu_backward(&mut dout, cache.out, mode);
        // dout is now the gradient at the pre-activation sum
        if want_params {
            layers::linear_rows_weight_grad(cache.cols_b, rows, 9 * cout, &dout, cout, g.tensors[wb].data_mut());
            layers::bias_grad(&dout, cout, g.tensors[bb].data_mut());
            if let Some(sk) = skip {
                layers::linear_rows_weight_grad(cache.input, rows, cin, &dout, cout, g.tensors[sk].data_mut());
            }
        }
        let dcols_b = layers::linear_rows_input_grad(&dout, rows, cout, self.t(wb), 9 * cout);
        let mut da = layers::col2im3(&dcols_b, d, cout);
        layers::relu_backward(&mut da, cache.a, mode);
        if want_params {
            layers::linear_rows_weight_grad(cache.cols_a, rows, 9 * cin, &da, cout, g.tensors[wa].data_mut());
            layers::bias_grad(&da, cout, g.tensors[ba].data_mut());
        }
        if !want_input {
            return None;
        }
        let dcols_a = layers::linear_rows_input_grad(&da, rows, cout, self.t(wa), 9 * cin);
        let mut dx = layers::col2im3(&dcols_a, d, cin);
        match skip {
            Some(sk) => {
                let dskip = layers::linear_rows_input_grad(&dout, rows, cout, self.t(sk), cin);
                for (a, b) in dx.iter_mut().zip(&dskip) {
                    *a += b;
                }
            }
            None => {
                for (a, b) in dx.iter_mut().zip(&dout) {
                    *a += b;
                }
            }
        }
        Some(dx)
    }
}

const PREDICT_CHUNK: usize = 256;

struct BlockCache<'a> {
    input: &'a [f64],
    cols_a: &'a [f64],
    a: &'a [f64],
    cols_b: &'a [f64],
    out: &'a [f64],
}

#[allow(clippy::too_many_arguments)]
fn block_forward(
    p: &ModelParams,
    x: &[f64],
    d: Dims,
    cin: usize,
    cout: usize,
    wa: usize,
    ba: usize,
    wb: usize,
    bb: usize,
    skip: Option<usize>,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows = d.pixels();
    let cols_a = layers::im2col3(x, d, cin);
    let mut a = layers::linear_rows(&cols_a, rows, 9 * cin, p.t(wa), Some(p.t(ba)), cout);
    layers::relu_inplace(&mut a);
    let cols_b = layers::im2col3(&a, d, cout);
    let mut out = layers::linear_rows(&cols_b, rows, 9 * cout, p.t(wb), Some(p.t(bb)), cout);
    match skip {
        Some(sk) => layers::gemm(rows, cin, cout, x, (cin, 1), p.t(sk), (cout, 1), 1.0, &mut out),
        None => {
            for (o, v) in out.iter_mut().zip(x) {
                *o += v;
            }
        }
    }
    layers::relu_inplace(&mut out);
    (cols_a, a, cols_b, out)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Activations retained by a forward pass. A cache backs exactly one
/// backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    config: ConvNetConfig,
    d1: Dims,
    d2: Dims,
    x: Vec<f64>,
    cols1a: Vec<f64>,
    a1a: Vec<f64>,
    cols1b: Vec<f64>,
    a1b: Vec<f64>,
    argmax: Vec<u32>,
    pooled: Vec<f64>,
    cols2a: Vec<f64>,
    a2a: Vec<f64>,
    cols2b: Vec<f64>,
    a2b: Vec<f64>,
    gap: Vec<f64>,
    logits: Vec<f64>,
    consumed: bool,
}

impl ForwardCache {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Output of residual block 1 or 2 (after the final ReLU), NHWC.
    pub fn block_output(&self, block: usize) -> Option<&[f64]> {
        match block {
            1 => Some(&self.a1b),
            2 => Some(&self.a2b),
            _ => None,
        }
    }

    /// Identifies the linear region the forward pass landed in: one entry per
    /// ReLU unit (active or not) followed by every max-pool winner index. Two
    /// inputs with equal patterns are related by one affine map up to the
    /// head, so finite differences between them involve no kinks.
    pub fn linear_region(&self) -> Vec<u32> {
        [&self.a1a, &self.a1b, &self.a2a, &self.a2b]
            .into_iter()
            .flat_map(|a| a.iter().map(|&v| u32::from(v > 0.0)))
            .chain(self.argmax.iter().copied())
            .collect()
    }
}

/// Guided-backpropagation saliency of the pre-sigmoid logit for one image,
/// shaped `[H, W]`.
pub fn guided_backprop(params: &ModelParams, image: &Tensor) -> Result<Tensor> {
    let c = params.config();
    let batch = match image.shape() {
        &[h, w] | &[1, h, w, 1] if h == c.input_h && w == c.input_w => {
            Tensor::new(vec![1, h, w, 1], image.data().to_vec())?
        }
        other => {
            return Err(Error::ShapeMismatch {
                layer: "input".into(),
                expected: vec![c.input_h, c.input_w],
                found: other.to_vec(),
            })
        }
    };
    let (_, mut cache) = params.forward(&batch)?;
    let dx = params.input_gradient(&mut cache, &[1.0], ReluBackward::Guided)?;
    dx.reshape(vec![c.input_h, c.input_w])
}
