//! Sequence models: latent reducer with joint fusion, LSTM and TCN
//! backbones, and classification/regression heads.
//!
//! Frame mode runs each frame's latent block through a small ReLU network
//! and concatenates the result with the raw affect and behavioral blocks
//! before the backbone. Clip mode feeds 49-d clip vectors straight in. The
//! backbone's final timestep drives a single linear head.
//!
//! All parameters live in one flat `Vec<f64>`; gradients use the same
//! layout, which keeps the optimizer, checkpoints and gradient checking
//! layer-agnostic.

mod checkpoint;
mod layers;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Normalizer, CLIP_FEATURE_DIM, CLIP_LAYOUT, FRAME_LAYOUT};
use crate::ingest::{AFFECT_DIM, BEHAVIORAL_DIM, LATENT_DIM};

pub use checkpoint::{
    load_checkpoint, load_checkpoint_expecting, save_checkpoint, CHECKPOINT_FORMAT,
};
use layers::{relu_backward, relu_inplace, CausalConv, Linear, Lstm, LstmCache, Slot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputMode {
    /// Per-frame latent, affect and behavioral blocks. `reducer` lists the
    /// output width of each fully-connected layer applied to the latent block.
    Frame {
        latent_dim: usize,
        affect_dim: usize,
        behavioral_dim: usize,
        reducer: Vec<usize>,
    },
    /// Per-clip aggregate vectors.
    Clip { width: usize },
}

impl InputMode {
    pub fn frame() -> Self {
        InputMode::Frame {
            latent_dim: LATENT_DIM,
            affect_dim: AFFECT_DIM,
            behavioral_dim: BEHAVIORAL_DIM,
            reducer: vec![128, 32],
        }
    }

    pub fn clip() -> Self {
        InputMode::Clip {
            width: CLIP_FEATURE_DIM,
        }
    }

    /// Width of a raw input row.
    pub fn input_width(&self) -> usize {
        match self {
            InputMode::Frame {
                latent_dim,
                affect_dim,
                behavioral_dim,
                ..
            } => latent_dim + affect_dim + behavioral_dim,
            InputMode::Clip { width } => *width,
        }
    }

    /// Width of the per-timestep vector entering the backbone.
    pub fn fused_width(&self) -> usize {
        match self {
            InputMode::Frame {
                latent_dim,
                affect_dim,
                behavioral_dim,
                reducer,
            } => reducer.last().copied().unwrap_or(*latent_dim) + affect_dim + behavioral_dim,
            InputMode::Clip { width } => *width,
        }
    }

    /// Feature-layout tag shared with the normalizer.
    pub fn layout(&self) -> &'static str {
        match self {
            InputMode::Frame { .. } => FRAME_LAYOUT,
            InputMode::Clip { .. } => CLIP_LAYOUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backbone {
    /// Stacked unidirectional LSTM layers with the given hidden sizes.
    Lstm { hidden: Vec<usize> },
    /// Residual blocks of two dilated causal convolutions; dilation 2^i at level i.
    Tcn {
        levels: usize,
        hidden: usize,
        kernel: usize,
        dropout: f64,
    },
}

impl Backbone {
    pub fn lstm() -> Self {
        Backbone::Lstm {
            hidden: vec![128, 64],
        }
    }

    pub fn tcn() -> Self {
        Backbone::Tcn {
            levels: 8,
            hidden: 128,
            kernel: 16,
            dropout: 0.25,
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            Backbone::Lstm { hidden } => hidden.last().copied().unwrap_or(0),
            Backbone::Tcn { hidden, .. } => *hidden,
        }
    }

    /// Number of past timesteps (including the current one) visible at the
    /// last position. Unbounded for recurrent backbones.
    pub fn receptive_field(&self) -> Option<usize> {
        match *self {
            Backbone::Lstm { .. } => None,
            Backbone::Tcn { levels, kernel, .. } => {
                Some(1 + 2 * (kernel - 1) * ((1usize << levels) - 1))
            }
        }
    }

    fn dropout(&self) -> f64 {
        match *self {
            Backbone::Tcn { dropout, .. } => dropout,
            Backbone::Lstm { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    /// One logit per class.
    Multiclass { classes: usize },
    /// One logit.
    Binary,
    /// One real value.
    Regression,
    /// One "y <= i" logit per ordinal threshold on a shared backbone.
    Thresholds { count: usize },
}

impl Head {
    pub fn outputs(&self) -> usize {
        match *self {
            Head::Multiclass { classes } => classes,
            Head::Thresholds { count } => count,
            Head::Binary | Head::Regression => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: InputMode,
    pub backbone: Backbone,
    pub head: Head,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(mode: InputMode, backbone: Backbone, head: Head, seed: u64) -> Self {
        ModelConfig {
            mode,
            backbone,
            head,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        match &self.mode {
            InputMode::Frame {
                latent_dim,
                reducer,
                ..
            } => {
                if *latent_dim == 0 || reducer.contains(&0) {
                    return bad("frame-mode widths must be positive".into());
                }
            }
            InputMode::Clip { width } if *width == 0 => {
                return bad("clip width must be positive".into())
            }
            InputMode::Clip { .. } => {}
        }
        match &self.backbone {
            Backbone::Lstm { hidden } => {
                if hidden.is_empty() || hidden.contains(&0) {
                    return bad("LSTM needs at least one layer with positive width".into());
                }
            }
            Backbone::Tcn {
                levels,
                hidden,
                kernel,
                dropout,
            } => {
                if *levels == 0 || *hidden == 0 || *kernel == 0 || *levels > 30 {
                    return bad("TCN levels, hidden and kernel must be positive".into());
                }
                if !(0.0..1.0).contains(dropout) {
                    return bad(format!("dropout {dropout} outside [0, 1)"));
                }
            }
        }
        match self.head {
            Head::Multiclass { classes } if classes < 2 => {
                return bad("multiclass head needs at least 2 classes".into())
            }
            Head::Thresholds { count } if count < 2 => {
                return bad("threshold head needs at least 2 thresholds".into())
            }
            _ => {}
        }
        Ok(())
    }
}

/// Name, shape and position of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Default)]
struct LayoutBuilder {
    specs: Vec<ParamSpec>,
    bounds: Vec<f64>,
    total: usize,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, shape: Vec<usize>, bound: f64) -> Slot {
        let len: usize = shape.iter().product();
        let slot = Slot {
            offset: self.total,
            len,
        };
        self.specs.push(ParamSpec {
            name,
            shape,
            offset: self.total,
        });
        self.bounds.push(bound);
        self.total += len;
        slot
    }

    fn linear(&mut self, name: &str, inputs: usize, outputs: usize) -> Linear {
        let bound = 1.0 / (inputs as f64).sqrt();
        Linear {
            weight: self.add(format!("{name}.weight"), vec![inputs, outputs], bound),
            bias: self.add(format!("{name}.bias"), vec![outputs], bound),
            inputs,
            outputs,
        }
    }

    fn conv(
        &mut self,
        name: &str,
        inputs: usize,
        outputs: usize,
        kernel: usize,
        dilation: usize,
    ) -> CausalConv {
        let bound = 1.0 / ((inputs * kernel) as f64).sqrt();
        CausalConv {
            weight: self.add(
                format!("{name}.weight"),
                vec![kernel, inputs, outputs],
                bound,
            ),
            bias: self.add(format!("{name}.bias"), vec![outputs], bound),
            inputs,
            outputs,
            kernel,
            dilation,
        }
    }

    fn lstm(&mut self, name: &str, inputs: usize, hidden: usize) -> Lstm {
        let bound = 1.0 / (hidden as f64).sqrt();
        Lstm {
            w_input: self.add(format!("{name}.w_input"), vec![inputs, 4 * hidden], bound),
            w_hidden: self.add(format!("{name}.w_hidden"), vec![hidden, 4 * hidden], bound),
            bias: self.add(format!("{name}.bias"), vec![4 * hidden], bound),
            inputs,
            hidden,
        }
    }
}

#[derive(Debug, Clone)]
struct TcnBlock {
    conv1: CausalConv,
    conv2: CausalConv,
    /// 1x1 projection on the residual path when widths differ.
    downsample: Option<Linear>,
}

#[derive(Debug, Clone)]
enum BackboneArch {
    Lstm(Vec<Lstm>),
    Tcn { blocks: Vec<TcnBlock>, dropout: f64 },
}

#[derive(Debug, Clone)]
struct Arch {
    reducer: Vec<Linear>,
    /// Widths of the affect + behavioral passthrough in frame mode.
    passthrough: usize,
    backbone: BackboneArch,
    head: Linear,
}

impl Arch {
    fn build(config: &ModelConfig) -> (Arch, LayoutBuilder) {
        let mut b = LayoutBuilder::default();
        let mut reducer = Vec::new();
        let mut passthrough = 0;
        if let InputMode::Frame {
            latent_dim,
            affect_dim,
            behavioral_dim,
            reducer: widths,
        } = &config.mode
        {
            let mut prev = *latent_dim;
            for (i, &w) in widths.iter().enumerate() {
                reducer.push(b.linear(&format!("reducer.{i}"), prev, w));
                prev = w;
            }
            passthrough = affect_dim + behavioral_dim;
        }
        let fused = config.mode.fused_width();
        let backbone = match &config.backbone {
            Backbone::Lstm { hidden } => {
                let mut prev = fused;
                let layers = hidden
                    .iter()
                    .enumerate()
                    .map(|(i, &h)| {
                        let l = b.lstm(&format!("lstm.{i}"), prev, h);
                        prev = h;
                        l
                    })
                    .collect();
                BackboneArch::Lstm(layers)
            }
            &Backbone::Tcn {
                levels,
                hidden,
                kernel,
                dropout,
            } => {
                let mut prev = fused;
                let blocks = (0..levels)
                    .map(|i| {
                        let dilation = 1usize << i;
                        let block = TcnBlock {
                            conv1: b.conv(
                                &format!("tcn.{i}.conv1"),
                                prev,
                                hidden,
                                kernel,
                                dilation,
                            ),
                            conv2: b.conv(
                                &format!("tcn.{i}.conv2"),
                                hidden,
                                hidden,
                                kernel,
                                dilation,
                            ),
                            downsample: (prev != hidden)
                                .then(|| b.linear(&format!("tcn.{i}.downsample"), prev, hidden)),
                        };
                        prev = hidden;
                        block
                    })
                    .collect();
                BackboneArch::Tcn { blocks, dropout }
            }
        };
        let head = b.linear(
            "head",
            config.backbone.output_width(),
            config.head.outputs(),
        );
        (
            Arch {
                reducer,
                passthrough,
                backbone,
                head,
            },
            b,
        )
    }
}

#[derive(Debug, Clone)]
struct TcnBlockCache {
    input: Array2<f64>,
    act1: Array2<f64>,
    mask1: Option<Array2<f64>>,
    dropped1: Array2<f64>,
    act2: Array2<f64>,
    mask2: Option<Array2<f64>>,
    output: Array2<f64>,
}

#[derive(Debug, Clone)]
enum BackboneCache {
    Lstm {
        inputs: Vec<Array2<f64>>,
        layers: Vec<LstmCache>,
    },
    Tcn(Vec<TcnBlockCache>),
}

/// Intermediate activations of one forward pass, consumed by [`Model::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    reducer_acts: Vec<Array2<f64>>,
    fused: Array2<f64>,
    backbone: BackboneCache,
    features: Array1<f64>,
    /// Head output (logits or regression value).
    pub output: Vec<f64>,
}

impl ForwardCache {
    /// Output of the backbone at every timestep (top layer / last level).
    pub fn backbone_states(&self) -> &Array2<f64> {
        match &self.backbone {
            BackboneCache::Lstm { layers, .. } => &layers.last().expect("non-empty").hidden,
            BackboneCache::Tcn(blocks) => &blocks.last().expect("non-empty").output,
        }
    }
}

/// A configured network with its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    specs: Vec<ParamSpec>,
    arch: Arch,
    pub params: Vec<f64>,
    /// Input statistics fitted on the training split, if any.
    pub normalizer: Option<Normalizer>,
    training: bool,
}

/// Counts the parameters a configuration would allocate.
pub fn parameter_count(config: &ModelConfig) -> usize {
    Arch::build(config).1.total
}

pub fn build_model(config: ModelConfig) -> Result<Model> {
    config.validate()?;
    let (arch, layout) = Arch::build(&config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = Vec::with_capacity(layout.total);
    for (spec, &bound) in layout.specs.iter().zip(&layout.bounds) {
        params.extend((0..spec.len()).map(|_| rng.random_range(-bound..=bound)));
    }
    Ok(Model {
        config,
        specs: layout.specs,
        arch,
        params,
        normalizer: None,
        training: false,
    })
}

fn dropout_mask<R: Rng + ?Sized>(shape: (usize, usize), p: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep })
}

impl Model {
    pub fn param_specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    /// Switches stochastic layers (dropout) on or off.
    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    fn dropout_active(&self) -> bool {
        self.training && self.config.backbone.dropout() > 0.0
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        let width = self.config.mode.input_width();
        if x.ncols() != width {
            return Err(Error::ShapeMismatch(format!(
                "input has {} columns, model expects {width}",
                x.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::ShapeMismatch("empty input sequence".into()));
        }
        Ok(())
    }

    /// Inference-mode forward pass on a time-major sequence; dropout is off
    /// regardless of the training flag.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_input(&x)?;
        Ok(self.run(x, None::<&mut ChaCha8Rng>).output)
    }

    /// Applies the stored normalizer (if any) and runs [`Model::forward`].
    pub fn predict(&self, raw: &Array2<f64>) -> Result<Vec<f64>> {
        match &self.normalizer {
            Some(n) => self.forward(n.apply_matrix(self.config.mode.layout(), raw)?.view()),
            None => self.forward(raw.view()),
        }
    }

    /// Forward pass that keeps activations for [`Model::backward`]. Dropout
    /// masks are drawn from `rng` when the model is in training mode.
    pub fn forward_train<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<f64>,
        rng: &mut R,
    ) -> Result<ForwardCache> {
        self.check_input(&x)?;
        Ok(if self.dropout_active() {
            self.run(x, Some(rng))
        } else {
            self.run(x, None::<&mut R>)
        })
    }

    fn run<R: Rng + ?Sized>(&self, x: ArrayView2<f64>, mut rng: Option<&mut R>) -> ForwardCache {
        let p = &self.params;
        let mut reducer_acts = Vec::with_capacity(self.arch.reducer.len());
        let fused = if self.arch.reducer.is_empty() {
            x.to_owned()
        } else {
            let latent_dim = self.arch.reducer[0].inputs;
            let mut h = x.slice(s![.., ..latent_dim]).to_owned();
            for layer in &self.arch.reducer {
                h = layer.forward(p, h.view());
                relu_inplace(&mut h);
                reducer_acts.push(h.clone());
            }
            ndarray::concatenate(Axis(1), &[h.view(), x.slice(s![.., latent_dim..])])
                .expect("fusion widths")
        };
        let t = fused.nrows();
        let backbone = match &self.arch.backbone {
            BackboneArch::Lstm(layers) => {
                let mut inputs = Vec::with_capacity(layers.len());
                let mut caches: Vec<LstmCache> = Vec::with_capacity(layers.len());
                for layer in layers {
                    let input = match caches.last() {
                        Some(c) => c.hidden.clone(),
                        None => fused.clone(),
                    };
                    caches.push(layer.forward(p, input.view()));
                    inputs.push(input);
                }
                BackboneCache::Lstm {
                    inputs,
                    layers: caches,
                }
            }
            BackboneArch::Tcn { blocks, dropout } => {
                let mut caches: Vec<TcnBlockCache> = Vec::with_capacity(blocks.len());
                for block in blocks {
                    let input = match caches.last() {
                        Some(c) => c.output.clone(),
                        None => fused.clone(),
                    };
                    let mut act1 = block.conv1.forward(p, input.view());
                    relu_inplace(&mut act1);
                    let mask1 = rng
                        .as_deref_mut()
                        .map(|r| dropout_mask(act1.dim(), *dropout, r));
                    let dropped1 = match &mask1 {
                        Some(m) => &act1 * m,
                        None => act1.clone(),
                    };
                    let mut act2 = block.conv2.forward(p, dropped1.view());
                    relu_inplace(&mut act2);
                    let mask2 = rng
                        .as_deref_mut()
                        .map(|r| dropout_mask(act2.dim(), *dropout, r));
                    let mut output = match &mask2 {
                        Some(m) => &act2 * m,
                        None => act2.clone(),
                    };
                    match &block.downsample {
                        Some(ds) => output += &ds.forward(p, input.view()),
                        None => output += &input,
                    }
                    relu_inplace(&mut output);
                    caches.push(TcnBlockCache {
                        input,
                        act1,
                        mask1,
                        dropped1,
                        act2,
                        mask2,
                        output,
                    });
                }
                BackboneCache::Tcn(caches)
            }
        };
        let mut cache = ForwardCache {
            input: x.to_owned(),
            reducer_acts,
            fused,
            backbone,
            features: Array1::zeros(0),
            output: Vec::new(),
        };
        let features = cache.backbone_states().row(t - 1).to_owned();
        let out = self
            .arch
            .head
            .forward(p, features.view().insert_axis(Axis(0)));
        cache.output = out.row(0).to_vec();
        cache.features = features;
        cache
    }

    /// Accumulates into `grad` the gradient of a loss whose derivative with
    /// respect to the head output is `d_output`.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64], grad: &mut [f64]) -> Result<()> {
        if grad.len() != self.params.len() || d_output.len() != cache.output.len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient buffer {} / output gradient {} vs {} params / {} outputs",
                grad.len(),
                d_output.len(),
                self.params.len(),
                cache.output.len()
            )));
        }
        let p = &self.params;
        let dy = ArrayView2::from_shape((1, d_output.len()), d_output).expect("row");
        let d_features = self
            .arch
            .head
            .backward(
                p,
                grad,
                cache.features.view().insert_axis(Axis(0)),
                dy,
                true,
            )
            .expect("input gradient");
        let t = cache.fused.nrows();
        let mut d_states = Array2::zeros(cache.backbone_states().dim());
        d_states.row_mut(t - 1).assign(&d_features.row(0));

        let d_fused = match (&self.arch.backbone, &cache.backbone) {
            (
                BackboneArch::Lstm(layers),
                BackboneCache::Lstm {
                    inputs,
                    layers: caches,
                },
            ) => {
                let mut d = d_states;
                for ((layer, c), input) in layers.iter().zip(caches).zip(inputs).rev() {
                    d = layer.backward(p, grad, input.view(), c, d.view());
                }
                d
            }
            (BackboneArch::Tcn { blocks, .. }, BackboneCache::Tcn(caches)) => {
                let mut d_out = d_states;
                for (block, c) in blocks.iter().zip(caches).rev() {
                    relu_backward(&mut d_out, &c.output);
                    let mut d_act2 = match &c.mask2 {
                        Some(m) => &d_out * m,
                        None => d_out.clone(),
                    };
                    relu_backward(&mut d_act2, &c.act2);
                    let d_dropped1 =
                        block
                            .conv2
                            .backward(p, grad, c.dropped1.view(), d_act2.view());
                    let mut d_act1 = match &c.mask1 {
                        Some(m) => &d_dropped1 * m,
                        None => d_dropped1,
                    };
                    relu_backward(&mut d_act1, &c.act1);
                    let mut d_in = block.conv1.backward(p, grad, c.input.view(), d_act1.view());
                    match &block.downsample {
                        Some(ds) => {
                            d_in += &ds
                                .backward(p, grad, c.input.view(), d_out.view(), true)
                                .expect("input gradient")
                        }
                        None => d_in += &d_out,
                    }
                    d_out = d_in;
                }
                d_out
            }
            _ => unreachable!("cache built by this model"),
        };

        if let Some(last) = self.arch.reducer.last() {
            let mut d = d_fused.slice(s![.., ..last.outputs]).to_owned();
            let latent_dim = self.arch.reducer[0].inputs;
            let latent = cache.input.slice(s![.., ..latent_dim]);
            for (i, layer) in self.arch.reducer.iter().enumerate().rev() {
                relu_backward(&mut d, &cache.reducer_acts[i]);
                let input = if i == 0 {
                    latent
                } else {
                    cache.reducer_acts[i - 1].view()
                };
                match layer.backward(p, grad, input, d.view(), i > 0) {
                    Some(next) => d = next,
                    None => break,
                }
            }
            debug_assert_eq!(d_fused.ncols(), last.outputs + self.arch.passthrough);
        }

        for spec in &self.specs {
            if grad[spec.offset..spec.offset + spec.len()]
                .iter()
                .any(|g| !g.is_finite())
            {
                return Err(Error::NonFiniteGradient(spec.name.clone()));
            }
        }
        Ok(())
    }

    /// Compares analytic gradients of `L = sum_j w_j * output_j` (fixed
    /// weights `w_j = 1 + j/2`) with central finite differences on every
    /// parameter. Returns the largest relative error
    /// `|a - n| / max(|a|, |n|, 1e-7)`.
    pub fn gradient_check(&self, sample: ArrayView2<f64>, eps: f64) -> Result<f64> {
        if self.dropout_active() {
            return Err(Error::StochasticGradientCheck);
        }
        if !(1e-6..=1e-4).contains(&eps) {
            return Err(Error::InvalidConfig(format!(
                "finite-difference step {eps} outside [1e-6, 1e-4]"
            )));
        }
        let weights: Vec<f64> = (0..self.config.head.outputs())
            .map(|j| 1.0 + j as f64 / 2.0)
            .collect();
        let objective = |m: &Model| -> Result<f64> {
            Ok(m.forward(sample)?
                .iter()
                .zip(&weights)
                .map(|(o, w)| o * w)
                .sum())
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cache = self.forward_train(sample, &mut rng)?;
        let mut analytic = vec![0.0; self.params.len()];
        self.backward(&cache, &weights, &mut analytic)?;

        let mut probe = self.clone();
        let mut worst = 0.0f64;
        for (i, &a) in analytic.iter().enumerate() {
            let orig = probe.params[i];
            probe.params[i] = orig + eps;
            let plus = objective(&probe)?;
            probe.params[i] = orig - eps;
            let minus = objective(&probe)?;
            probe.params[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max(rel);
        }
        Ok(worst)
    }
}
