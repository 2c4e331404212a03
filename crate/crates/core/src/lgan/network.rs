//! Generator and discriminator stacks built from ConvLSTM layers.

use rand::Rng;

use crate::nn::{ComputeGraph, Conv2dOptions, NodeId};
use crate::recurrent::{unroll_graph, ConvLstmNodes, ConvLstmParams, ConvLstmShape, GraphState, CONVLSTM_TENSORS};
use crate::{Error, Result, Tensor};

/// How a flat record maps onto a sequence of single-channel grids.
///
/// A record holds `steps` blocks of `height * width` values. Block 0 is the
/// most recent frame, so the sequence fed to the networks runs from the last
/// block to the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordLayout {
    pub steps: usize,
    pub height: usize,
    pub width: usize,
}

impl RecordLayout {
    pub fn new(steps: usize, height: usize, width: usize) -> Result<Self> {
        if steps == 0 || height == 0 || width == 0 {
            return Err(Error::Config(format!("record layout {steps}x{height}x{width} has a zero extent")));
        }
        Ok(RecordLayout { steps, height, width })
    }

    /// Breath records: the current breath plus `previous` earlier breaths.
    pub fn breaths(previous: usize, features: usize) -> Result<Self> {
        Self::new(previous + 1, 1, features)
    }

    /// A single 12 x 12 frame.
    pub fn ecg() -> Self {
        RecordLayout { steps: 1, height: 12, width: 12 }
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    pub fn features(&self) -> usize {
        self.steps * self.frame_len()
    }
}

fn kernel_for(kernel: usize, grid: (usize, usize)) -> (usize, usize) {
    (kernel.min(grid.0), kernel.min(grid.1))
}

fn pool_window(grid: (usize, usize)) -> (usize, usize) {
    (grid.0.min(2), grid.1.min(2))
}

fn convlstm_shapes(shape: ConvLstmShape) -> Vec<Vec<usize>> {
    ConvLstmParams::zeros(shape).tensors().iter().map(|t| t.shape().to_vec()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorSpec {
    pub layout: RecordLayout,
    pub repeat_count: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
    pub n_classes: usize,
}

impl DiscriminatorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repeat_count == 0 || self.hidden_channels == 0 || self.kernel == 0 || self.n_classes == 0 {
            return Err(Error::Config("discriminator counts must be positive".into()));
        }
        Ok(())
    }

    /// ConvLSTM shape of every repeated module.
    pub fn layers(&self) -> Vec<ConvLstmShape> {
        let mut grid = (self.layout.height, self.layout.width);
        let mut in_channels = 1;
        let mut out = Vec::with_capacity(self.repeat_count);
        for _ in 0..self.repeat_count {
            out.push(ConvLstmShape {
                kernel: kernel_for(self.kernel, grid),
                in_channels,
                hidden_channels: self.hidden_channels,
                grid,
            });
            let w = pool_window(grid);
            grid = (grid.0.div_ceil(w.0), grid.1.div_ceil(w.1));
            in_channels = self.hidden_channels;
        }
        out
    }

    pub fn feature_width(&self) -> usize {
        let mut grid = (self.layout.height, self.layout.width);
        for _ in 0..self.repeat_count {
            let w = pool_window(grid);
            grid = (grid.0.div_ceil(w.0), grid.1.div_ceil(w.1));
        }
        grid.0 * grid.1 * self.hidden_channels
    }

    /// Shapes in parameter order: every layer's 15 tensors, then
    /// `real_w [F+K, 1]`, `real_b [1]`, `class_w [F, K]`, `class_b [K]`.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut s: Vec<Vec<usize>> = self.layers().into_iter().flat_map(convlstm_shapes).collect();
        let f = self.feature_width();
        let k = self.n_classes;
        s.push(vec![f + k, 1]);
        s.push(vec![1]);
        s.push(vec![f, k]);
        s.push(vec![k]);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub layout: RecordLayout,
    pub noise_dim: usize,
    pub seed_channels: usize,
    pub encoder: Vec<usize>,
    pub decoder: Vec<usize>,
    pub kernel: usize,
    pub n_classes: usize,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.noise_dim == 0 || self.seed_channels == 0 || self.kernel == 0 || self.n_classes == 0 {
            return Err(Error::Config("generator counts must be positive".into()));
        }
        if self.encoder.is_empty() {
            return Err(Error::Config("generator needs at least one encoder layer".into()));
        }
        if self.encoder.iter().chain(&self.decoder).any(|&c| c == 0) {
            return Err(Error::Config("generator layer widths must be positive".into()));
        }
        Ok(())
    }

    fn grid(&self) -> (usize, usize) {
        (self.layout.height, self.layout.width)
    }

    pub fn layers(&self) -> Vec<ConvLstmShape> {
        let mut in_channels = self.seed_channels;
        let mut out = Vec::new();
        for &h in self.encoder.iter().chain(&self.decoder) {
            out.push(ConvLstmShape {
                kernel: kernel_for(self.kernel, self.grid()),
                in_channels,
                hidden_channels: h,
                grid: self.grid(),
            });
            in_channels = h;
        }
        out
    }

    fn last_channels(&self) -> usize {
        *self.decoder.last().or(self.encoder.last()).unwrap_or(&self.seed_channels)
    }

    fn seed_width(&self) -> usize {
        self.layout.features() * self.seed_channels
    }

    /// Shapes in parameter order: `in_w [Z+K, T*H*W*C0]`, `in_b`, every
    /// encoder then decoder layer's 15 tensors, `out_k [1, 1, C, 1]`, `out_b [1]`.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut s = vec![vec![self.noise_dim + self.n_classes, self.seed_width()], vec![self.seed_width()]];
        s.extend(self.layers().into_iter().flat_map(convlstm_shapes));
        s.push(vec![1, 1, self.last_channels(), 1]);
        s.push(vec![1]);
        s
    }
}

fn init_params<R: Rng + ?Sized>(shapes: &[Vec<usize>], bound: f64, rng: &mut R) -> Vec<Tensor> {
    shapes.iter().map(|s| Tensor::uniform(s, bound, rng)).collect()
}

fn check_params(shapes: &[Vec<usize>], params: &[Tensor], what: &str) -> Result<()> {
    if shapes.len() != params.len() {
        return Err(Error::Dimension(format!("{what} expects {} tensors, got {}", shapes.len(), params.len())));
    }
    for (i, (s, p)) in shapes.iter().zip(params).enumerate() {
        if p.shape() != s.as_slice() {
            return Err(Error::Dimension(format!("{what} tensor {i}: shape {:?}, expected {s:?}", p.shape())));
        }
    }
    Ok(())
}

fn bind_all(g: &mut ComputeGraph, params: &[Tensor], trainable: bool) -> Vec<NodeId> {
    params.iter().map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) }).collect()
}

fn zero_state(g: &mut ComputeGraph, n: usize, grid: (usize, usize), channels: usize) -> GraphState {
    let h = g.constant(Tensor::zeros(&[n, grid.0, grid.1, channels]));
    let c = g.constant(Tensor::zeros(&[n, grid.0, grid.1, channels]));
    GraphState { h, c }
}

/// Splits `[N, F]` records into chronological `[N, H, W, 1]` frames.
pub fn record_frames(g: &mut ComputeGraph, x: NodeId, layout: RecordLayout) -> Result<Vec<NodeId>> {
    let shape = g.value(x).shape().to_vec();
    if shape.len() != 2 || shape[1] != layout.features() {
        return Err(Error::Dimension(format!("records {shape:?} do not match layout width {}", layout.features())));
    }
    let n = shape[0];
    let fl = layout.frame_len();
    (0..layout.steps)
        .map(|t| {
            let block = layout.steps - 1 - t;
            let cols = g.columns(x, block * fl, fl)?;
            g.reshape(cols, &[n, layout.height, layout.width, 1])
        })
        .collect()
}

/// Nodes produced by one discriminator pass.
#[derive(Debug, Clone, Copy)]
pub struct DiscriminatorNodes {
    pub features: NodeId,
    pub real_logit: NodeId,
    pub real_prob: NodeId,
    pub class_probs: NodeId,
}

/// Discriminator pass over `[N, F]` records with a `[N, K]` label condition.
///
/// The label enters only the real/fake head, concatenated to the flattened
/// features; the class head sees the features alone.
pub fn discriminator_graph(
    g: &mut ComputeGraph,
    spec: &DiscriminatorSpec,
    ids: &[NodeId],
    x: NodeId,
    label: NodeId,
) -> Result<DiscriminatorNodes> {
    let layers = spec.layers();
    let expected = layers.len() * CONVLSTM_TENSORS + 4;
    if ids.len() != expected {
        return Err(Error::Dimension(format!("discriminator expects {expected} parameter nodes, got {}", ids.len())));
    }
    let n = g.value(x).shape()[0];
    let lshape = g.value(label).shape().to_vec();
    if lshape != [n, spec.n_classes] {
        return Err(Error::Dimension(format!("label condition {lshape:?}, expected [{n}, {}]", spec.n_classes)));
    }
    let mut seq = record_frames(g, x, spec.layout)?;
    for (l, shape) in layers.iter().enumerate() {
        let cell = ConvLstmNodes::from_ids(&ids[l * CONVLSTM_TENSORS..(l + 1) * CONVLSTM_TENSORS])?;
        let init = zero_state(g, n, shape.grid, shape.hidden_channels);
        let states = unroll_graph(&cell, g, &seq, init)?;
        let window = pool_window(shape.grid);
        seq = states
            .iter()
            .map(|s| if window == (1, 1) { Ok(s.h) } else { g.max_pool(s.h, window) })
            .collect::<Result<_>>()?;
    }
    let last = *seq.last().expect("non-empty sequence");
    let features = g.reshape(last, &[n, spec.feature_width()])?;
    let head = &ids[layers.len() * CONVLSTM_TENSORS..];
    let joined = g.concat_columns(&[features, label])?;
    let real_logit = g.dense(joined, head[0], head[1])?;
    let real_prob = g.sigmoid(real_logit);
    let class_logits = g.dense(features, head[2], head[3])?;
    let class_probs = g.softmax(class_logits);
    Ok(DiscriminatorNodes { features, real_logit, real_prob, class_probs })
}

/// Generator pass from `[N, Z]` noise and a `[N, K]` label condition to `[N, F]` records.
pub fn generator_graph(
    g: &mut ComputeGraph,
    spec: &GeneratorSpec,
    ids: &[NodeId],
    z: NodeId,
    condition: NodeId,
) -> Result<NodeId> {
    let layers = spec.layers();
    let expected = 2 + layers.len() * CONVLSTM_TENSORS + 2;
    if ids.len() != expected {
        return Err(Error::Dimension(format!("generator expects {expected} parameter nodes, got {}", ids.len())));
    }
    let n = g.value(z).shape()[0];
    let input = g.concat_columns(&[z, condition])?;
    let seed = g.dense(input, ids[0], ids[1])?;
    let seed = g.relu(seed);
    let lay = spec.layout;
    let chunk = lay.frame_len() * spec.seed_channels;
    let mut seq = (0..lay.steps)
        .map(|t| {
            let cols = g.columns(seed, t * chunk, chunk)?;
            g.reshape(cols, &[n, lay.height, lay.width, spec.seed_channels])
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = spec.grid();
    let mut encoded: Option<GraphState> = None;
    for (l, shape) in layers.iter().enumerate() {
        let off = 2 + l * CONVLSTM_TENSORS;
        let cell = ConvLstmNodes::from_ids(&ids[off..off + CONVLSTM_TENSORS])?;
        let first_decoder = l == spec.encoder.len();
        let init = match encoded {
            Some(s) if first_decoder && spec.encoder.last() == Some(&shape.hidden_channels) => s,
            _ => zero_state(g, n, grid, shape.hidden_channels),
        };
        let states = unroll_graph(&cell, g, &seq, init)?;
        if l + 1 == spec.encoder.len() {
            encoded = states.last().copied();
        }
        seq = states.iter().map(|s| s.h).collect();
    }
    let out_k = ids[expected - 2];
    let out_b = ids[expected - 1];
    let mut frames = Vec::with_capacity(seq.len());
    for &h in &seq {
        let y = g.conv2d(h, out_k, Conv2dOptions::same())?;
        let y = g.add(y, out_b)?;
        frames.push(g.reshape(y, &[n, lay.frame_len()])?);
    }
    frames.reverse();
    g.concat_columns(&frames)
}

pub fn one_hot(labels: &[usize], k: usize) -> Tensor {
    let mut t = Tensor::zeros(&[labels.len(), k]);
    for (i, &l) in labels.iter().enumerate() {
        t.data_mut()[i * k + l] = 1.0;
    }
    t
}

pub fn uniform_condition(n: usize, k: usize) -> Tensor {
    Tensor::full(&[n, k], 1.0 / k as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub spec: DiscriminatorSpec,
    pub params: Vec<Tensor>,
}

/// Output of a discriminator pass on plain tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorOutput {
    pub real_logit: Vec<f64>,
    pub real_prob: Vec<f64>,
    /// `[N, K]`
    pub class_probs: Tensor,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(spec: DiscriminatorSpec, bound: f64, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let params = init_params(&spec.param_shapes(), bound, rng);
        Ok(Discriminator { spec, params })
    }

    pub fn from_params(spec: DiscriminatorSpec, params: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        check_params(&spec.param_shapes(), &params, "discriminator")?;
        Ok(Discriminator { spec, params })
    }

    pub fn bind(&self, g: &mut ComputeGraph, trainable: bool) -> Vec<NodeId> {
        bind_all(g, &self.params, trainable)
    }

    /// Forward pass on `[N, F]` records with a `[N, K]` condition.
    pub fn forward(&self, x: &Tensor, label: &Tensor) -> Result<DiscriminatorOutput> {
        let mut g = ComputeGraph::new();
        let ids = self.bind(&mut g, false);
        let xn = g.constant(x.clone());
        let ln = g.constant(label.clone());
        let out = discriminator_graph(&mut g, &self.spec, &ids, xn, ln)?;
        Ok(DiscriminatorOutput {
            real_logit: g.value(out.real_logit).data().to_vec(),
            real_prob: g.value(out.real_prob).data().to_vec(),
            class_probs: g.value(out.class_probs).clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub spec: GeneratorSpec,
    pub params: Vec<Tensor>,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(spec: GeneratorSpec, bound: f64, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let params = init_params(&spec.param_shapes(), bound, rng);
        Ok(Generator { spec, params })
    }

    pub fn from_params(spec: GeneratorSpec, params: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        check_params(&spec.param_shapes(), &params, "generator")?;
        Ok(Generator { spec, params })
    }

    pub fn bind(&self, g: &mut ComputeGraph, trainable: bool) -> Vec<NodeId> {
        bind_all(g, &self.params, trainable)
    }

    /// Records `[N, F]` from noise `[N, Z]` and condition `[N, K]`.
    pub fn generate(&self, z: &Tensor, condition: &Tensor) -> Result<Tensor> {
        let mut g = ComputeGraph::new();
        let ids = self.bind(&mut g, false);
        let zn = g.constant(z.clone());
        let cn = g.constant(condition.clone());
        let out = generator_graph(&mut g, &self.spec, &ids, zn, cn)?;
        Ok(g.value(out).clone())
    }
}
