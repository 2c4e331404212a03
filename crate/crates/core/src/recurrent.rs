//! LSTM and ConvLSTM cells.
//!
//! Both cells are expressed as [`ComputeGraph`] operations, so unrolling a
//! sequence inside a graph gives backpropagation through time for free. The
//! tensor-level helpers ([`lstm_step`], [`convlstm_step`], [`unroll`]) build a
//! throwaway graph and return plain values.
//!
//! Conventions: LSTM inputs are `[N, in]` (or `[in]`), weights multiply on the
//! right (`x · W_x*`). ConvLSTM inputs are `[N, H, W, C]` (or `[H, W, C]`),
//! kernels are `[kh, kw, Cin, Ch]` applied with same padding, peepholes are
//! `[H, W, Ch]` Hadamard weights.

use rand::Rng;

use crate::error::{dim_err, Error, Result};
use crate::nn::{ComputeGraph, Conv2dOptions, NodeId};
use crate::tensor::Tensor;

/// Hidden and cell state inside a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphState {
    pub h: NodeId,
    pub c: NodeId,
}

/// Gate activations of one step, kept for inspection.
#[derive(Clone, Copy, Debug)]
pub struct GateNodes {
    pub input: NodeId,
    pub forget: NodeId,
    pub candidate: NodeId,
    pub output: NodeId,
}

pub trait GraphCell {
    fn step_with_gates(&self, g: &mut ComputeGraph, x: NodeId, prev: GraphState) -> Result<(GraphState, GateNodes)>;

    fn step(&self, g: &mut ComputeGraph, x: NodeId, prev: GraphState) -> Result<GraphState> {
        self.step_with_gates(g, x, prev).map(|(s, _)| s)
    }
}

/// Runs `cell` over `inputs` in order; `states[t]` follows `inputs[t]`.
pub fn unroll_graph<C: GraphCell + ?Sized>(
    cell: &C,
    g: &mut ComputeGraph,
    inputs: &[NodeId],
    init: GraphState,
) -> Result<Vec<GraphState>> {
    if inputs.is_empty() {
        return Err(Error::Contract("cannot unroll an empty sequence".into()));
    }
    let mut states = Vec::with_capacity(inputs.len());
    let mut prev = init;
    for &x in inputs {
        prev = cell.step(g, x, prev)?;
        states.push(prev);
    }
    Ok(states)
}

fn gate_pre(
    g: &mut ComputeGraph,
    x_term: NodeId,
    h_term: NodeId,
    peephole: Option<NodeId>,
    bias: NodeId,
) -> Result<NodeId> {
    let mut s = g.add(x_term, h_term)?;
    if let Some(p) = peephole {
        s = g.add(s, p)?;
    }
    g.add(s, bias)
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

/// Weights of a fully connected LSTM cell.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_xi: Tensor,
    pub w_hi: Tensor,
    pub w_xf: Tensor,
    pub w_hf: Tensor,
    pub w_xc: Tensor,
    pub w_hc: Tensor,
    pub w_xo: Tensor,
    pub w_ho: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_c: Tensor,
    pub b_o: Tensor,
}

pub const LSTM_TENSORS: usize = 12;

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let wx = Tensor::zeros(&[input, hidden]);
        let wh = Tensor::zeros(&[hidden, hidden]);
        let b = Tensor::zeros(&[hidden]);
        Self {
            w_xi: wx.clone(),
            w_hi: wh.clone(),
            w_xf: wx.clone(),
            w_hf: wh.clone(),
            w_xc: wx.clone(),
            w_hc: wh.clone(),
            w_xo: wx,
            w_ho: wh,
            b_i: b.clone(),
            b_f: b.clone(),
            b_c: b.clone(),
            b_o: b,
        }
    }

    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, bound: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(input, hidden);
        for t in p.tensors_mut() {
            *t = Tensor::uniform(t.shape(), bound, rng);
        }
        p
    }

    pub fn input_width(&self) -> usize {
        self.w_xi.shape()[0]
    }

    pub fn hidden_width(&self) -> usize {
        self.w_hi.shape()[0]
    }

    /// Tensors in the fixed order `W_xi W_hi W_xf W_hf W_xc W_hc W_xo W_ho b_i b_f b_c b_o`.
    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.w_xi, &self.w_hi, &self.w_xf, &self.w_hf, &self.w_xc, &self.w_hc, &self.w_xo,
            &self.w_ho, &self.b_i, &self.b_f, &self.b_c, &self.b_o,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_xi,
            &mut self.w_hi,
            &mut self.w_xf,
            &mut self.w_hf,
            &mut self.w_xc,
            &mut self.w_hc,
            &mut self.w_xo,
            &mut self.w_ho,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_c,
            &mut self.b_o,
        ]
    }

    pub fn from_tensors(t: Vec<Tensor>) -> Result<Self> {
        let Ok([w_xi, w_hi, w_xf, w_hf, w_xc, w_hc, w_xo, w_ho, b_i, b_f, b_c, b_o]) =
            <[Tensor; LSTM_TENSORS]>::try_from(t)
        else {
            return dim_err(format!("LSTM needs {LSTM_TENSORS} tensors"));
        };
        let p = Self {
            w_xi,
            w_hi,
            w_xf,
            w_hf,
            w_xc,
            w_hc,
            w_xo,
            w_ho,
            b_i,
            b_f,
            b_c,
            b_o,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let [input, hidden] = *self.w_xi.shape() else {
            return dim_err("W_xi must be 2-D");
        };
        for w in [&self.w_xi, &self.w_xf, &self.w_xc, &self.w_xo] {
            if w.shape() != [input, hidden] {
                return dim_err(format!("input weight {:?} != [{input}, {hidden}]", w.shape()));
            }
        }
        for w in [&self.w_hi, &self.w_hf, &self.w_hc, &self.w_ho] {
            if w.shape() != [hidden, hidden] {
                return dim_err(format!("hidden weight {:?} is not [{hidden}, {hidden}]", w.shape()));
            }
        }
        for b in [&self.b_i, &self.b_f, &self.b_c, &self.b_o] {
            if b.shape() != [hidden] {
                return dim_err(format!("bias {:?} is not [{hidden}]", b.shape()));
            }
        }
        Ok(())
    }

    pub fn bind(&self, g: &mut ComputeGraph, trainable: bool) -> LstmNodes {
        let ids: Vec<NodeId> = self
            .tensors()
            .into_iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        LstmNodes::from_ids(&ids).expect("twelve ids")
    }
}

/// An [`LstmParams`] bound into a graph.
#[derive(Clone, Debug)]
pub struct LstmNodes {
    ids: [NodeId; LSTM_TENSORS],
}

impl LstmNodes {
    pub fn from_ids(ids: &[NodeId]) -> Result<Self> {
        let ids = <[NodeId; LSTM_TENSORS]>::try_from(ids)
            .map_err(|_| Error::Dimension(format!("LSTM needs {LSTM_TENSORS} nodes, got {}", ids.len())))?;
        Ok(Self { ids })
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }
}

impl GraphCell for LstmNodes {
    fn step_with_gates(&self, g: &mut ComputeGraph, x: NodeId, prev: GraphState) -> Result<(GraphState, GateNodes)> {
        let [w_xi, w_hi, w_xf, w_hf, w_xc, w_hc, w_xo, w_ho, b_i, b_f, b_c, b_o] = self.ids;
        let gate = |g: &mut ComputeGraph, wx: NodeId, wh: NodeId, b: NodeId| -> Result<NodeId> {
            let xt = g.matmul(x, wx)?;
            let ht = g.matmul(prev.h, wh)?;
            gate_pre(g, xt, ht, None, b)
        };
        let f_pre = gate(g, w_xf, w_hf, b_f)?;
        let i_pre = gate(g, w_xi, w_hi, b_i)?;
        let c_pre = gate(g, w_xc, w_hc, b_c)?;
        let o_pre = gate(g, w_xo, w_ho, b_o)?;
        let f = g.sigmoid(f_pre);
        let i = g.sigmoid(i_pre);
        let cand = g.tanh(c_pre);
        let o = g.sigmoid(o_pre);
        let keep = g.mul(f, prev.c)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok((
            GraphState { h, c },
            GateNodes {
                input: i,
                forget: f,
                candidate: cand,
                output: o,
            },
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Tensor,
    pub c: Tensor,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: Tensor::zeros(&[hidden]),
            c: Tensor::zeros(&[hidden]),
        }
    }
}

/// Gate values produced by one tensor-level step.
#[derive(Clone, Debug)]
pub struct GateValues {
    pub input: Tensor,
    pub forget: Tensor,
    pub candidate: Tensor,
    pub output: Tensor,
}

fn as_batch(t: &Tensor, rank: usize) -> Result<(Tensor, bool)> {
    if t.ndim() == rank {
        Ok((t.clone(), false))
    } else if t.ndim() + 1 == rank {
        let mut s = vec![1];
        s.extend_from_slice(t.shape());
        Ok((t.reshape(&s)?, true))
    } else {
        dim_err(format!("unexpected rank {} for shape {:?}", t.ndim(), t.shape()))
    }
}

fn unbatch(t: &Tensor, squeeze: bool) -> Tensor {
    if squeeze {
        t.reshape(&t.shape()[1..]).expect("leading 1")
    } else {
        t.clone()
    }
}

fn run_step<C: GraphCell>(
    bind: impl FnOnce(&mut ComputeGraph) -> C,
    x: &Tensor,
    h: &Tensor,
    c: &Tensor,
    rank: usize,
) -> Result<(Tensor, Tensor, GateValues)> {
    let (xb, squeeze) = as_batch(x, rank)?;
    let (hb, _) = as_batch(h, rank)?;
    let (cb, _) = as_batch(c, rank)?;
    if hb.shape() != cb.shape() {
        return dim_err(format!("h {:?} and c {:?} differ", h.shape(), c.shape()));
    }
    let mut g = ComputeGraph::new();
    let cell = bind(&mut g);
    let xi = g.constant(xb);
    let prev = GraphState {
        h: g.constant(hb),
        c: g.constant(cb),
    };
    let (s, gates) = cell.step_with_gates(&mut g, xi, prev)?;
    let val = |id: NodeId| unbatch(g.value(id), squeeze);
    Ok((
        val(s.h),
        val(s.c),
        GateValues {
            input: val(gates.input),
            forget: val(gates.forget),
            candidate: val(gates.candidate),
            output: val(gates.output),
        },
    ))
}

pub fn lstm_step_with_gates(params: &LstmParams, x_t: &Tensor, prev: &LstmState) -> Result<(LstmState, GateValues)> {
    params.validate()?;
    let (h, c, gates) = run_step(|g| params.bind(g, false), x_t, &prev.h, &prev.c, 2)?;
    Ok((LstmState { h, c }, gates))
}

pub fn lstm_step(params: &LstmParams, x_t: &Tensor, prev: &LstmState) -> Result<LstmState> {
    lstm_step_with_gates(params, x_t, prev).map(|(s, _)| s)
}

// ---------------------------------------------------------------------------
// ConvLSTM
// ---------------------------------------------------------------------------

/// Weights of a convolutional LSTM cell with peephole connections.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmParams {
    pub w_xi: Tensor,
    pub w_hi: Tensor,
    pub w_xf: Tensor,
    pub w_hf: Tensor,
    pub w_xc: Tensor,
    pub w_hc: Tensor,
    pub w_xo: Tensor,
    pub w_ho: Tensor,
    pub w_ci: Tensor,
    pub w_cf: Tensor,
    pub w_co: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_c: Tensor,
    pub b_o: Tensor,
}

pub const CONVLSTM_TENSORS: usize = 15;

/// Shape of a ConvLSTM cell: kernel extent, channels and the spatial grid the
/// peephole weights cover.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLstmShape {
    pub kernel: (usize, usize),
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub grid: (usize, usize),
}

impl ConvLstmParams {
    pub fn zeros(shape: ConvLstmShape) -> Self {
        let (kh, kw) = shape.kernel;
        let ch = shape.hidden_channels;
        let wx = Tensor::zeros(&[kh, kw, shape.in_channels, ch]);
        let wh = Tensor::zeros(&[kh, kw, ch, ch]);
        let peep = Tensor::zeros(&[shape.grid.0, shape.grid.1, ch]);
        let b = Tensor::zeros(&[ch]);
        Self {
            w_xi: wx.clone(),
            w_hi: wh.clone(),
            w_xf: wx.clone(),
            w_hf: wh.clone(),
            w_xc: wx.clone(),
            w_hc: wh.clone(),
            w_xo: wx,
            w_ho: wh,
            w_ci: peep.clone(),
            w_cf: peep.clone(),
            w_co: peep,
            b_i: b.clone(),
            b_f: b.clone(),
            b_c: b.clone(),
            b_o: b,
        }
    }

    pub fn random<R: Rng + ?Sized>(shape: ConvLstmShape, bound: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        for t in p.tensors_mut() {
            *t = Tensor::uniform(t.shape(), bound, rng);
        }
        p
    }

    pub fn shape(&self) -> ConvLstmShape {
        let s = self.w_xi.shape();
        let g = self.w_ci.shape();
        ConvLstmShape {
            kernel: (s[0], s[1]),
            in_channels: s[2],
            hidden_channels: s[3],
            grid: (g[0], g[1]),
        }
    }

    /// Order: `W_xi W_hi W_xf W_hf W_xc W_hc W_xo W_ho W_ci W_cf W_co b_i b_f b_c b_o`.
    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.w_xi, &self.w_hi, &self.w_xf, &self.w_hf, &self.w_xc, &self.w_hc, &self.w_xo,
            &self.w_ho, &self.w_ci, &self.w_cf, &self.w_co, &self.b_i, &self.b_f, &self.b_c,
            &self.b_o,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_xi,
            &mut self.w_hi,
            &mut self.w_xf,
            &mut self.w_hf,
            &mut self.w_xc,
            &mut self.w_hc,
            &mut self.w_xo,
            &mut self.w_ho,
            &mut self.w_ci,
            &mut self.w_cf,
            &mut self.w_co,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_c,
            &mut self.b_o,
        ]
    }

    pub fn from_tensors(t: Vec<Tensor>) -> Result<Self> {
        let Ok([w_xi, w_hi, w_xf, w_hf, w_xc, w_hc, w_xo, w_ho, w_ci, w_cf, w_co, b_i, b_f, b_c, b_o]) =
            <[Tensor; CONVLSTM_TENSORS]>::try_from(t)
        else {
            return dim_err(format!("ConvLSTM needs {CONVLSTM_TENSORS} tensors"));
        };
        let p = Self {
            w_xi,
            w_hi,
            w_xf,
            w_hf,
            w_xc,
            w_hc,
            w_xo,
            w_ho,
            w_ci,
            w_cf,
            w_co,
            b_i,
            b_f,
            b_c,
            b_o,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let [kh, kw, cin, ch] = *self.w_xi.shape() else {
            return dim_err("W_xi must be [kh,kw,Cin,Ch]");
        };
        for w in [&self.w_xi, &self.w_xf, &self.w_xc, &self.w_xo] {
            if w.shape() != [kh, kw, cin, ch] {
                return dim_err(format!("input kernel {:?} != [{kh},{kw},{cin},{ch}]", w.shape()));
            }
        }
        for w in [&self.w_hi, &self.w_hf, &self.w_hc, &self.w_ho] {
            if w.shape() != [kh, kw, ch, ch] {
                return dim_err(format!("hidden kernel {:?} != [{kh},{kw},{ch},{ch}]", w.shape()));
            }
        }
        let peep = self.w_ci.shape();
        if peep.len() != 3 || peep[2] != ch {
            return dim_err(format!("peephole {peep:?} must be [H,W,{ch}]"));
        }
        for w in [&self.w_cf, &self.w_co] {
            if w.shape() != peep {
                return dim_err(format!("peephole {:?} != {peep:?}", w.shape()));
            }
        }
        for b in [&self.b_i, &self.b_f, &self.b_c, &self.b_o] {
            if b.shape() != [ch] {
                return dim_err(format!("bias {:?} is not [{ch}]", b.shape()));
            }
        }
        Ok(())
    }

    pub fn bind(&self, g: &mut ComputeGraph, trainable: bool) -> ConvLstmNodes {
        let ids: Vec<NodeId> = self
            .tensors()
            .into_iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        ConvLstmNodes::from_ids(&ids).expect("fifteen ids")
    }
}

#[derive(Clone, Debug)]
pub struct ConvLstmNodes {
    ids: [NodeId; CONVLSTM_TENSORS],
}

impl ConvLstmNodes {
    pub fn from_ids(ids: &[NodeId]) -> Result<Self> {
        let ids = <[NodeId; CONVLSTM_TENSORS]>::try_from(ids).map_err(|_| {
            Error::Dimension(format!("ConvLSTM needs {CONVLSTM_TENSORS} nodes, got {}", ids.len()))
        })?;
        Ok(Self { ids })
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }
}

impl GraphCell for ConvLstmNodes {
    fn step_with_gates(&self, g: &mut ComputeGraph, x: NodeId, prev: GraphState) -> Result<(GraphState, GateNodes)> {
        let [w_xi, w_hi, w_xf, w_hf, w_xc, w_hc, w_xo, w_ho, w_ci, w_cf, w_co, b_i, b_f, b_c, b_o] = self.ids;
        let same = Conv2dOptions::same();
        let conv_pair = |g: &mut ComputeGraph, wx: NodeId, wh: NodeId| -> Result<(NodeId, NodeId)> {
            Ok((g.conv2d(x, wx, same)?, g.conv2d(prev.h, wh, same)?))
        };
        let (xi, hi) = conv_pair(g, w_xi, w_hi)?;
        let (xf, hf) = conv_pair(g, w_xf, w_hf)?;
        let (xc, hc) = conv_pair(g, w_xc, w_hc)?;
        let (xo, ho) = conv_pair(g, w_xo, w_ho)?;
        if g.value(xi).shape() != g.value(prev.c).shape() {
            return dim_err(format!(
                "input grid {:?} does not match state {:?}",
                g.value(xi).shape(),
                g.value(prev.c).shape()
            ));
        }

        let peep_i = g.mul(prev.c, w_ci)?;
        let i_pre = gate_pre(g, xi, hi, Some(peep_i), b_i)?;
        let i = g.sigmoid(i_pre);

        let peep_f = g.mul(prev.c, w_cf)?;
        let f_pre = gate_pre(g, xf, hf, Some(peep_f), b_f)?;
        let f = g.sigmoid(f_pre);

        let c_pre = gate_pre(g, xc, hc, None, b_c)?;
        let cand = g.tanh(c_pre);

        let keep = g.mul(f, prev.c)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;

        // output gate peeks at the updated cell
        let peep_o = g.mul(c, w_co)?;
        let o_pre = gate_pre(g, xo, ho, Some(peep_o), b_o)?;
        let o = g.sigmoid(o_pre);

        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok((
            GraphState { h, c },
            GateNodes {
                input: i,
                forget: f,
                candidate: cand,
                output: o,
            },
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmState {
    pub h: Tensor,
    pub c: Tensor,
}

impl ConvLstmState {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            h: Tensor::zeros(&[height, width, channels]),
            c: Tensor::zeros(&[height, width, channels]),
        }
    }
}

pub fn convlstm_step_with_gates(
    params: &ConvLstmParams,
    x_t: &Tensor,
    prev: &ConvLstmState,
) -> Result<(ConvLstmState, GateValues)> {
    params.validate()?;
    let (h, c, gates) = run_step(|g| params.bind(g, false), x_t, &prev.h, &prev.c, 4)?;
    Ok((ConvLstmState { h, c }, gates))
}

pub fn convlstm_step(params: &ConvLstmParams, x_t: &Tensor, prev: &ConvLstmState) -> Result<ConvLstmState> {
    convlstm_step_with_gates(params, x_t, prev).map(|(s, _)| s)
}

// ---------------------------------------------------------------------------
// Tensor-level unrolling
// ---------------------------------------------------------------------------

pub trait RecurrentCell {
    type State: Clone;

    fn step(&self, x: &Tensor, prev: &Self::State) -> Result<Self::State>;
}

impl RecurrentCell for LstmParams {
    type State = LstmState;

    fn step(&self, x: &Tensor, prev: &LstmState) -> Result<LstmState> {
        lstm_step(self, x, prev)
    }
}

impl RecurrentCell for ConvLstmParams {
    type State = ConvLstmState;

    fn step(&self, x: &Tensor, prev: &ConvLstmState) -> Result<ConvLstmState> {
        convlstm_step(self, x, prev)
    }
}

/// Applies `cell` across `sequence`; element `t` of the result is the state
/// after consuming `sequence[t]`.
pub fn unroll<C: RecurrentCell>(cell: &C, sequence: &[Tensor], init: C::State) -> Result<Vec<C::State>> {
    let Some(first) = sequence.first() else {
        return Err(Error::Contract("cannot unroll an empty sequence".into()));
    };
    if let Some(bad) = sequence.iter().find(|x| x.shape() != first.shape()) {
        return dim_err(format!(
            "sequence shapes differ: {:?} vs {:?}",
            first.shape(),
            bad.shape()
        ));
    }
    let mut out: Vec<C::State> = Vec::with_capacity(sequence.len());
    let mut prev = init;
    for x in sequence {
        let next = cell.step(x, &prev)?;
        out.push(next.clone());
        prev = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::sigmoid;
    use crate::rng::seeded;

    #[test]
    fn zero_weights_halve_the_cell() {
        let p = LstmParams::zeros(1, 1);
        let prev = LstmState {
            h: Tensor::vector(vec![0.0]),
            c: Tensor::vector(vec![1.0]),
        };
        let (s, gates) = lstm_step_with_gates(&p, &Tensor::vector(vec![0.7]), &prev).unwrap();
        assert_eq!(gates.forget.data(), &[0.5]);
        assert_eq!(gates.candidate.data(), &[0.0]);
        assert_eq!(s.c.data(), &[0.5]);
        assert!((s.h.data()[0] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn unit_weights_from_rest_stay_at_rest() {
        let mut p = LstmParams::zeros(1, 1);
        for t in p.tensors_mut().into_iter().take(8) {
            *t = Tensor::full(t.shape(), 1.0);
        }
        let s = lstm_step(&p, &Tensor::vector(vec![0.0]), &LstmState::zeros(1)).unwrap();
        assert_eq!(s.c.data(), &[0.0]);
        assert_eq!(s.h.data(), &[0.0]);
    }

    #[test]
    fn lstm_shape_errors() {
        let p = LstmParams::zeros(3, 2);
        assert!(lstm_step(&p, &Tensor::vector(vec![0.0; 4]), &LstmState::zeros(2)).is_err());
        assert!(lstm_step(&p, &Tensor::vector(vec![0.0; 3]), &LstmState::zeros(3)).is_err());
    }

    #[test]
    fn convlstm_zero_params_halve_cell_everywhere() {
        let shape = ConvLstmShape {
            kernel: (3, 3),
            in_channels: 2,
            hidden_channels: 3,
            grid: (4, 5),
        };
        let p = ConvLstmParams::zeros(shape);
        let prev = ConvLstmState {
            h: Tensor::zeros(&[4, 5, 3]),
            c: Tensor::full(&[4, 5, 3], 1.0),
        };
        let x = Tensor::uniform(&[4, 5, 2], 1.0, &mut seeded(1));
        let (s, gates) = convlstm_step_with_gates(&p, &x, &prev).unwrap();
        assert_eq!(s.h.shape(), &[4, 5, 3]);
        assert!(s.c.data().iter().all(|&v| v == 0.5));
        for g in [&gates.input, &gates.forget, &gates.output] {
            assert!(g.data().iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn convlstm_channel_mismatch() {
        let shape = ConvLstmShape {
            kernel: (1, 1),
            in_channels: 2,
            hidden_channels: 1,
            grid: (2, 2),
        };
        let p = ConvLstmParams::zeros(shape);
        let x = Tensor::zeros(&[2, 2, 3]);
        assert!(convlstm_step(&p, &x, &ConvLstmState::zeros(2, 2, 1)).is_err());
    }

    #[test]
    fn unroll_zero_cell_is_geometric() {
        // zero weights: c_t = c_{t-1} / 2 + 0, so starting at c_0 = 1, c_t = 2^-t
        let p = LstmParams::zeros(2, 1);
        let seq: Vec<Tensor> = (0..5).map(|i| Tensor::vector(vec![i as f64, -1.0])).collect();
        let init = LstmState {
            h: Tensor::vector(vec![0.0]),
            c: Tensor::vector(vec![1.0]),
        };
        let states = unroll(&p, &seq, init).unwrap();
        for (t, s) in states.iter().enumerate() {
            let c = 0.5f64.powi(t as i32 + 1);
            assert_eq!(s.c.data(), &[c]);
            assert!((s.h.data()[0] - 0.5 * c.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn unroll_rejects_empty_and_ragged() {
        let p = LstmParams::zeros(1, 1);
        assert!(unroll(&p, &[], LstmState::zeros(1)).is_err());
        let seq = vec![Tensor::vector(vec![0.0]), Tensor::vector(vec![0.0, 1.0])];
        assert!(unroll(&p, &seq, LstmState::zeros(1)).is_err());
    }

    #[test]
    fn length_one_unroll_is_single_step() {
        let p = LstmParams::random(2, 3, 0.5, &mut seeded(3));
        let x = Tensor::vector(vec![0.2, -0.4]);
        let one = lstm_step(&p, &x, &LstmState::zeros(3)).unwrap();
        let seq = unroll(&p, std::slice::from_ref(&x), LstmState::zeros(3)).unwrap();
        assert_eq!(seq, vec![one]);
    }

    #[test]
    fn saturated_forget_gate() {
        let mut p = LstmParams::random(1, 2, 0.1, &mut seeded(9));
        p.b_i = Tensor::full(&[2], -60.0);
        p.b_f = Tensor::full(&[2], 60.0);
        let prev = LstmState {
            h: Tensor::vector(vec![0.1, -0.2]),
            c: Tensor::vector(vec![0.8, -1.3]),
        };
        let s = lstm_step(&p, &Tensor::vector(vec![0.3]), &prev).unwrap();
        assert!(s.c.max_abs_diff(&prev.c) < 1e-9);
        p.b_f = Tensor::full(&[2], -60.0);
        let s = lstm_step(&p, &Tensor::vector(vec![0.3]), &prev).unwrap();
        assert!(s.c.data().iter().all(|v| v.abs() < 1e-9));
        assert!(sigmoid(-60.0) < 1e-25);
    }
}
