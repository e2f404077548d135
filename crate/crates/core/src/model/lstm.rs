//! Stacked bidirectional LSTM with exact backpropagation through time.
//!
//! Gate rows are stacked as `[i, f, g, o]`, each `hidden` rows tall:
//!
//! ```text
//! z = W_in x_t + W_rec h_{t-1} + b
//! i = σ(z_i)  f = σ(z_f)  g = tanh(z_g)  o = σ(z_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```

use super::config::{bias_name, w_in_name, w_rec_name, ModelConfig};
use super::params::ParamVector;
use crate::error::{shape, Result};
use crate::numkernel::{axpy, dot, sigmoid, tanh, Mat};

/// Borrowed weights of one LSTM direction.
#[derive(Clone, Copy, Debug)]
pub struct CellWeights<'a> {
    pub w_in: &'a [f64],
    pub w_rec: &'a [f64],
    pub bias: &'a [f64],
    pub input_dim: usize,
    pub hidden: usize,
}

impl<'a> CellWeights<'a> {
    pub fn from_params(
        params: &'a ParamVector,
        cfg: &ModelConfig,
        layer: usize,
        dir: Direction,
    ) -> Result<Self> {
        Ok(Self {
            w_in: params.segment(&w_in_name(layer, dir.tag()))?,
            w_rec: params.segment(&w_rec_name(layer, dir.tag()))?,
            bias: params.segment(&bias_name(layer, dir.tag()))?,
            input_dim: cfg.lstm_input_dim(layer),
            hidden: cfg.hidden,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
        }
    }

    /// Time index visited at processing step `step`.
    #[inline]
    fn time(self, step: usize, len: usize) -> usize {
        match self {
            Direction::Forward => step,
            Direction::Backward => len - 1 - step,
        }
    }
}

/// Post-activation gate values `[i, f, g, o]` of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct GateCache {
    pub gates: Vec<f64>,
}

/// Turns pre-activations into gate values in place and advances the state.
/// Returns nothing; `tc` receives `tanh(c)`.
fn activate(hd: usize, gates: &mut [f64], c_prev: &[f64], c: &mut [f64], h: &mut [f64], tc: &mut [f64]) {
    let (ifg, o) = gates.split_at_mut(3 * hd);
    let (if_, g) = ifg.split_at_mut(2 * hd);
    let (i, f) = if_.split_at_mut(hd);
    for k in 0..hd {
        i[k] = sigmoid(i[k]);
        f[k] = sigmoid(f[k]);
        g[k] = tanh(g[k]);
        o[k] = sigmoid(o[k]);
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        tc[k] = tanh(c[k]);
        h[k] = o[k] * tc[k];
    }
}

fn cell_into(
    w: &CellWeights<'_>,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    gates: &mut [f64],
    c: &mut [f64],
    h: &mut [f64],
) {
    let hd = w.hidden;
    for (r, z) in gates.iter_mut().enumerate() {
        *z = w.bias[r]
            + dot(&w.w_in[r * w.input_dim..(r + 1) * w.input_dim], x)
            + dot(&w.w_rec[r * hd..(r + 1) * hd], h_prev);
    }
    let mut tc = vec![0.0; hd];
    activate(hd, gates, c_prev, c, h, &mut tc);
}

/// One LSTM step. Returns `(h, c, gates)`.
pub fn lstm_cell(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    weights: &CellWeights<'_>,
) -> Result<(Vec<f64>, Vec<f64>, GateCache)> {
    let hd = weights.hidden;
    if x.len() != weights.input_dim
        || h_prev.len() != hd
        || c_prev.len() != hd
        || weights.w_in.len() != 4 * hd * weights.input_dim
        || weights.w_rec.len() != 4 * hd * hd
        || weights.bias.len() != 4 * hd
    {
        return Err(shape("lstm_cell dimensions do not match weights"));
    }
    let mut gates = vec![0.0; 4 * hd];
    let mut c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    cell_into(weights, x, h_prev, c_prev, &mut gates, &mut c, &mut h);
    Ok((h, c, GateCache { gates }))
}

/// Activations of one direction of one layer, indexed by time.
#[derive(Clone, Debug)]
pub(crate) struct DirCache {
    gates: Vec<f64>,
    c: Vec<f64>,
    /// `tanh(c)`, kept for the backward pass.
    tc: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct LayerCache {
    /// `T x input_dim`, row-major.
    input: Vec<f64>,
    input_dim: usize,
    dirs: [DirCache; 2],
}

/// Everything the backward pass needs from a bi-LSTM forward pass.
#[derive(Clone, Debug)]
pub struct LstmCache {
    pub(crate) seq_len: usize,
    pub(crate) hidden: usize,
    pub(crate) layers: Vec<LayerCache>,
    pub readout: Vec<f64>,
}

impl LstmCache {
    pub fn hidden_states(&self, layer: usize, dir: Direction) -> &[f64] {
        &self.layers[layer].dirs[dir as usize].h
    }
}

/// Row-major transpose of an `rows x cols` slice.
fn transposed(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

fn run_direction(
    w: &CellWeights<'_>,
    input: &[f64],
    seq_len: usize,
    dir: Direction,
) -> DirCache {
    let hd = w.hidden;
    let g4 = 4 * hd;
    let in_dim = w.input_dim;
    // Pre-activations are built column by column so the inner loops run
    // over contiguous gate rows.
    let w_in_t = transposed(w.w_in, g4, in_dim);
    let w_rec_t = transposed(w.w_rec, g4, hd);
    let mut gates = vec![0.0; seq_len * g4];
    for t in 0..seq_len {
        let z = &mut gates[t * g4..(t + 1) * g4];
        z.copy_from_slice(w.bias);
        for (k, &xk) in input[t * in_dim..(t + 1) * in_dim].iter().enumerate() {
            axpy(xk, &w_in_t[k * g4..(k + 1) * g4], z);
        }
    }
    let mut cache = DirCache {
        gates,
        c: vec![0.0; seq_len * hd],
        tc: vec![0.0; seq_len * hd],
        h: vec![0.0; seq_len * hd],
    };
    let zeros = vec![0.0; hd];
    let mut h_prev = vec![0.0; hd];
    let mut c_prev = vec![0.0; hd];
    for step in 0..seq_len {
        let t = dir.time(step, seq_len);
        let z = &mut cache.gates[t * g4..(t + 1) * g4];
        if step > 0 {
            for (k, &hk) in h_prev.iter().enumerate() {
                axpy(hk, &w_rec_t[k * g4..(k + 1) * g4], z);
            }
        }
        let c = &mut cache.c[t * hd..(t + 1) * hd];
        let h = &mut cache.h[t * hd..(t + 1) * hd];
        let tc = &mut cache.tc[t * hd..(t + 1) * hd];
        let cp = if step > 0 { &c_prev[..] } else { &zeros[..] };
        activate(hd, z, cp, c, h, tc);
        h_prev.copy_from_slice(h);
        c_prev.copy_from_slice(c);
    }
    cache
}

/// Runs the stack on a `T x F` input. Readout is the top layer's forward
/// state at the last frame followed by its backward state at the first frame.
pub fn bilstm_forward(x: &Mat, params: &ParamVector, cfg: &ModelConfig) -> Result<LstmCache> {
    if x.rows() != cfg.seq_len || x.cols() != cfg.feat_dim {
        return Err(shape(format!(
            "input is {}x{}, model expects {}x{}",
            x.rows(),
            x.cols(),
            cfg.seq_len,
            cfg.feat_dim
        )));
    }
    let t_len = cfg.seq_len;
    let hd = cfg.hidden;
    let mut layers = Vec::with_capacity(cfg.lstm_layers);
    let mut input = x.as_slice().to_vec();
    for l in 0..cfg.lstm_layers {
        let in_dim = cfg.lstm_input_dim(l);
        let fwd = run_direction(
            &CellWeights::from_params(params, cfg, l, Direction::Forward)?,
            &input,
            t_len,
            Direction::Forward,
        );
        let bwd = run_direction(
            &CellWeights::from_params(params, cfg, l, Direction::Backward)?,
            &input,
            t_len,
            Direction::Backward,
        );
        let mut next = vec![0.0; t_len * 2 * hd];
        for t in 0..t_len {
            next[t * 2 * hd..t * 2 * hd + hd].copy_from_slice(&fwd.h[t * hd..(t + 1) * hd]);
            next[t * 2 * hd + hd..(t + 1) * 2 * hd].copy_from_slice(&bwd.h[t * hd..(t + 1) * hd]);
        }
        layers.push(LayerCache {
            input: std::mem::replace(&mut input, next),
            input_dim: in_dim,
            dirs: [fwd, bwd],
        });
    }
    let top = layers.last().expect("at least one layer");
    let mut readout = Vec::with_capacity(2 * hd);
    readout.extend_from_slice(&top.dirs[0].h[(t_len - 1) * hd..t_len * hd]);
    readout.extend_from_slice(&top.dirs[1].h[..hd]);
    Ok(LstmCache {
        seq_len: t_len,
        hidden: hd,
        layers,
        readout,
    })
}

/// Gradient sinks for one direction.
struct DirGrad<'a> {
    w_in: &'a mut [f64],
    w_rec: &'a mut [f64],
    bias: &'a mut [f64],
}

/// BPTT through one direction. `dh_ext` is `T x H` (gradient arriving at each
/// hidden output); input gradients are accumulated into `d_input` if given.
fn backward_direction(
    w: &CellWeights<'_>,
    layer: &LayerCache,
    dir: Direction,
    dh_ext: &[f64],
    grad: DirGrad<'_>,
    mut d_input: Option<&mut [f64]>,
) {
    let hd = w.hidden;
    let in_dim = w.input_dim;
    let t_len = dh_ext.len() / hd;
    let cache = &layer.dirs[dir as usize];
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let mut dz = vec![0.0; 4 * hd];
    let zeros = vec![0.0; hd];
    for step in (0..t_len).rev() {
        let t = dir.time(step, t_len);
        let prev = (step > 0).then(|| dir.time(step - 1, t_len));
        let gates = &cache.gates[t * 4 * hd..(t + 1) * 4 * hd];
        let (h_prev, c_prev) = match prev {
            Some(p) => (&cache.h[p * hd..(p + 1) * hd], &cache.c[p * hd..(p + 1) * hd]),
            None => (&zeros[..], &zeros[..]),
        };
        for k in 0..hd {
            let (i, f, g, o) = (gates[k], gates[hd + k], gates[2 * hd + k], gates[3 * hd + k]);
            let dh = dh_ext[t * hd + k] + dh_next[k];
            let tc = cache.tc[t * hd + k];
            let d_o = dh * tc;
            let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
            dz[k] = dc * g * i * (1.0 - i);
            dz[hd + k] = dc * c_prev[k] * f * (1.0 - f);
            dz[2 * hd + k] = dc * i * (1.0 - g * g);
            dz[3 * hd + k] = d_o * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        let x = &layer.input[t * in_dim..(t + 1) * in_dim];
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for (r, &d) in dz.iter().enumerate() {
            grad.bias[r] += d;
            if d == 0.0 {
                continue;
            }
            axpy(d, x, &mut grad.w_in[r * in_dim..(r + 1) * in_dim]);
            axpy(d, h_prev, &mut grad.w_rec[r * hd..(r + 1) * hd]);
            axpy(d, &w.w_rec[r * hd..(r + 1) * hd], &mut dh_next);
            if let Some(dx) = d_input.as_deref_mut() {
                axpy(
                    d,
                    &w.w_in[r * in_dim..(r + 1) * in_dim],
                    &mut dx[t * in_dim..(t + 1) * in_dim],
                );
            }
        }
    }
}

/// Accumulates the gradient of a scalar whose derivative with respect to the
/// readout is `d_readout` into `grad`.
pub(crate) fn bilstm_backward(
    cache: &LstmCache,
    d_readout: &[f64],
    params: &ParamVector,
    cfg: &ModelConfig,
    grad: &mut ParamVector,
) -> Result<()> {
    let hd = cfg.hidden;
    let t_len = cache.seq_len;
    let mut dh_top = [vec![0.0; t_len * hd], vec![0.0; t_len * hd]];
    dh_top[0][(t_len - 1) * hd..].copy_from_slice(&d_readout[..hd]);
    dh_top[1][..hd].copy_from_slice(&d_readout[hd..2 * hd]);
    let mut dh = dh_top;
    for l in (0..cfg.lstm_layers).rev() {
        let layer = &cache.layers[l];
        let mut d_input = (l > 0).then(|| vec![0.0; t_len * layer.input_dim]);
        for dir in [Direction::Forward, Direction::Backward] {
            let w = CellWeights::from_params(params, cfg, l, dir)?;
            let lay = grad.layout().clone();
            let r_in = lay.segment(&w_in_name(l, dir.tag()))?.range();
            let r_rec = lay.segment(&w_rec_name(l, dir.tag()))?.range();
            let r_b = lay.segment(&bias_name(l, dir.tag()))?.range();
            let values = grad.values_mut();
            // Segments are laid out w_in, w_rec, bias consecutively.
            let (head, tail) = values.split_at_mut(r_rec.start);
            let (rec, tail) = tail.split_at_mut(r_rec.len());
            let bias = &mut tail[r_b.start - r_rec.end..r_b.end - r_rec.end];
            let g = DirGrad {
                w_in: &mut head[r_in],
                w_rec: rec,
                bias,
            };
            backward_direction(&w, layer, dir, &dh[dir as usize], g, d_input.as_deref_mut());
        }
        if let Some(d_input) = d_input {
            for t in 0..t_len {
                for k in 0..hd {
                    dh[0][t * hd + k] = d_input[t * 2 * hd + k];
                    dh[1][t * hd + k] = d_input[t * 2 * hd + hd + k];
                }
            }
        }
    }
    Ok(())
}
