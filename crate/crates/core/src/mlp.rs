//! Temporal padding plus the three-layer MLP feature extractors for head
//! orientation and object bounding boxes.
//!
//! Each MLP maps a per-time-step feature row into the latent space:
//! L1 -> LN -> tanh -> dropout, L2 -> LN -> tanh -> dropout, L3 -> LN -> tanh.
//! Dropout (rate 0.5) is active on the first two layers only.

use rand::Rng;

use crate::dct::DctPair;
use crate::error::{Error, Result};
use crate::tensor::{Mode, Tape, Tensor, Tid};

/// Three linear layers with biases and per-layer layer-norm parameters.
#[derive(Debug, Clone)]
pub struct Mlp3 {
    pub w1: Tensor,
    pub b1: Tensor,
    pub ln1_scale: Tensor,
    pub ln1_shift: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub ln2_scale: Tensor,
    pub ln2_shift: Tensor,
    pub w3: Tensor,
    pub b3: Tensor,
    pub ln3_scale: Tensor,
    pub ln3_shift: Tensor,
    pub dropout_rate: f64,
}

impl Mlp3 {
    pub fn init(exec_in: usize, hidden: usize, out: usize, dropout_rate: f64, rng: &mut impl Rng) -> Self {
        let lin = |i: usize, o: usize, mut rng: &mut dyn rand::RngCore| {
            (
                Tensor::rand_fan_in(&[i, o], i, &mut rng).with_grad(),
                Tensor::rand_fan_in(&[o], i, &mut rng).with_grad(),
            )
        };
        let (w1, b1) = lin(exec_in, hidden, rng);
        let (w2, b2) = lin(hidden, hidden, rng);
        let (w3, b3) = lin(hidden, out, rng);
        Mlp3 {
            w1,
            b1,
            ln1_scale: Tensor::full(&[hidden], 1.0).with_grad(),
            ln1_shift: Tensor::zeros(&[hidden]).with_grad(),
            w2,
            b2,
            ln2_scale: Tensor::full(&[hidden], 1.0).with_grad(),
            ln2_shift: Tensor::zeros(&[hidden]).with_grad(),
            w3,
            b3,
            ln3_scale: Tensor::full(&[out], 1.0).with_grad(),
            ln3_shift: Tensor::zeros(&[out]).with_grad(),
            dropout_rate,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.w3.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape) -> Mlp3Ids {
        Mlp3Ids {
            w1: tape.watch(&self.w1),
            b1: tape.watch(&self.b1),
            ln1_scale: tape.watch(&self.ln1_scale),
            ln1_shift: tape.watch(&self.ln1_shift),
            w2: tape.watch(&self.w2),
            b2: tape.watch(&self.b2),
            ln2_scale: tape.watch(&self.ln2_scale),
            ln2_shift: tape.watch(&self.ln2_shift),
            w3: tape.watch(&self.w3),
            b3: tape.watch(&self.b3),
            ln3_scale: tape.watch(&self.ln3_scale),
            ln3_shift: tape.watch(&self.ln3_shift),
            dropout_rate: self.dropout_rate,
            input_dim: self.input_dim(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Mlp3Ids {
    pub w1: Tid,
    pub b1: Tid,
    pub ln1_scale: Tid,
    pub ln1_shift: Tid,
    pub w2: Tid,
    pub b2: Tid,
    pub ln2_scale: Tid,
    pub ln2_shift: Tid,
    pub w3: Tid,
    pub b3: Tid,
    pub ln3_scale: Tid,
    pub ln3_shift: Tid,
    pub dropout_rate: f64,
    pub input_dim: usize,
}

/// Pad the trailing axis from t to `t_total` by repeating the last slot.
pub fn pad_repeat_last(tape: &mut Tape, x: Tid, t_total: usize) -> Result<Tid> {
    let shape = tape.shape(x).to_vec();
    let t = *shape
        .last()
        .ok_or_else(|| Error::invalid("pad_repeat_last needs rank >= 1"))?;
    if t == 0 || t > t_total {
        return Err(Error::invalid(format!(
            "pad_repeat_last: cannot pad trailing extent {t} to {t_total}"
        )));
    }
    if t == t_total {
        return Ok(x);
    }
    let axis = shape.len() - 1;
    let last = tape.slice_axis(x, axis, t - 1, 1)?;
    let mut parts = vec![x];
    parts.extend(std::iter::repeat(last).take(t_total - t));
    tape.concat(&parts, axis)
}

/// Run the MLP on per-time-step rows: x is [T, D], output [T, out].
pub fn mlp_forward(
    tape: &mut Tape,
    x: Tid,
    mlp: &Mlp3Ids,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Tid> {
    let shape = tape.shape(x);
    if shape.len() != 2 || shape[1] != mlp.input_dim {
        return Err(Error::ShapeMismatch {
            op: "mlp_forward",
            lhs: shape.to_vec(),
            rhs: vec![shape.first().copied().unwrap_or(0), mlp.input_dim],
        });
    }
    let t = shape[0];

    let layer = |tape: &mut Tape,
                 h: Tid,
                 w: Tid,
                 b: Tid,
                 ln_scale: Tid,
                 ln_shift: Tid,
                 mut rng: &mut dyn rand::RngCore,
                 drop: bool|
     -> Result<Tid> {
        let h = tape.matmul(h, w)?;
        let bias = tape.repeat_new_axis(b, 0, t)?;
        let h = tape.add(h, bias)?;
        let h = tape.layer_norm(h, ln_scale, ln_shift)?;
        let h = tape.tanh(h);
        if drop {
            tape.dropout(h, mlp.dropout_rate, mode, &mut rng)
        } else {
            Ok(h)
        }
    };

    let h = layer(tape, x, mlp.w1, mlp.b1, mlp.ln1_scale, mlp.ln1_shift, rng, true)?;
    let h = layer(tape, h, mlp.w2, mlp.b2, mlp.ln2_scale, mlp.ln2_shift, rng, true)?;
    layer(tape, h, mlp.w3, mlp.b3, mlp.ln3_scale, mlp.ln3_shift, rng, false)
}

/// Head path: pad -> DCT -> per-step MLP. Input [3, t], output [C, T].
pub fn extract_head_features(
    tape: &mut Tape,
    head: Tid,
    pair: &DctPair,
    mlp: &Mlp3Ids,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Tid> {
    let padded = pad_repeat_last(tape, head, pair.size())?; // [3, T]
    let coeffs = pair.dct_time_on(tape, padded)?;
    let rows = tape.permute(coeffs, &[1, 0])?; // [T, 3]
    let feats = mlp_forward(tape, rows, mlp, mode, rng)?; // [T, C]
    tape.permute(feats, &[1, 0]) // [C, T]
}

/// Object path: pad -> DCT per scalar channel -> flatten each time step in
/// (object, vertex, coordinate) order -> per-step MLP.
/// Input [3, 8, k, t], output [C, T].
pub fn extract_object_features(
    tape: &mut Tape,
    boxes: Tid,
    pair: &DctPair,
    mlp: &Mlp3Ids,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Tid> {
    let shape = tape.shape(boxes).to_vec();
    if shape.len() != 4 || shape[0] != 3 || shape[1] != 8 {
        return Err(Error::invalid(format!(
            "extract_object_features: expected [3, 8, k, t] boxes, got {shape:?}"
        )));
    }
    let k = shape[2];
    if 24 * k != mlp.input_dim {
        return Err(Error::invalid(format!(
            "extract_object_features: {k} boxes make {} inputs but the MLP takes {}",
            24 * k,
            mlp.input_dim
        )));
    }
    let padded = pad_repeat_last(tape, boxes, pair.size())?; // [3, 8, k, T]
    let coeffs = pair.dct_time_on(tape, padded)?;
    let by_time = tape.permute(coeffs, &[3, 2, 1, 0])?; // [T, k, 8, 3]
    let t_total = pair.size();
    let flat = tape.reshape(by_time, &[t_total, 24 * k])?;
    let feats = mlp_forward(tape, flat, mlp, mode, rng)?; // [T, C]
    tape.permute(feats, &[1, 0]) // [C, T]
}
