//! GCN building blocks: temporal/spatial graph convolutions, the encoder and
//! decoder blocks, and residual component stacks.
//!
//! Temporal convolution right-multiplies the trailing time axis by a dense
//! learnable L x L adjacency; spatial convolution left-multiplies the node
//! axis by a dense S x S adjacency. A residual component is
//! tgcn -> 16x16 weight -> sgcn -> layer norm -> tanh -> dropout, wrapped in
//! an additive skip. Residual stacks run on a time-doubled copy of their
//! input and return the first half of the time axis.

use rand::Rng;

use crate::error::Result;
use crate::tensor::{Mode, Tape, Tensor, Tid};

/// Encoder block: lifts 3-channel pose data into the latent feature space.
#[derive(Debug, Clone)]
pub struct EncoderGcn {
    pub a_t: Tensor,
    pub w_start: Tensor,
    pub a_s: Tensor,
}

impl EncoderGcn {
    pub fn init(n_joints: usize, t_total: usize, feature_dim: usize, rng: &mut impl Rng) -> Self {
        EncoderGcn {
            a_t: Tensor::rand_fan_in(&[t_total, t_total], t_total, rng).with_grad(),
            w_start: Tensor::rand_fan_in(&[3, feature_dim], 3, rng).with_grad(),
            a_s: Tensor::rand_fan_in(&[n_joints, n_joints], n_joints, rng).with_grad(),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> EncoderIds {
        EncoderIds {
            a_t: tape.watch(&self.a_t),
            w_start: tape.watch(&self.w_start),
            a_s: tape.watch(&self.a_s),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderIds {
    pub a_t: Tid,
    pub w_start: Tid,
    pub a_s: Tid,
}

/// Decoder block: maps latent features back to 3 coordinate channels.
#[derive(Debug, Clone)]
pub struct DecoderGcn {
    pub a_t: Tensor,
    pub w_end: Tensor,
    pub a_s: Tensor,
}

impl DecoderGcn {
    pub fn init(n_nodes: usize, t_total: usize, feature_dim: usize, rng: &mut impl Rng) -> Self {
        DecoderGcn {
            a_t: Tensor::rand_fan_in(&[t_total, t_total], t_total, rng).with_grad(),
            w_end: Tensor::rand_fan_in(&[feature_dim, 3], feature_dim, rng).with_grad(),
            a_s: Tensor::rand_fan_in(&[n_nodes, n_nodes], n_nodes, rng).with_grad(),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> DecoderIds {
        DecoderIds {
            a_t: tape.watch(&self.a_t),
            w_end: tape.watch(&self.w_end),
            a_s: tape.watch(&self.a_s),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderIds {
    pub a_t: Tid,
    pub w_end: Tid,
    pub a_s: Tid,
}

/// One residual component, sized for the owning stack's node count and
/// doubled time extent.
#[derive(Debug, Clone)]
pub struct GcnComponent {
    pub a_t: Tensor,
    pub w: Tensor,
    pub a_s: Tensor,
    pub ln_scale: Tensor,
    pub ln_shift: Tensor,
    pub dropout_rate: f64,
}

impl GcnComponent {
    pub fn init(
        n_nodes: usize,
        time_len: usize,
        feature_dim: usize,
        dropout_rate: f64,
        rng: &mut impl Rng,
    ) -> Self {
        GcnComponent {
            a_t: Tensor::rand_fan_in(&[time_len, time_len], time_len, rng).with_grad(),
            w: Tensor::rand_fan_in(&[feature_dim, feature_dim], feature_dim, rng).with_grad(),
            a_s: Tensor::rand_fan_in(&[n_nodes, n_nodes], n_nodes, rng).with_grad(),
            ln_scale: Tensor::full(&[feature_dim], 1.0).with_grad(),
            ln_shift: Tensor::zeros(&[feature_dim]).with_grad(),
            dropout_rate,
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> ComponentIds {
        ComponentIds {
            a_t: tape.watch(&self.a_t),
            w: tape.watch(&self.w),
            a_s: tape.watch(&self.a_s),
            ln_scale: tape.watch(&self.ln_scale),
            ln_shift: tape.watch(&self.ln_shift),
            dropout_rate: self.dropout_rate,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ComponentIds {
    pub a_t: Tid,
    pub w: Tid,
    pub a_s: Tid,
    pub ln_scale: Tid,
    pub ln_shift: Tid,
    pub dropout_rate: f64,
}

/// Temporal convolution: right-multiply the trailing time axis by `a_t`.
pub fn tgcn_apply(tape: &mut Tape, x: Tid, a_t: Tid) -> Result<Tid> {
    tape.matmul(x, a_t)
}

/// Spatial convolution: left-multiply the node axis by `a_s`; expects layout
/// [time, node, channel].
pub fn sgcn_apply(tape: &mut Tape, x: Tid, a_s: Tid) -> Result<Tid> {
    tape.matmul_left(a_s, x)
}

/// Encoder pipeline: tgcn -> permute -> W_start -> sgcn -> permute. Purely
/// linear; no nonlinearity here.
pub fn encoder_forward(tape: &mut Tape, p_dct: Tid, enc: &EncoderIds) -> Result<Tid> {
    let h = tgcn_apply(tape, p_dct, enc.a_t)?; // [3, n, T]
    let h = tape.permute(h, &[2, 1, 0])?; // [T, n, 3]
    let h = tape.matmul(h, enc.w_start)?; // [T, n, C]
    let h = sgcn_apply(tape, h, enc.a_s)?;
    tape.permute(h, &[2, 1, 0]) // [C, n, T]
}

/// Decoder pipeline: same layout sandwich with the 16->3 end weight.
pub fn decoder_forward(tape: &mut Tape, f: Tid, dec: &DecoderIds) -> Result<Tid> {
    let h = tgcn_apply(tape, f, dec.a_t)?; // [C, S, T]
    let h = tape.permute(h, &[2, 1, 0])?; // [T, S, C]
    let h = tape.matmul(h, dec.w_end)?; // [T, S, 3]
    let h = sgcn_apply(tape, h, dec.a_s)?;
    tape.permute(h, &[2, 1, 0]) // [3, S, T]
}

/// Copy a [C, S, T] feature tensor along time to [C, S, 2T].
pub fn duplicate_time(tape: &mut Tape, f: Tid) -> Result<Tid> {
    tape.concat(&[f, f], 2)
}

/// Apply a stack of residual components on the time-doubled features and
/// return the first half of the time axis. An empty stack is the identity.
pub fn residual_stack_forward(
    tape: &mut Tape,
    f: Tid,
    components: &[ComponentIds],
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Tid> {
    if components.is_empty() {
        return Ok(f);
    }
    let t = tape.shape(f)[2];
    let mut h = duplicate_time(tape, f)?; // [C, S, 2T]
    for comp in components {
        let y = tgcn_apply(tape, h, comp.a_t)?; // [C, S, 2T]
        let y = tape.permute(y, &[2, 1, 0])?; // [2T, S, C]
        let y = tape.matmul(y, comp.w)?;
        let y = sgcn_apply(tape, y, comp.a_s)?;
        let y = tape.layer_norm(y, comp.ln_scale, comp.ln_shift)?;
        let y = tape.tanh(y);
        let y = tape.dropout(y, comp.dropout_rate, mode, rng)?;
        let y = tape.permute(y, &[2, 1, 0])?; // [C, S, 2T]
        h = tape.add(y, h)?;
    }
    tape.slice_axis(h, 2, 0, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn eye(n: usize) -> Tensor {
        Tensor::from_fn(&[n, n], |i| if i / n == i % n { 1.0 } else { 0.0 })
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn tgcn_identity_adjacency_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(30);
        let x = Tensor::rand_uniform(&[3, 4, 6], -1.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let xi = tape.constant(&x);
        let ai = tape.constant(&eye(6));
        let y = tgcn_apply(&mut tape, xi, ai).unwrap();
        assert_eq!(tape.value(y), x.data());
    }

    #[test]
    fn tgcn_matches_explicit_triple_loop() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let x = Tensor::rand_uniform(&[3, 4, 6], -1.0, 1.0, &mut rng);
        let a = Tensor::rand_uniform(&[6, 6], -1.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let xi = tape.constant(&x);
        let ai = tape.constant(&a);
        let y = tgcn_apply(&mut tape, xi, ai).unwrap();
        let mut want = vec![0.0; 3 * 4 * 6];
        for c in 0..3 {
            for s in 0..4 {
                for i in 0..6 {
                    let mut acc = 0.0;
                    for j in 0..6 {
                        acc += x.at(&[c, s, j]) * a.at(&[j, i]);
                    }
                    want[(c * 4 + s) * 6 + i] = acc;
                }
            }
        }
        assert!(max_abs_diff(tape.value(y), &want) < 1e-12);
    }

    #[test]
    fn tgcn_all_ones_adjacency_broadcasts_single_entry() {
        let mut x = Tensor::zeros(&[2, 3, 5]);
        x.data_mut()[(1 * 3 + 2) * 5 + 3] = 4.25; // (c=1, s=2, j=3)
        let ones = Tensor::full(&[5, 5], 1.0);
        let mut tape = Tape::new();
        let xi = tape.constant(&x);
        let ai = tape.constant(&ones);
        let y = tgcn_apply(&mut tape, xi, ai).unwrap();
        for i in 0..5 {
            assert_eq!(tape.value(y)[(1 * 3 + 2) * 5 + i], 4.25);
        }
        for s in 0..3 {
            if s == 2 {
                continue;
            }
            for i in 0..5 {
                assert_eq!(tape.value(y)[(1 * 3 + s) * 5 + i], 0.0);
            }
        }
    }

    #[test]
    fn sgcn_identity_and_zero_adjacency() {
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        let x = Tensor::rand_uniform(&[6, 5, 16], -1.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let xi = tape.constant(&x);
        let id = tape.constant(&eye(5));
        let y = sgcn_apply(&mut tape, xi, id).unwrap();
        assert_eq!(tape.value(y), x.data());
        let zero = tape.constant(&Tensor::zeros(&[5, 5]));
        let z = sgcn_apply(&mut tape, xi, zero).unwrap();
        assert!(tape.value(z).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sgcn_matches_explicit_loop() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let x = Tensor::rand_uniform(&[6, 5, 16], -1.0, 1.0, &mut rng);
        let a = Tensor::rand_uniform(&[5, 5], -1.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let xi = tape.constant(&x);
        let ai = tape.constant(&a);
        let y = sgcn_apply(&mut tape, xi, ai).unwrap();
        for l in 0..6 {
            for s in 0..5 {
                for c in 0..16 {
                    let mut acc = 0.0;
                    for u in 0..5 {
                        acc += a.at(&[s, u]) * x.at(&[l, u, c]);
                    }
                    let got = tape.value(y)[(l * 5 + s) * 16 + c];
                    assert!((got - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn encoder_identity_weights_embed_input_in_first_channels() {
        let mut rng = ChaCha12Rng::seed_from_u64(34);
        let (n, t, c) = (5, 7, 16);
        let x = Tensor::rand_uniform(&[3, n, t], -1.0, 1.0, &mut rng);
        let enc = EncoderGcn {
            a_t: eye(t),
            w_start: Tensor::from_fn(&[3, c], |i| {
                let (row, col) = (i / c, i % c);
                if row == col {
                    1.0
                } else {
                    0.0
                }
            }),
            a_s: eye(n),
        };
        let mut tape = Tape::new();
        let xi = tape.constant(&x);
        let ids = enc.bind(&mut tape);
        let y = encoder_forward(&mut tape, xi, &ids).unwrap();
        assert_eq!(tape.shape(y), &[c, n, t]);
        for ch in 0..c {
            for s in 0..n {
                for ti in 0..t {
                    let got = tape.value(y)[(ch * n + s) * t + ti];
                    let want = if ch < 3 { x.at(&[ch, s, ti]) } else { 0.0 };
                    assert!((got - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn encoder_default_output_shape() {
        let mut rng = ChaCha12Rng::seed_from_u64(35);
        let enc = EncoderGcn::init(21, 40, 16, &mut rng);
        let mut tape = Tape::new();
        let x = tape.constant(&Tensor::zeros(&[3, 21, 40]));
        let ids = enc.bind(&mut tape);
        let y = encoder_forward(&mut tape, x, &ids).unwrap();
        assert_eq!(tape.shape(y), &[16, 21, 40]);
    }

    #[test]
    fn encoder_matches_from_scratch_loops() {
        let mut rng = ChaCha12Rng::seed_from_u64(36);
        let (n, t, c) = (4, 5, 6);
        let x = Tensor::rand_uniform(&[3, n, t], -1.0, 1.0, &mut rng);
        let enc = EncoderGcn::init(n, t, c, &mut rng);
        let mut tape = Tape::new();
        let xi = tape.constant(&x);
        let ids = enc.bind(&mut tape);
        let y = encoder_forward(&mut tape, xi, &ids).unwrap();

        // independent evaluation with explicit loops
        let mut temp = vec![0.0; 3 * n * t];
        for ch in 0..3 {
            for s in 0..n {
                for i in 0..t {
                    let mut acc = 0.0;
                    for j in 0..t {
                        acc += x.at(&[ch, s, j]) * enc.a_t.at(&[j, i]);
                    }
                    temp[(ch * n + s) * t + i] = acc;
                }
            }
        }
        let mut lat = vec![0.0; t * n * c];
        for i in 0..t {
            for s in 0..n {
                for co in 0..c {
                    let mut acc = 0.0;
                    for ch in 0..3 {
                        acc += temp[(ch * n + s) * t + i] * enc.w_start.at(&[ch, co]);
                    }
                    lat[(i * n + s) * c + co] = acc;
                }
            }
        }
        let mut spa = vec![0.0; t * n * c];
        for i in 0..t {
            for s in 0..n {
                for co in 0..c {
                    let mut acc = 0.0;
                    for u in 0..n {
                        acc += enc.a_s.at(&[s, u]) * lat[(i * n + u) * c + co];
                    }
                    spa[(i * n + s) * c + co] = acc;
                }
            }
        }
        for co in 0..c {
            for s in 0..n {
                for i in 0..t {
                    let got = tape.value(y)[(co * n + s) * t + i];
                    let want = spa[(i * n + s) * c + co];
                    assert!((got - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn residual_stack_zero_components_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(37);
        let x = Tensor::rand_uniform(&[16, 21, 8], -1.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let xi = tape.constant(&x);
        let y = residual_stack_forward(&mut tape, xi, &[], Mode::Eval, &mut rng).unwrap();
        assert_eq!(tape.value(y), x.data());
    }

    #[test]
    fn residual_stack_preserves_shape() {
        let mut rng = ChaCha12Rng::seed_from_u64(38);
        for s in [21usize, 36] {
            let comp = GcnComponent::init(s, 16, 16, 0.3, &mut rng);
            let mut tape = Tape::new();
            let x = tape.constant(&Tensor::rand_uniform(&[16, s, 8], -1.0, 1.0, &mut rng));
            let ids = comp.bind(&mut tape);
            let y =
                residual_stack_forward(&mut tape, x, &[ids], Mode::Eval, &mut rng).unwrap();
            assert_eq!(tape.shape(y), &[16, s, 8]);
        }
    }

    #[test]
    fn duplicate_time_halves_are_exact_copies() {
        let mut rng = ChaCha12Rng::seed_from_u64(39);
        let x = Tensor::rand_uniform(&[4, 3, 5], -1.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let xi = tape.constant(&x);
        let d = duplicate_time(&mut tape, xi).unwrap();
        let first = tape.slice_axis(d, 2, 0, 5).unwrap();
        let second = tape.slice_axis(d, 2, 5, 5).unwrap();
        assert_eq!(tape.value(first), tape.value(second));
        assert_eq!(tape.value(first), x.data());
    }

    #[test]
    fn single_component_zero_temporal_adjacency_matches_hand_oracle() {
        // with a_t = 0 the component contributes tanh(LN(0)) = tanh(shift),
        // so output = input + tanh(shift) per channel
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        let (c, s, t) = (2, 2, 1);
        let x = Tensor::rand_uniform(&[c, s, t], -1.0, 1.0, &mut rng);
        let shift = Tensor::rand_uniform(&[c], -0.5, 0.5, &mut rng);
        let comp = GcnComponent {
            a_t: Tensor::zeros(&[2 * t, 2 * t]),
            w: Tensor::rand_uniform(&[c, c], -1.0, 1.0, &mut rng),
            a_s: Tensor::rand_uniform(&[s, s], -1.0, 1.0, &mut rng),
            ln_scale: Tensor::full(&[c], 1.0),
            ln_shift: shift.clone(),
            dropout_rate: 0.3,
        };
        let mut tape = Tape::new();
        let xi = tape.constant(&x);
        let ids = comp.bind(&mut tape);
        let y = residual_stack_forward(&mut tape, xi, &[ids], Mode::Eval, &mut rng).unwrap();
        for ch in 0..c {
            for node in 0..s {
                let got = tape.value(y)[(ch * s + node) * t];
                let want = x.at(&[ch, node, 0]) + shift.data()[ch].tanh();
                assert!((got - want).abs() < 1e-12, "got {got} want {want}");
            }
        }
    }

    #[test]
    fn decoder_shapes_and_zero_input() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let dec = DecoderGcn::init(36, 40, 16, &mut rng);
        let mut tape = Tape::new();
        let x = tape.constant(&Tensor::zeros(&[16, 36, 40]));
        let ids = dec.bind(&mut tape);
        let y = decoder_forward(&mut tape, x, &ids).unwrap();
        assert_eq!(tape.shape(y), &[3, 36, 40]);
        assert!(tape.value(y).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn decoder_matches_from_scratch_loops() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let (s, t, c) = (5, 4, 6);
        let x = Tensor::rand_uniform(&[c, s, t], -1.0, 1.0, &mut rng);
        let dec = DecoderGcn::init(s, t, c, &mut rng);
        let mut tape = Tape::new();
        let xi = tape.constant(&x);
        let ids = dec.bind(&mut tape);
        let y = decoder_forward(&mut tape, xi, &ids).unwrap();

        let mut temp = vec![0.0; c * s * t];
        for ch in 0..c {
            for node in 0..s {
                for i in 0..t {
                    let mut acc = 0.0;
                    for j in 0..t {
                        acc += x.at(&[ch, node, j]) * dec.a_t.at(&[j, i]);
                    }
                    temp[(ch * s + node) * t + i] = acc;
                }
            }
        }
        for co in 0..3 {
            for node in 0..s {
                for i in 0..t {
                    let mut acc = 0.0;
                    for u in 0..s {
                        let mut lat = 0.0;
                        for ch in 0..c {
                            lat += temp[(ch * s + u) * t + i] * dec.w_end.at(&[ch, co]);
                        }
                        acc += dec.a_s.at(&[node, u]) * lat;
                    }
                    let got = tape.value(y)[(co * s + node) * t + i];
                    assert!((got - acc).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn encoder_and_decoder_are_linear_maps() {
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let (n, t, c) = (4, 5, 6);
        let enc = EncoderGcn::init(n, t, c, &mut rng);
        let x = Tensor::rand_uniform(&[3, n, t], -1.0, 1.0, &mut rng);
        let y = Tensor::rand_uniform(&[3, n, t], -1.0, 1.0, &mut rng);
        let (alpha, beta) = (2.5, -0.75);

        let run = |input: &Tensor| -> Vec<f64> {
            let mut tape = Tape::new();
            let xi = tape.constant(input);
            let ids = enc.bind(&mut tape);
            let out = encoder_forward(&mut tape, xi, &ids).unwrap();
            tape.value(out).to_vec()
        };
        let mixed = Tensor::from_fn(&[3, n, t], |i| alpha * x.data()[i] + beta * y.data()[i]);
        let lhs = run(&mixed);
        let (fx, fy) = (run(&x), run(&y));
        for i in 0..lhs.len() {
            let want = alpha * fx[i] + beta * fy[i];
            assert!((lhs[i] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn stack_gradients_pass_finite_difference_check() {
        use crate::exec::Exec;
        use crate::gradcheck::{check_against_fd, FD_STEP};

        let mut rng = ChaCha12Rng::seed_from_u64(44);
        let (c, s, t) = (4, 3, 2);
        let comp = GcnComponent::init(s, 2 * t, c, 0.3, &mut rng);
        let x = Tensor::rand_uniform(&[c, s, t], -1.0, 1.0, &mut rng);
        let target = Tensor::rand_uniform(&[c, s, t], -1.0, 1.0, &mut rng);

        let params = vec![
            comp.a_t.clone(),
            comp.w.clone(),
            comp.a_s.clone(),
            comp.ln_scale.clone(),
            comp.ln_shift.clone(),
        ];
        let names: Vec<String> = ["a_t", "w", "a_s", "ln_scale", "ln_shift"]
            .iter()
            .map(|s| s.to_string())
            .collect();

        let build = |ps: &[Tensor], watch: bool| {
            let mut rng = ChaCha12Rng::seed_from_u64(0);
            let mut tape = Tape::new();
            let xi = tape.constant(&x);
            let comp = GcnComponent {
                a_t: ps[0].clone(),
                w: ps[1].clone(),
                a_s: ps[2].clone(),
                ln_scale: ps[3].clone(),
                ln_shift: ps[4].clone(),
                dropout_rate: 0.3,
            };
            let ids = if watch {
                comp.bind(&mut tape)
            } else {
                ComponentIds {
                    a_t: tape.constant(&comp.a_t),
                    w: tape.constant(&comp.w),
                    a_s: tape.constant(&comp.a_s),
                    ln_scale: tape.constant(&comp.ln_scale),
                    ln_shift: tape.constant(&comp.ln_shift),
                    dropout_rate: 0.3,
                }
            };
            let out =
                residual_stack_forward(&mut tape, xi, &[ids], Mode::Eval, &mut rng).unwrap();
            let ti = tape.constant(&target);
            let loss = tape.joint_norm_mean(out, ti, 0.0, false).unwrap();
            (tape, ids, loss)
        };

        let (mut tape, ids, loss) = build(&params, true);
        tape.backward(loss).unwrap();
        let grads = vec![
            tape.grad(ids.a_t).unwrap().to_vec(),
            tape.grad(ids.w).unwrap().to_vec(),
            tape.grad(ids.a_s).unwrap().to_vec(),
            tape.grad(ids.ln_scale).unwrap().to_vec(),
            tape.grad(ids.ln_shift).unwrap().to_vec(),
        ];

        let loss_of = |ps: &[Tensor]| {
            let (tape, _, loss) = build(ps, false);
            tape.scalar_value(loss)
        };
        let report = check_against_fd(&names, &params, &grads, loss_of, FD_STEP, Exec::Sequential);
        assert!(
            report.max_rel_err < 1e-5,
            "residual component fd: {report:?}"
        );
    }
}
