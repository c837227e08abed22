//! Losses (position + velocity), Adam with bias correction, exponential
//! learning-rate decay, and the mini-batch training loop.
//!
//! The loss is the sum of the mean per-joint position error and the mean
//! per-joint velocity error over the forecast frames. Training smooths the
//! norm as sqrt(|d|^2 + eps) for differentiability at zero; the public loss
//! ops use the exact norm with subgradient 0. A squared-norm variant exists
//! as a config switch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::data::Window;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Exec};
use crate::model::{forward, BoundParams, ModelConfig, ModelParams};
use crate::tensor::{Mode, Tape, Tensor, Tid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean per-joint Euclidean error (matches the evaluation metric).
    Norm,
    /// Mean squared per-joint error.
    SquaredNorm,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub loss: LossKind,
    /// Norm smoothing used during training only.
    pub loss_eps: f64,
    /// Include the boundary velocity (first forecast frame minus last
    /// observed pose) in the velocity term.
    pub boundary_velocity: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.01,
            lr_decay: 0.95,
            batch_size: 32,
            epochs: 80,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            loss: LossKind::Norm,
            loss_eps: 1e-12,
            boundary_velocity: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr0 <= 0.0 || !(0.0..=1.0).contains(&self.lr_decay) || self.lr_decay == 0.0 {
            return Err(Error::invalid("train config: lr0 > 0 and 0 < lr_decay <= 1 required"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("train config: batch_size must be >= 1"));
        }
        Ok(())
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_decay.powi(epoch as i32)
    }
}

// ── Losses ───────────────────────────────────────────────────────────

/// Mean per-joint position error: (1/(n F)) sum of Euclidean errors.
/// Exact norm; subgradient 0 at zero error.
pub fn motion_loss(tape: &mut Tape, pred: Tid, gt: Tid) -> Result<Tid> {
    tape.joint_norm_mean(pred, gt, 0.0, false)
}

/// Mean per-joint velocity error over adjacent forecast frames. With
/// `last_obs` ([3, n]) the boundary velocity into the first forecast frame
/// is included as well.
pub fn velocity_loss(tape: &mut Tape, pred: Tid, gt: Tid, last_obs: Option<Tid>) -> Result<Tid> {
    let (vp, vg) = velocities(tape, pred, gt, last_obs)?;
    tape.joint_norm_mean(vp, vg, 0.0, false)
}

/// Position term plus velocity term, unweighted.
pub fn total_loss(tape: &mut Tape, pred: Tid, gt: Tid) -> Result<Tid> {
    let m = motion_loss(tape, pred, gt)?;
    let v = velocity_loss(tape, pred, gt, None)?;
    tape.add(m, v)
}

fn velocities(
    tape: &mut Tape,
    pred: Tid,
    gt: Tid,
    last_obs: Option<Tid>,
) -> Result<(Tid, Tid)> {
    let shape = tape.shape(pred).to_vec();
    if shape.len() != 3 {
        return Err(Error::invalid(format!(
            "velocity_loss: expected [3, n, F] predictions, got {shape:?}"
        )));
    }
    let f = shape[2];
    if f < 2 {
        return Err(Error::invalid(
            "velocity_loss: need at least 2 forecast frames",
        ));
    }
    let diff_time = |tape: &mut Tape, x: Tid| -> Result<Tid> {
        let next = tape.slice_axis(x, 2, 1, f - 1)?;
        let prev = tape.slice_axis(x, 2, 0, f - 1)?;
        tape.sub(next, prev)
    };
    let mut vp = diff_time(tape, pred)?;
    let mut vg = diff_time(tape, gt)?;
    if let Some(last) = last_obs {
        let n = shape[1];
        let last3 = tape.reshape(last, &[3, n, 1])?;
        let first_p = tape.slice_axis(pred, 2, 0, 1)?;
        let first_g = tape.slice_axis(gt, 2, 0, 1)?;
        let bp = tape.sub(first_p, last3)?;
        let bg = tape.sub(first_g, last3)?;
        vp = tape.concat(&[bp, vp], 2)?;
        vg = tape.concat(&[bg, vg], 2)?;
    }
    Ok((vp, vg))
}

/// Training-time loss: smoothed (or squared) norm on both terms.
fn training_loss(tape: &mut Tape, pred: Tid, gt: Tid, cfg: &TrainConfig) -> Result<Tid> {
    let (eps, squared) = match cfg.loss {
        LossKind::Norm => (cfg.loss_eps, false),
        LossKind::SquaredNorm => (0.0, true),
    };
    let m = tape.joint_norm_mean(pred, gt, eps, squared)?;
    let (vp, vg) = velocities(tape, pred, gt, None)?;
    let v = tape.joint_norm_mean(vp, vg, eps, squared)?;
    tape.add(m, v)
}

// ── Adam ─────────────────────────────────────────────────────────────

/// Adam with bias correction. Moments are kept per parameter, aligned with
/// the model's canonical parameter order.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamState {
    pub fn for_params(params: &ModelParams, cfg: &TrainConfig) -> Self {
        let sizes: Vec<usize> = params.param_refs().iter().map(|(_, t)| t.numel()).collect();
        AdamState {
            m: sizes.iter().map(|n| vec![0.0; *n]).collect(),
            v: sizes.iter().map(|n| vec![0.0; *n]).collect(),
            step: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }

    pub fn for_named(named: &[(String, &Tensor)], cfg: &TrainConfig) -> Self {
        AdamState {
            m: named.iter().map(|(_, t)| vec![0.0; t.numel()]).collect(),
            v: named.iter().map(|(_, t)| vec![0.0; t.numel()]).collect(),
            step: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the whole model.
    pub fn step_model(
        &mut self,
        params: &mut ModelParams,
        grads: &[Vec<f64>],
        lr: f64,
    ) -> Result<()> {
        let mut named = params.param_refs_mut();
        self.step_named(&mut named, grads, lr)
    }

    /// One update over an explicit named parameter list.
    pub fn step_named(
        &mut self,
        named: &mut [(String, &mut Tensor)],
        grads: &[Vec<f64>],
        lr: f64,
    ) -> Result<()> {
        if named.len() != grads.len() || named.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "adam: {} params, {} grads, {} moment slots",
                named.len(),
                grads.len(),
                self.m.len()
            )));
        }
        if lr < 0.0 {
            return Err(Error::invalid("adam: negative learning rate"));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (pi, (name, tensor)) in named.iter_mut().enumerate() {
            let g = &grads[pi];
            if g.len() != tensor.numel() {
                return Err(Error::invalid(format!(
                    "adam: gradient length {} for `{name}` of size {}",
                    g.len(),
                    tensor.numel()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { name: name.clone() });
            }
            let (m, v) = (&mut self.m[pi], &mut self.v[pi]);
            let data = tensor.data_mut();
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

// ── Training loop ────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub curve: Vec<EpochStats>,
}

/// Deterministic sub-seed derivation (SplitMix64 over mixed words).
pub(crate) fn derive_seed(base: u64, tag: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(a.rotate_left(17))
        .wrapping_add(b.rotate_left(41));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-sample loss and gradients (flat, canonical parameter order).
fn sample_gradients(
    window: &Window,
    params: &ModelParams,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    dropout_seed: u64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params);
    let mut rng = ChaCha12Rng::seed_from_u64(dropout_seed);
    let out = forward(
        &mut tape,
        &bound,
        params,
        &window.pose_in,
        &window.head_in,
        &window.objects,
        model_cfg,
        Mode::Train,
        &mut rng,
    )?;
    let gt = tape.constant(&window.target);
    let loss = training_loss(&mut tape, out, gt, cfg)?;
    let loss_value = tape.scalar_value(loss);
    tape.backward(loss)?;
    let grads = bound
        .id_list()
        .iter()
        .map(|id| match tape.grad(*id) {
            Some(g) => g.to_vec(),
            None => vec![0.0; tape.value(*id).len()],
        })
        .collect();
    Ok((loss_value, grads))
}

/// Train from scratch over the given windows.
pub fn train(
    windows: &[Window],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<TrainOutcome> {
    train_with_callback(windows, model_cfg, cfg, exec, |_, _| Ok(()))
}

/// As [`train`], invoking `on_epoch` after every epoch (checkpoint hooks).
pub fn train_with_callback(
    windows: &[Window],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    exec: Exec,
    mut on_epoch: impl FnMut(&EpochStats, &ModelParams) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::Data("train: empty window set".into()));
    }
    let mut params = ModelParams::init(model_cfg, cfg.seed)?;
    let mut adam = AdamState::for_params(&params, cfg);
    let mut curve = Vec::with_capacity(cfg.epochs);

    let mut order: Vec<usize> = (0..windows.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at_epoch(epoch);
        let mut shuffle_rng =
            ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX, epoch as u64, 0));
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let results = map_indexed(exec, chunk.len(), |slot| {
                let seed = derive_seed(cfg.seed, epoch as u64, batch_idx as u64, slot as u64);
                sample_gradients(&windows[chunk[slot]], &params, model_cfg, cfg, seed)
            });
            let mut batch_loss = 0.0;
            let mut grad_sum: Option<Vec<Vec<f64>>> = None;
            for r in results {
                let (loss, grads) = r?;
                batch_loss += loss;
                match &mut grad_sum {
                    None => grad_sum = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            for (x, y) in a.iter_mut().zip(g) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite {
                    stage: format!("training loss at epoch {epoch}, batch {batch_idx}"),
                });
            }
            let mut grads = grad_sum.expect("non-empty batch");
            let scale = 1.0 / chunk.len() as f64;
            for g in grads.iter_mut() {
                for v in g.iter_mut() {
                    *v *= scale;
                }
            }
            adam.step_model(&mut params, &grads, lr)?;
            loss_sum += batch_loss;
        }

        let stats = EpochStats {
            epoch,
            lr,
            mean_loss: loss_sum / windows.len() as f64,
        };
        on_epoch(&stats, &params)?;
        curve.push(stats);
    }
    if !params.all_finite() {
        return Err(Error::NonFinite {
            stage: "parameters after training".into(),
        });
    }
    Ok(TrainOutcome { params, curve })
}

/// Plain-text loss curve: one aligned row per epoch.
pub fn format_loss_curve(curve: &[EpochStats]) -> String {
    let mut out = String::from("epoch          lr    train_loss\n");
    for s in curve {
        out.push_str(&format!("{:>5} {:>11.8} {:>13.9}\n", s.epoch, s.lr, s.mean_loss));
    }
    out
}
