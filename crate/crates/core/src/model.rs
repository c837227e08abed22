//! The full forecaster: encoder + pose residual stack, head/object MLP
//! features, pose-object graph fusion, fuse residual stack, decoder, inverse
//! DCT, and the global residual that anchors predictions to the last
//! observed pose.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::dct::{make_dct_pair, DctPair};
use crate::error::{Error, Result};
use crate::gcn::{
    decoder_forward, encoder_forward, residual_stack_forward, DecoderGcn, DecoderIds, EncoderGcn,
    EncoderIds, GcnComponent, ComponentIds,
};
use crate::mlp::{extract_head_features, extract_object_features, pad_repeat_last, Mlp3, Mlp3Ids};
use crate::scene::SelectedObjects;
use crate::tensor::{Mode, Tape, Tensor, Tid};

/// Architecture and ablation switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_joints: usize,
    pub t_in: usize,
    pub t_total: usize,
    pub feature_dim: usize,
    pub n_pose_residual: usize,
    pub n_fuse_residual: usize,
    /// Spatial nodes per auxiliary stream in the fused graph.
    pub repeat_nodes: usize,
    pub objects_per_category: usize,
    pub use_head: bool,
    pub use_static: bool,
    pub use_dynamic: bool,
    pub mlp_hidden: usize,
    pub gcn_dropout: f64,
    pub mlp_dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_joints: 21,
            t_in: 10,
            t_total: 40,
            feature_dim: 16,
            n_pose_residual: 8,
            n_fuse_residual: 16,
            repeat_nodes: 5,
            objects_per_category: 2,
            use_head: true,
            use_static: true,
            use_dynamic: true,
            mlp_hidden: 128,
            gcn_dropout: 0.3,
            mlp_dropout: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_in == 0 || self.t_in >= self.t_total {
            return Err(Error::invalid(format!(
                "config: t_in {} must lie in 1..t_total {}",
                self.t_in, self.t_total
            )));
        }
        if self.n_joints == 0 {
            return Err(Error::invalid("config: n_joints must be >= 1"));
        }
        if self.repeat_nodes == 0 {
            return Err(Error::invalid("config: repeat_nodes must be >= 1"));
        }
        if self.feature_dim < 2 || self.mlp_hidden < 2 {
            return Err(Error::invalid(
                "config: feature_dim and mlp_hidden must be >= 2 for layer norm",
            ));
        }
        if !(0.0..1.0).contains(&self.gcn_dropout) || !(0.0..1.0).contains(&self.mlp_dropout) {
            return Err(Error::invalid("config: dropout rates must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn t_out(&self) -> usize {
        self.t_total - self.t_in
    }

    pub fn head_active(&self) -> bool {
        self.use_head
    }

    pub fn dynamic_active(&self) -> bool {
        self.use_dynamic && self.objects_per_category > 0
    }

    pub fn static_active(&self) -> bool {
        self.use_static && self.objects_per_category > 0
    }

    fn active_streams(&self) -> usize {
        usize::from(self.head_active())
            + usize::from(self.dynamic_active())
            + usize::from(self.static_active())
    }

    /// Node count of the fused spatio-temporal graph.
    pub fn fused_nodes(&self) -> usize {
        self.n_joints + self.repeat_nodes * self.active_streams()
    }

    fn object_input_dim(&self) -> usize {
        24 * self.objects_per_category
    }
}

/// Every learnable array of the model, in canonical order.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub encoder: EncoderGcn,
    pub pose_stack: Vec<GcnComponent>,
    pub head_mlp: Option<Mlp3>,
    pub dynamic_mlp: Option<Mlp3>,
    pub static_mlp: Option<Mlp3>,
    pub fuse_stack: Vec<GcnComponent>,
    pub decoder: DecoderGcn,
    pub dct: DctPair,
}

impl ModelParams {
    /// Seeded fan-in initialization for the given architecture.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let c = cfg.feature_dim;
        let encoder = EncoderGcn::init(cfg.n_joints, cfg.t_total, c, &mut rng);
        let pose_stack = (0..cfg.n_pose_residual)
            .map(|_| GcnComponent::init(cfg.n_joints, 2 * cfg.t_total, c, cfg.gcn_dropout, &mut rng))
            .collect();
        let head_mlp = cfg
            .head_active()
            .then(|| Mlp3::init(3, cfg.mlp_hidden, c, cfg.mlp_dropout, &mut rng));
        let dynamic_mlp = cfg
            .dynamic_active()
            .then(|| Mlp3::init(cfg.object_input_dim(), cfg.mlp_hidden, c, cfg.mlp_dropout, &mut rng));
        let static_mlp = cfg
            .static_active()
            .then(|| Mlp3::init(cfg.object_input_dim(), cfg.mlp_hidden, c, cfg.mlp_dropout, &mut rng));
        let s = cfg.fused_nodes();
        let fuse_stack = (0..cfg.n_fuse_residual)
            .map(|_| GcnComponent::init(s, 2 * cfg.t_total, c, cfg.gcn_dropout, &mut rng))
            .collect();
        let decoder = DecoderGcn::init(s, cfg.t_total, c, &mut rng);
        Ok(ModelParams {
            encoder,
            pose_stack,
            head_mlp,
            dynamic_mlp,
            static_mlp,
            fuse_stack,
            decoder,
            dct: make_dct_pair(cfg.t_total)?,
        })
    }

    /// Named references to every parameter, in canonical order.
    pub fn param_refs(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        out.push(("encoder.a_t".into(), &self.encoder.a_t));
        out.push(("encoder.w_start".into(), &self.encoder.w_start));
        out.push(("encoder.a_s".into(), &self.encoder.a_s));
        for (i, comp) in self.pose_stack.iter().enumerate() {
            push_component_refs(&mut out, &format!("pose.{i}"), comp);
        }
        if let Some(m) = &self.head_mlp {
            push_mlp_refs(&mut out, "head_mlp", m);
        }
        if let Some(m) = &self.dynamic_mlp {
            push_mlp_refs(&mut out, "dynamic_mlp", m);
        }
        if let Some(m) = &self.static_mlp {
            push_mlp_refs(&mut out, "static_mlp", m);
        }
        for (i, comp) in self.fuse_stack.iter().enumerate() {
            push_component_refs(&mut out, &format!("fuse.{i}"), comp);
        }
        out.push(("decoder.a_t".into(), &self.decoder.a_t));
        out.push(("decoder.w_end".into(), &self.decoder.w_end));
        out.push(("decoder.a_s".into(), &self.decoder.a_s));
        out
    }

    /// Mutable counterpart of [`param_refs`], same order.
    pub fn param_refs_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        out.push(("encoder.a_t".into(), &mut self.encoder.a_t));
        out.push(("encoder.w_start".into(), &mut self.encoder.w_start));
        out.push(("encoder.a_s".into(), &mut self.encoder.a_s));
        for (i, comp) in self.pose_stack.iter_mut().enumerate() {
            push_component_refs_mut(&mut out, &format!("pose.{i}"), comp);
        }
        if let Some(m) = &mut self.head_mlp {
            push_mlp_refs_mut(&mut out, "head_mlp", m);
        }
        if let Some(m) = &mut self.dynamic_mlp {
            push_mlp_refs_mut(&mut out, "dynamic_mlp", m);
        }
        if let Some(m) = &mut self.static_mlp {
            push_mlp_refs_mut(&mut out, "static_mlp", m);
        }
        for (i, comp) in self.fuse_stack.iter_mut().enumerate() {
            push_component_refs_mut(&mut out, &format!("fuse.{i}"), comp);
        }
        out.push(("decoder.a_t".into(), &mut self.decoder.a_t));
        out.push(("decoder.w_end".into(), &mut self.decoder.w_end));
        out.push(("decoder.a_s".into(), &mut self.decoder.a_s));
        out
    }

    pub fn all_finite(&self) -> bool {
        self.param_refs().iter().all(|(_, t)| t.is_finite())
    }

    /// Zero the decoder block; with it zeroed the model output equals the
    /// repeated last observed pose exactly.
    pub fn zero_decoder(&mut self) {
        self.decoder.a_t = Tensor::zeros(self.decoder.a_t.shape()).with_grad();
        self.decoder.w_end = Tensor::zeros(self.decoder.w_end.shape()).with_grad();
        self.decoder.a_s = Tensor::zeros(self.decoder.a_s.shape()).with_grad();
    }
}

fn push_component_refs<'a>(
    out: &mut Vec<(String, &'a Tensor)>,
    prefix: &str,
    comp: &'a GcnComponent,
) {
    out.push((format!("{prefix}.a_t"), &comp.a_t));
    out.push((format!("{prefix}.w"), &comp.w));
    out.push((format!("{prefix}.a_s"), &comp.a_s));
    out.push((format!("{prefix}.ln_scale"), &comp.ln_scale));
    out.push((format!("{prefix}.ln_shift"), &comp.ln_shift));
}

fn push_component_refs_mut<'a>(
    out: &mut Vec<(String, &'a mut Tensor)>,
    prefix: &str,
    comp: &'a mut GcnComponent,
) {
    out.push((format!("{prefix}.a_t"), &mut comp.a_t));
    out.push((format!("{prefix}.w"), &mut comp.w));
    out.push((format!("{prefix}.a_s"), &mut comp.a_s));
    out.push((format!("{prefix}.ln_scale"), &mut comp.ln_scale));
    out.push((format!("{prefix}.ln_shift"), &mut comp.ln_shift));
}

fn push_mlp_refs<'a>(out: &mut Vec<(String, &'a Tensor)>, prefix: &str, m: &'a Mlp3) {
    out.push((format!("{prefix}.w1"), &m.w1));
    out.push((format!("{prefix}.b1"), &m.b1));
    out.push((format!("{prefix}.ln1_scale"), &m.ln1_scale));
    out.push((format!("{prefix}.ln1_shift"), &m.ln1_shift));
    out.push((format!("{prefix}.w2"), &m.w2));
    out.push((format!("{prefix}.b2"), &m.b2));
    out.push((format!("{prefix}.ln2_scale"), &m.ln2_scale));
    out.push((format!("{prefix}.ln2_shift"), &m.ln2_shift));
    out.push((format!("{prefix}.w3"), &m.w3));
    out.push((format!("{prefix}.b3"), &m.b3));
    out.push((format!("{prefix}.ln3_scale"), &m.ln3_scale));
    out.push((format!("{prefix}.ln3_shift"), &m.ln3_shift));
}

fn push_mlp_refs_mut<'a>(out: &mut Vec<(String, &'a mut Tensor)>, prefix: &str, m: &'a mut Mlp3) {
    out.push((format!("{prefix}.w1"), &mut m.w1));
    out.push((format!("{prefix}.b1"), &mut m.b1));
    out.push((format!("{prefix}.ln1_scale"), &mut m.ln1_scale));
    out.push((format!("{prefix}.ln1_shift"), &mut m.ln1_shift));
    out.push((format!("{prefix}.w2"), &mut m.w2));
    out.push((format!("{prefix}.b2"), &mut m.b2));
    out.push((format!("{prefix}.ln2_scale"), &mut m.ln2_scale));
    out.push((format!("{prefix}.ln2_shift"), &mut m.ln2_shift));
    out.push((format!("{prefix}.w3"), &mut m.w3));
    out.push((format!("{prefix}.b3"), &mut m.b3));
    out.push((format!("{prefix}.ln3_scale"), &mut m.ln3_scale));
    out.push((format!("{prefix}.ln3_shift"), &mut m.ln3_shift));
}

/// Exact number of learnable scalars.
pub fn count_parameters(params: &ModelParams) -> usize {
    params.param_refs().iter().map(|(_, t)| t.numel()).sum()
}

/// Tape handles for every parameter, bound in canonical order.
pub struct BoundParams {
    pub encoder: EncoderIds,
    pub pose_stack: Vec<ComponentIds>,
    pub head_mlp: Option<Mlp3Ids>,
    pub dynamic_mlp: Option<Mlp3Ids>,
    pub static_mlp: Option<Mlp3Ids>,
    pub fuse_stack: Vec<ComponentIds>,
    pub decoder: DecoderIds,
}

impl BoundParams {
    pub fn bind(tape: &mut Tape, params: &ModelParams) -> Self {
        BoundParams {
            encoder: params.encoder.bind(tape),
            pose_stack: params.pose_stack.iter().map(|c| c.bind(tape)).collect(),
            head_mlp: params.head_mlp.as_ref().map(|m| m.bind(tape)),
            dynamic_mlp: params.dynamic_mlp.as_ref().map(|m| m.bind(tape)),
            static_mlp: params.static_mlp.as_ref().map(|m| m.bind(tape)),
            fuse_stack: params.fuse_stack.iter().map(|c| c.bind(tape)).collect(),
            decoder: params.decoder.bind(tape),
        }
    }

    /// Flat id list matching `ModelParams::param_refs` order.
    pub fn id_list(&self) -> Vec<Tid> {
        let mut out = vec![self.encoder.a_t, self.encoder.w_start, self.encoder.a_s];
        let comp_ids = |c: &ComponentIds| [c.a_t, c.w, c.a_s, c.ln_scale, c.ln_shift];
        let mlp_ids = |m: &Mlp3Ids| {
            [
                m.w1, m.b1, m.ln1_scale, m.ln1_shift, m.w2, m.b2, m.ln2_scale, m.ln2_shift, m.w3,
                m.b3, m.ln3_scale, m.ln3_shift,
            ]
        };
        for c in &self.pose_stack {
            out.extend(comp_ids(c));
        }
        for m in [&self.head_mlp, &self.dynamic_mlp, &self.static_mlp].into_iter().flatten() {
            out.extend(mlp_ids(m));
        }
        for c in &self.fuse_stack {
            out.extend(comp_ids(c));
        }
        out.extend([self.decoder.a_t, self.decoder.w_end, self.decoder.a_s]);
        out
    }
}

/// Expand each enabled auxiliary [C, T] stream to `repeat_nodes` spatial
/// nodes and concatenate onto the pose features in fixed order:
/// pose, head, dynamic, static.
pub fn fuse_features(
    tape: &mut Tape,
    f_pose: Tid,
    f_head: Option<Tid>,
    f_dynamic: Option<Tid>,
    f_static: Option<Tid>,
    cfg: &ModelConfig,
) -> Result<Tid> {
    let mut parts = vec![f_pose];
    for stream in [f_head, f_dynamic, f_static].into_iter().flatten() {
        let expanded = tape.repeat_new_axis(stream, 1, cfg.repeat_nodes)?; // [C, R, T]
        parts.push(expanded);
    }
    tape.concat(&parts, 1)
}

/// Full forward pass. Inputs are world-space meters; output is the forecast
/// [3, n, t_out] for the frames after the observation window.
#[allow(clippy::too_many_arguments)]
pub fn forward(
    tape: &mut Tape,
    bound: &BoundParams,
    params: &ModelParams,
    pose: &Tensor,
    head: &Tensor,
    objects: &SelectedObjects,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Tid> {
    if pose.shape() != [3, cfg.n_joints, cfg.t_in] {
        return Err(Error::ShapeMismatch {
            op: "forward(pose)",
            lhs: pose.shape().to_vec(),
            rhs: vec![3, cfg.n_joints, cfg.t_in],
        });
    }
    if !pose.is_finite() {
        return Err(Error::NonFinite {
            stage: "input pose".into(),
        });
    }
    let dct = &params.dct;

    // pose branch
    let p_in = tape.constant(pose);
    let p_pad = pad_repeat_last(tape, p_in, cfg.t_total)?;
    let p_dct = dct.dct_time_on(tape, p_pad)?;
    let f = encoder_forward(tape, p_dct, &bound.encoder)?;
    tape.assert_finite(f, "encoder")?;
    let f_pose = residual_stack_forward(tape, f, &bound.pose_stack, mode, rng)?;
    tape.assert_finite(f_pose, "pose residual stack")?;

    // auxiliary branches
    let f_head = match &bound.head_mlp {
        Some(mlp) => {
            if head.shape() != [3, cfg.t_in] {
                return Err(Error::ShapeMismatch {
                    op: "forward(head)",
                    lhs: head.shape().to_vec(),
                    rhs: vec![3, cfg.t_in],
                });
            }
            let h_in = tape.constant(head);
            let feats = extract_head_features(tape, h_in, dct, mlp, mode, rng)?;
            tape.assert_finite(feats, "head features")?;
            Some(feats)
        }
        None => None,
    };
    let f_dynamic = object_stream(
        tape,
        &bound.dynamic_mlp,
        &objects.dynamic,
        "dynamic object features",
        dct,
        cfg,
        mode,
        rng,
    )?;
    let f_static = object_stream(
        tape,
        &bound.static_mlp,
        &objects.statics,
        "static object features",
        dct,
        cfg,
        mode,
        rng,
    )?;

    // fusion and decoding
    let fused = fuse_features(tape, f_pose, f_head, f_dynamic, f_static, cfg)?;
    tape.assert_finite(fused, "fusion")?;
    let g = residual_stack_forward(tape, fused, &bound.fuse_stack, mode, rng)?;
    tape.assert_finite(g, "fuse residual stack")?;
    let y_d = decoder_forward(tape, g, &bound.decoder)?;
    let y = dct.idct_time_on(tape, y_d)?;
    tape.assert_finite(y, "decoder")?;

    // global residual on the pose node block only
    let y_pose = tape.slice_axis(y, 1, 0, cfg.n_joints)?;
    let full = tape.add(y_pose, p_pad)?;
    let out = tape.slice_axis(full, 2, cfg.t_in, cfg.t_out())?;
    tape.assert_finite(out, "output")?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn object_stream(
    tape: &mut Tape,
    mlp: &Option<Mlp3Ids>,
    boxes: &Tensor,
    stage: &str,
    dct: &DctPair,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Option<Tid>> {
    match mlp {
        Some(ids) => {
            let want = [3, 8, cfg.objects_per_category, cfg.t_in];
            if boxes.shape() != want {
                return Err(Error::ShapeMismatch {
                    op: "forward(objects)",
                    lhs: boxes.shape().to_vec(),
                    rhs: want.to_vec(),
                });
            }
            let b_in = tape.constant(boxes);
            let feats = extract_object_features(tape, b_in, dct, ids, mode, rng)?;
            tape.assert_finite(feats, stage)?;
            Ok(Some(feats))
        }
        None => Ok(None),
    }
}

/// Eval-mode forward returning a plain tensor.
pub fn predict(
    params: &ModelParams,
    cfg: &ModelConfig,
    pose: &Tensor,
    head: &Tensor,
    objects: &SelectedObjects,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params);
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let out = forward(
        &mut tape, &bound, params, pose, head, objects, cfg, Mode::Eval, &mut rng,
    )?;
    Ok(tape.tensor(out))
}
