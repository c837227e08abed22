//! Per-horizon MPJPE evaluation, trivial baselines, and the ablation runner.
//!
//! Reports carry the error at each 100 ms horizon (frames 3, 6, ..., 30 at
//! 30 Hz), the per-frame curve, and the average over all forecast frames.
//! Horizon errors are per-frame, not cumulative; the average column covers
//! the cumulative view.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{corpus_windows, Sequence, Window, WindowSpec};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Exec};
use crate::model::{predict, ModelConfig, ModelParams};
use crate::tensor::Tensor;
use crate::train::{train, TrainConfig};

pub const FPS: u32 = 30;

/// Mean over joints of the Euclidean error at forecast frame `k` (1-based),
/// in millimeters.
pub fn mpjpe_at(pred: &Tensor, gt: &Tensor, k: usize) -> Result<f64> {
    if pred.shape() != gt.shape() || pred.ndim() != 3 {
        return Err(Error::ShapeMismatch {
            op: "mpjpe_at",
            lhs: pred.shape().to_vec(),
            rhs: gt.shape().to_vec(),
        });
    }
    let (n, f) = (pred.shape()[1], pred.shape()[2]);
    if k == 0 || k > f {
        return Err(Error::invalid(format!(
            "mpjpe_at: frame {k} outside 1..={f}"
        )));
    }
    let fr = k - 1;
    let mut sum = 0.0;
    for j in 0..n {
        let mut sq = 0.0;
        for c in 0..3 {
            let d = pred.at(&[c, j, fr]) - gt.at(&[c, j, fr]);
            sq += d * d;
        }
        sum += sq.sqrt();
    }
    Ok(sum / n as f64 * 1000.0)
}

/// Trivial predictors standing in for learned baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Repeat the last observed pose.
    ZeroVelocity,
    /// Extrapolate the last observed frame difference.
    ConstantVelocity,
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero_velocity" => Ok(Baseline::ZeroVelocity),
            "constant_velocity" => Ok(Baseline::ConstantVelocity),
            other => Err(Error::invalid(format!(
                "unknown baseline `{other}` (expected zero_velocity or constant_velocity)"
            ))),
        }
    }
}

/// Anything that maps an observation window to a [3, n, t_out] forecast.
pub trait Forecaster: Sync {
    fn forecast(&self, window: &Window) -> Result<Tensor>;
    fn tag(&self) -> String;
    /// Hash making the report self-describing (config + weights for models).
    fn fingerprint(&self) -> String;
}

impl Baseline {
    fn predict_window(&self, window: &Window, t_out: usize) -> Tensor {
        let shape = window.pose_in.shape();
        let (n, t_in) = (shape[1], shape[2]);
        let at = |c: usize, j: usize, f: usize| window.pose_in.data()[(c * n + j) * t_in + f];
        Tensor::from_fn(&[3, n, t_out], |i| {
            let c = i / (n * t_out);
            let j = (i / t_out) % n;
            let f = i % t_out;
            let last = at(c, j, t_in - 1);
            match self {
                Baseline::ZeroVelocity => last,
                Baseline::ConstantVelocity => {
                    if t_in < 2 {
                        last
                    } else {
                        let v = last - at(c, j, t_in - 2);
                        last + (f + 1) as f64 * v
                    }
                }
            }
        })
    }
}

/// Baseline bound to a forecast length.
pub struct BaselineForecaster {
    pub kind: Baseline,
    pub t_out: usize,
}

impl Forecaster for BaselineForecaster {
    fn forecast(&self, window: &Window) -> Result<Tensor> {
        Ok(self.kind.predict_window(window, self.t_out))
    }

    fn tag(&self) -> String {
        match self.kind {
            Baseline::ZeroVelocity => "zero_velocity".into(),
            Baseline::ConstantVelocity => "constant_velocity".into(),
        }
    }

    fn fingerprint(&self) -> String {
        short_hash(self.tag().as_bytes())
    }
}

/// A trained model in eval mode.
pub struct ModelForecaster<'a> {
    pub params: &'a ModelParams,
    pub cfg: &'a ModelConfig,
}

impl Forecaster for ModelForecaster<'_> {
    fn forecast(&self, window: &Window) -> Result<Tensor> {
        predict(
            self.params,
            self.cfg,
            &window.pose_in,
            &window.head_in,
            &window.objects,
        )
    }

    fn tag(&self) -> String {
        "model".into()
    }

    fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self.cfg).unwrap_or_default());
        for (name, t) in self.params.param_refs() {
            hasher.update(name.as_bytes());
            for v in t.data() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex16(&hasher.finalize())
    }
}

fn short_hash(bytes: &[u8]) -> String {
    hex16(&Sha256::digest(bytes))
}

fn hex16(digest: &[u8]) -> String {
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Per-horizon and average MPJPE over an evaluation corpus.
#[derive(Debug, Clone, Serialize)]
pub struct ForecastReport {
    pub tag: String,
    pub fingerprint: String,
    pub samples: usize,
    pub horizons_ms: Vec<u32>,
    pub horizon_frames: Vec<usize>,
    pub horizon_mpjpe_mm: Vec<f64>,
    pub per_frame_mpjpe_mm: Vec<f64>,
    pub average_mpjpe_mm: f64,
}

impl ForecastReport {
    /// Aligned text table: one row of horizon columns plus the average.
    pub fn table(&self) -> String {
        let mut header = String::from("tag              ");
        let mut row = format!("{:<17}", self.tag);
        for ms in &self.horizons_ms {
            header.push_str(&format!("{:>9}", format!("{ms} ms")));
        }
        header.push_str(&format!("{:>9}", "Average"));
        for v in &self.horizon_mpjpe_mm {
            row.push_str(&format!("{v:>9.1}"));
        }
        row.push_str(&format!("{:>9.1}", self.average_mpjpe_mm));
        format!("{header}\n{row}\n")
    }

    /// Average MPJPE over a joint subset (e.g. the arm block), recomputed
    /// from scratch; used by conditioning experiments.
    pub fn joint_subset_average(
        forecaster: &dyn Forecaster,
        corpus: &[Window],
        joints: &[usize],
        exec: Exec,
    ) -> Result<f64> {
        if corpus.is_empty() || joints.is_empty() {
            return Err(Error::Data("joint_subset_average: empty input".into()));
        }
        let per_window = map_slice(exec, corpus, |w| -> Result<f64> {
            let pred = forecaster.forecast(w)?;
            let f = pred.shape()[2];
            let mut sum = 0.0;
            for fr in 0..f {
                for &j in joints {
                    let mut sq = 0.0;
                    for c in 0..3 {
                        let d = pred.at(&[c, j, fr]) - w.target.at(&[c, j, fr]);
                        sq += d * d;
                    }
                    sum += sq.sqrt();
                }
            }
            Ok(sum / (f * joints.len()) as f64 * 1000.0)
        });
        let mut total = 0.0;
        for w in per_window {
            total += w?;
        }
        Ok(total / corpus.len() as f64)
    }
}

/// Millisecond horizons that fit into `t_out` frames at 30 Hz.
pub fn standard_horizons(t_out: usize) -> (Vec<u32>, Vec<usize>) {
    let mut ms = Vec::new();
    let mut frames = Vec::new();
    for h in (100..=1000).step_by(100) {
        let frame = ((h * FPS as usize) as f64 / 1000.0).round() as usize;
        if frame >= 1 && frame <= t_out {
            ms.push(h as u32);
            frames.push(frame);
        }
    }
    (ms, frames)
}

/// Evaluate a forecaster over a window corpus, deterministically.
pub fn evaluate(forecaster: &dyn Forecaster, corpus: &[Window], exec: Exec) -> Result<ForecastReport> {
    if corpus.is_empty() {
        return Err(Error::Data("evaluate: empty corpus".into()));
    }
    let n = corpus[0].pose_in.shape()[1];
    let t_out = corpus[0].target.shape()[2];

    // per-window sums over joints, one entry per forecast frame
    let per_window = map_slice(exec, corpus, |w| -> Result<Vec<f64>> {
        let pred = forecaster.forecast(w)?;
        if pred.shape() != w.target.shape() {
            return Err(Error::ShapeMismatch {
                op: "evaluate",
                lhs: pred.shape().to_vec(),
                rhs: w.target.shape().to_vec(),
            });
        }
        let mut sums = vec![0.0; t_out];
        for (fr, slot) in sums.iter_mut().enumerate() {
            for j in 0..n {
                let mut sq = 0.0;
                for c in 0..3 {
                    let d = pred.at(&[c, j, fr]) - w.target.at(&[c, j, fr]);
                    sq += d * d;
                }
                *slot += sq.sqrt();
            }
        }
        Ok(sums)
    });

    let mut frame_sums = vec![0.0; t_out];
    for w in per_window {
        for (acc, v) in frame_sums.iter_mut().zip(w?) {
            *acc += v;
        }
    }
    let denom = (corpus.len() * n) as f64;
    let per_frame_mpjpe_mm: Vec<f64> = frame_sums.iter().map(|s| s / denom * 1000.0).collect();
    let average_mpjpe_mm = per_frame_mpjpe_mm.iter().sum::<f64>() / t_out as f64;
    let (horizons_ms, horizon_frames) = standard_horizons(t_out);
    let horizon_mpjpe_mm = horizon_frames
        .iter()
        .map(|f| per_frame_mpjpe_mm[f - 1])
        .collect();

    Ok(ForecastReport {
        tag: forecaster.tag(),
        fingerprint: forecaster.fingerprint(),
        samples: corpus.len(),
        horizons_ms,
        horizon_frames,
        horizon_mpjpe_mm,
        per_frame_mpjpe_mm,
        average_mpjpe_mm,
    })
}

// ── Ablation runner ──────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    UseHead,
    UseDynamic,
    UseStatic,
    ObjectCount,
    RepeatNodes,
    PoseResidual,
    FuseResidual,
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head" => Ok(AblationAxis::UseHead),
            "dynamic" => Ok(AblationAxis::UseDynamic),
            "static" => Ok(AblationAxis::UseStatic),
            "objects" => Ok(AblationAxis::ObjectCount),
            "repeat-nodes" => Ok(AblationAxis::RepeatNodes),
            "pose-residual" => Ok(AblationAxis::PoseResidual),
            "fuse-residual" => Ok(AblationAxis::FuseResidual),
            other => Err(Error::invalid(format!(
                "unknown ablation axis `{other}` (head, dynamic, static, objects, \
                 repeat-nodes, pose-residual, fuse-residual)"
            ))),
        }
    }
}

impl AblationAxis {
    pub fn apply(&self, base: &ModelConfig, value: u32) -> ModelConfig {
        let mut cfg = base.clone();
        match self {
            AblationAxis::UseHead => cfg.use_head = value != 0,
            AblationAxis::UseDynamic => cfg.use_dynamic = value != 0,
            AblationAxis::UseStatic => cfg.use_static = value != 0,
            AblationAxis::ObjectCount => cfg.objects_per_category = value as usize,
            AblationAxis::RepeatNodes => cfg.repeat_nodes = value as usize,
            AblationAxis::PoseResidual => cfg.n_pose_residual = value as usize,
            AblationAxis::FuseResidual => cfg.n_fuse_residual = value as usize,
        }
        cfg
    }
}

#[derive(Debug)]
pub struct AblationPoint {
    pub value: u32,
    pub config: ModelConfig,
    pub report: Option<ForecastReport>,
    pub skipped: Option<String>,
}

/// Retrain from scratch at every grid point (identical seeds) and evaluate.
/// Invalid points are skipped with a recorded reason.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    train_seqs: &[Sequence],
    eval_seqs: &[Sequence],
    wspec: &WindowSpec,
    base_cfg: &ModelConfig,
    tcfg: &TrainConfig,
    axis: AblationAxis,
    values: &[u32],
    exec: Exec,
) -> Result<Vec<AblationPoint>> {
    let mut out = Vec::with_capacity(values.len());
    for &value in values {
        let cfg = axis.apply(base_cfg, value);
        if let Err(e) = cfg.validate() {
            out.push(AblationPoint {
                value,
                config: cfg,
                report: None,
                skipped: Some(e.to_string()),
            });
            continue;
        }
        let point_wspec = WindowSpec {
            objects_per_category: cfg.objects_per_category,
            ..wspec.clone()
        };
        let train_windows = corpus_windows(train_seqs, &point_wspec, exec)?;
        let eval_windows = corpus_windows(eval_seqs, &point_wspec, exec)?;
        let outcome = train(&train_windows, &cfg, tcfg, exec)?;
        let forecaster = ModelForecaster {
            params: &outcome.params,
            cfg: &cfg,
        };
        let report = evaluate(&forecaster, &eval_windows, exec)?;
        out.push(AblationPoint {
            value,
            config: cfg,
            report: Some(report),
            skipped: None,
        });
    }
    Ok(out)
}

/// Comparison table over ablation grid points.
pub fn format_ablation_table(axis_name: &str, points: &[AblationPoint]) -> String {
    let mut out = String::new();
    let mut header_done = false;
    for p in points {
        match (&p.report, &p.skipped) {
            (Some(r), _) => {
                if !header_done {
                    out.push_str(&format!("{:<10}{:<12}", axis_name, "fingerprint"));
                    for ms in &r.horizons_ms {
                        out.push_str(&format!("{:>9}", format!("{ms} ms")));
                    }
                    out.push_str(&format!("{:>9}\n", "Average"));
                    header_done = true;
                }
                out.push_str(&format!("{:<10}{:<12}", p.value, r.fingerprint));
                for v in &r.horizon_mpjpe_mm {
                    out.push_str(&format!("{v:>9.1}"));
                }
                out.push_str(&format!("{:>9.1}\n", r.average_mpjpe_mm));
            }
            (None, Some(reason)) => {
                out.push_str(&format!("{:<10}skipped: {reason}\n", p.value));
            }
            (None, None) => {}
        }
    }
    out
}
