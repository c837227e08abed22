//! Scene-object handling: categorization, angular ranking against the
//! viewport, and per-frame top-k selection into fixed-shape box tensors.
//!
//! Relevance is the angle between the head's forward ray and the direction
//! from the head to the object centroid. Per frame and per category the k
//! closest objects win; ties break on ascending id and shortfalls are filled
//! with all-zero sentinel boxes so tensor shapes stay fixed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Distance below which an object centroid is considered to coincide with
/// the head position.
pub const DEGENERATE_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectCategory {
    Dynamic,
    Static,
}

/// An oriented box given by its 8 vertices in world coordinates (meters).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectBox {
    pub id: u64,
    pub category: ObjectCategory,
    pub bbox: [[f64; 3]; 8],
}

impl ObjectBox {
    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for v in &self.bbox {
            for (a, b) in c.iter_mut().zip(v) {
                *a += b / 8.0;
            }
        }
        c
    }
}

/// All scene objects visible in one frame.
#[derive(Debug, Clone, Default)]
pub struct SceneObjectFrame {
    pub objects: Vec<ObjectBox>,
}

impl SceneObjectFrame {
    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<u64> = self.objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("duplicate object id within a frame".into()));
        }
        Ok(())
    }
}

/// Head position and unit forward direction defining the egocentric viewport.
#[derive(Debug, Clone, Copy)]
pub struct ViewportState {
    pub head_pos: [f64; 3],
    pub head_dir: [f64; 3],
}

impl ViewportState {
    /// Normalizes the direction on ingestion; zero-norm directions are
    /// rejected here.
    pub fn new(head_pos: [f64; 3], head_dir: [f64; 3]) -> Result<Self> {
        let n = norm3(&head_dir);
        if n < DEGENERATE_DISTANCE || !n.is_finite() {
            return Err(Error::Data(format!(
                "head direction {head_dir:?} has no usable norm"
            )));
        }
        Ok(ViewportState {
            head_pos,
            head_dir: [head_dir[0] / n, head_dir[1] / n, head_dir[2] / n],
        })
    }
}

/// Angle in radians between the gaze ray and the object centroid, in [0, pi].
/// A centroid coinciding with the head position counts as angle 0.
pub fn angular_distance(viewport: &ViewportState, bbox: &[[f64; 3]; 8]) -> f64 {
    angular_distance_flagged(viewport, bbox).0
}

/// As [`angular_distance`], plus a flag marking the degenerate
/// centroid-at-head case.
pub fn angular_distance_flagged(viewport: &ViewportState, bbox: &[[f64; 3]; 8]) -> (f64, bool) {
    let mut c = [0.0; 3];
    for v in bbox {
        for (a, b) in c.iter_mut().zip(v) {
            *a += b / 8.0;
        }
    }
    let to_obj = sub3(&c, &viewport.head_pos);
    let dist = norm3(&to_obj);
    if dist < DEGENERATE_DISTANCE {
        return (0.0, true);
    }
    let cos = dot3(&viewport.head_dir, &to_obj) / dist;
    (cos.clamp(-1.0, 1.0).acos(), false)
}

/// One selected slot: `id` is `None` for a sentinel fill.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChosenObject {
    pub id: Option<u64>,
    pub angle: f64,
    pub degenerate: bool,
}

/// Per-frame selection outcome for both categories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameSelection {
    pub dynamic: Vec<ChosenObject>,
    pub statics: Vec<ChosenObject>,
}

/// The k angularly closest objects per category; ties break on ascending id,
/// shortfalls are sentinel-filled.
pub fn select_topk(frame: &SceneObjectFrame, viewport: &ViewportState, k: usize) -> FrameSelection {
    FrameSelection {
        dynamic: rank_category(frame, viewport, ObjectCategory::Dynamic, k)
            .into_iter()
            .map(|slot| slot.chosen)
            .collect(),
        statics: rank_category(frame, viewport, ObjectCategory::Static, k)
            .into_iter()
            .map(|slot| slot.chosen)
            .collect(),
    }
}

struct RankedSlot<'a> {
    chosen: ChosenObject,
    bbox: Option<&'a [[f64; 3]; 8]>,
}

fn rank_category<'a>(
    frame: &'a SceneObjectFrame,
    viewport: &ViewportState,
    category: ObjectCategory,
    k: usize,
) -> Vec<RankedSlot<'a>> {
    let mut ranked: Vec<(f64, bool, &ObjectBox)> = frame
        .objects
        .iter()
        .filter(|o| o.category == category)
        .map(|o| {
            let (angle, degenerate) = angular_distance_flagged(viewport, &o.bbox);
            (angle, degenerate, o)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.id.cmp(&b.2.id)));
    (0..k)
        .map(|slot| match ranked.get(slot) {
            Some((angle, degenerate, obj)) => RankedSlot {
                chosen: ChosenObject {
                    id: Some(obj.id),
                    angle: *angle,
                    degenerate: *degenerate,
                },
                bbox: Some(&obj.bbox),
            },
            None => RankedSlot {
                chosen: ChosenObject {
                    id: None,
                    angle: f64::INFINITY,
                    degenerate: false,
                },
                bbox: None,
            },
        })
        .collect()
}

/// Fixed-shape [3, 8, k, t] box tensors for both categories plus the
/// per-frame selection log.
#[derive(Debug, Clone)]
pub struct SelectedObjects {
    pub dynamic: Tensor,
    pub statics: Tensor,
    pub log: Vec<FrameSelection>,
}

/// Select per frame (the chosen pair may change across frames) and assemble
/// the two [3, 8, k, t] tensors in rank order, closest first.
pub fn build_selected_sequence(
    frames: &[SceneObjectFrame],
    viewports: &[ViewportState],
    k: usize,
) -> Result<SelectedObjects> {
    if frames.len() != viewports.len() {
        return Err(Error::Data(format!(
            "selection: {} object frames vs {} viewports",
            frames.len(),
            viewports.len()
        )));
    }
    if frames.is_empty() {
        return Err(Error::Data("selection: empty frame list".into()));
    }
    let t = frames.len();
    let mut dynamic = Tensor::zeros(&[3, 8, k, t]);
    let mut statics = Tensor::zeros(&[3, 8, k, t]);
    let mut log = Vec::with_capacity(t);
    for (fi, (frame, viewport)) in frames.iter().zip(viewports).enumerate() {
        let dyn_slots = rank_category(frame, viewport, ObjectCategory::Dynamic, k);
        let stat_slots = rank_category(frame, viewport, ObjectCategory::Static, k);
        for (slots, tensor) in [(&dyn_slots, &mut dynamic), (&stat_slots, &mut statics)] {
            let data = tensor.data_mut();
            for (slot, ranked) in slots.iter().enumerate() {
                if let Some(bbox) = ranked.bbox {
                    for (vert, v) in bbox.iter().enumerate() {
                        for (coord, value) in v.iter().enumerate() {
                            data[((coord * 8 + vert) * k + slot) * t + fi] = *value;
                        }
                    }
                }
            }
        }
        log.push(FrameSelection {
            dynamic: dyn_slots.into_iter().map(|s| s.chosen).collect(),
            statics: stat_slots.into_iter().map(|s| s.chosen).collect(),
        });
    }
    Ok(SelectedObjects {
        dynamic,
        statics,
        log,
    })
}

// small vector helpers shared with the synthetic generator
pub(crate) fn sub3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn add3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn scale3(a: &[f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

pub(crate) fn normalize3(a: &[f64; 3]) -> [f64; 3] {
    let n = norm3(a);
    if n == 0.0 {
        [0.0, 0.0, 0.0]
    } else {
        scale3(a, 1.0 / n)
    }
}

/// Axis-aligned box vertices around a center with half-extents.
pub fn box_vertices(center: [f64; 3], half_extents: [f64; 3]) -> [[f64; 3]; 8] {
    let mut out = [[0.0; 3]; 8];
    for (i, v) in out.iter_mut().enumerate() {
        for axis in 0..3 {
            let sign = if (i >> axis) & 1 == 0 { -1.0 } else { 1.0 };
            v[axis] = center[axis] + sign * half_extents[axis];
        }
    }
    out
}
