//! Sequence records, the on-disk formats, windowing, and downsampling.
//!
//! The text format is JSON lines: a header object followed by one record per
//! line. The header declares `format`, `version`, `unit` ("m" or "mm"),
//! `fps`, and `joints`; records carry `seq`, `frame`, `pose`, `head_dir`,
//! `head_pos`, and `objects`. Values load into canonical meters. A binary
//! mode exists for speed; both round-trip losslessly.

pub mod synth;

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_slice, Exec};
use crate::scene::{build_selected_sequence, ObjectBox, SceneObjectFrame, SelectedObjects, ViewportState};
use crate::tensor::Tensor;

pub const FORMAT_NAME: &str = "pose-forecast-seq";
pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_FPS: u32 = 30;
const BINARY_MAGIC: &[u8; 8] = b"PFSEQBIN";

/// One motion-capture frame: pose joints, head state, scene objects.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub frame: u64,
    /// n x 3 joint positions, meters.
    pub pose: Vec<[f64; 3]>,
    pub head_dir: [f64; 3],
    pub head_pos: [f64; 3],
    pub objects: Vec<ObjectBox>,
}

/// A contiguous recording.
#[derive(Debug, Clone, Default)]
pub struct Sequence {
    pub records: Vec<SequenceRecord>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HeaderLine {
    format: String,
    version: u32,
    unit: String,
    fps: u32,
    joints: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecordLine {
    seq: u64,
    #[serde(flatten)]
    record: SequenceRecord,
}

/// Write sequences as JSON lines in meters at 30 Hz.
pub fn write_sequences(path: &Path, seqs: &[Sequence]) -> Result<()> {
    let joints = seqs
        .iter()
        .flat_map(|s| s.records.first())
        .map(|r| r.pose.len())
        .next()
        .unwrap_or(21);
    let header = HeaderLine {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        unit: "m".into(),
        fps: DEFAULT_FPS,
        joints,
    };
    let io_err = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut out = Vec::new();
    serde_json::to_writer(&mut out, &header).map_err(|e| Error::Data(e.to_string()))?;
    out.push(b'\n');
    for (si, seq) in seqs.iter().enumerate() {
        for record in &seq.records {
            let line = RecordLine {
                seq: si as u64,
                record: record.clone(),
            };
            serde_json::to_writer(&mut out, &line).map_err(|e| Error::Data(e.to_string()))?;
            out.push(b'\n');
        }
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&out).map_err(io_err)?;
    Ok(())
}

/// Load sequences from either the text or the binary format, converting to
/// meters and validating the record invariants.
pub fn load_sequences(path: &Path) -> Result<Vec<Sequence>> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    if bytes.starts_with(BINARY_MAGIC) {
        return load_binary(&bytes);
    }
    load_text(&bytes)
}

fn load_text(bytes: &[u8]) -> Result<Vec<Sequence>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::Parse { record: 0, msg: "file is not utf-8 text".into() })?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header_line) = lines.next().ok_or_else(|| Error::Parse {
        record: 0,
        msg: "empty file; expected a header line".into(),
    })?;
    let header: HeaderLine = serde_json::from_str(header_line).map_err(|e| Error::Parse {
        record: 0,
        msg: format!("header: {e}"),
    })?;
    if header.format != FORMAT_NAME {
        return Err(Error::Parse {
            record: 0,
            msg: format!("unknown format `{}`", header.format),
        });
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::Parse {
            record: 0,
            msg: format!("unsupported version {}", header.version),
        });
    }
    let unit_scale = match header.unit.as_str() {
        "m" => 1.0,
        "mm" => 1e-3,
        other => {
            return Err(Error::Parse {
                record: 0,
                msg: format!("unknown unit `{other}` (expected \"m\" or \"mm\")"),
            })
        }
    };

    let mut seqs: Vec<(u64, Sequence)> = Vec::new();
    for (line_no, line) in lines {
        let parsed: RecordLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            record: line_no + 1,
            msg: e.to_string(),
        })?;
        let mut record = parsed.record;
        if record.pose.len() != header.joints {
            return Err(Error::Parse {
                record: line_no + 1,
                msg: format!(
                    "record has {} joints, header declares {}",
                    record.pose.len(),
                    header.joints
                ),
            });
        }
        if unit_scale != 1.0 {
            for p in record.pose.iter_mut() {
                for v in p.iter_mut() {
                    *v *= unit_scale;
                }
            }
            for v in record.head_pos.iter_mut() {
                *v *= unit_scale;
            }
            for obj in record.objects.iter_mut() {
                for vert in obj.bbox.iter_mut() {
                    for v in vert.iter_mut() {
                        *v *= unit_scale;
                    }
                }
            }
        }
        match seqs.last_mut() {
            Some((id, seq)) if *id == parsed.seq => {
                let last = seq.records.last().map(|r| r.frame).unwrap_or(0);
                if record.frame <= last && !seq.records.is_empty() {
                    return Err(Error::Parse {
                        record: line_no + 1,
                        msg: format!(
                            "frame index {} not monotone after {last} in sequence {id}",
                            record.frame
                        ),
                    });
                }
                seq.records.push(record);
            }
            _ => seqs.push((parsed.seq, Sequence { records: vec![record] })),
        }
    }
    for (_, seq) in &seqs {
        for r in &seq.records {
            SceneObjectFrame { objects: r.objects.clone() }.validate()?;
        }
    }
    Ok(seqs.into_iter().map(|(_, s)| s).collect())
}

/// Binary mode: same content, little-endian, no text parsing cost.
pub fn write_sequences_binary(path: &Path, seqs: &[Sequence]) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let joints = seqs
        .iter()
        .flat_map(|s| s.records.first())
        .map(|r| r.pose.len())
        .next()
        .unwrap_or(21) as u32;
    buf.extend_from_slice(&joints.to_le_bytes());
    buf.extend_from_slice(&DEFAULT_FPS.to_le_bytes());
    buf.extend_from_slice(&(seqs.len() as u32).to_le_bytes());
    let push3 = |buf: &mut Vec<u8>, v: &[f64; 3]| {
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    };
    for seq in seqs {
        buf.extend_from_slice(&(seq.records.len() as u32).to_le_bytes());
        for r in &seq.records {
            buf.extend_from_slice(&r.frame.to_le_bytes());
            for p in &r.pose {
                push3(&mut buf, p);
            }
            push3(&mut buf, &r.head_dir);
            push3(&mut buf, &r.head_pos);
            buf.extend_from_slice(&(r.objects.len() as u32).to_le_bytes());
            for o in &r.objects {
                buf.extend_from_slice(&o.id.to_le_bytes());
                buf.push(match o.category {
                    crate::scene::ObjectCategory::Dynamic => 0,
                    crate::scene::ObjectCategory::Static => 1,
                });
                for vert in &o.bbox {
                    push3(&mut buf, vert);
                }
            }
        }
    }
    fs::write(path, &buf).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_binary(bytes: &[u8]) -> Result<Vec<Sequence>> {
    let mut pos = BINARY_MAGIC.len();
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::Parse {
                record: 0,
                msg: format!("binary file truncated at offset {pos}", pos = *pos),
            });
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let u32_at = |pos: &mut usize| -> Result<u32> {
        Ok(u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()))
    };
    let f64_at = |pos: &mut usize| -> Result<f64> {
        Ok(f64::from_le_bytes(take(pos, 8)?.try_into().unwrap()))
    };
    let vec3_at = |pos: &mut usize| -> Result<[f64; 3]> {
        Ok([f64_at(pos)?, f64_at(pos)?, f64_at(pos)?])
    };

    let version = u32_at(&mut pos)?;
    if version != FORMAT_VERSION {
        return Err(Error::Parse {
            record: 0,
            msg: format!("unsupported binary version {version}"),
        });
    }
    let joints = u32_at(&mut pos)? as usize;
    let _fps = u32_at(&mut pos)?;
    let n_seqs = u32_at(&mut pos)? as usize;
    let mut seqs = Vec::with_capacity(n_seqs);
    for _ in 0..n_seqs {
        let n_records = u32_at(&mut pos)? as usize;
        let mut records = Vec::with_capacity(n_records);
        for _ in 0..n_records {
            let frame = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
            let mut pose = Vec::with_capacity(joints);
            for _ in 0..joints {
                pose.push(vec3_at(&mut pos)?);
            }
            let head_dir = vec3_at(&mut pos)?;
            let head_pos = vec3_at(&mut pos)?;
            let n_objects = u32_at(&mut pos)? as usize;
            let mut objects = Vec::with_capacity(n_objects);
            for _ in 0..n_objects {
                let id = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
                let category = match take(&mut pos, 1)?[0] {
                    0 => crate::scene::ObjectCategory::Dynamic,
                    1 => crate::scene::ObjectCategory::Static,
                    other => {
                        return Err(Error::Parse {
                            record: 0,
                            msg: format!("unknown category tag {other}"),
                        })
                    }
                };
                let mut bbox = [[0.0; 3]; 8];
                for vert in bbox.iter_mut() {
                    *vert = vec3_at(&mut pos)?;
                }
                objects.push(ObjectBox { id, category, bbox });
            }
            records.push(SequenceRecord {
                frame,
                pose,
                head_dir,
                head_pos,
                objects,
            });
        }
        seqs.push(Sequence { records });
    }
    Ok(seqs)
}

/// Keep every (src/dst)-th frame starting at frame 0. Rates must divide.
pub fn downsample(seq: &Sequence, src_hz: u32, dst_hz: u32) -> Result<Sequence> {
    if dst_hz == 0 || src_hz % dst_hz != 0 {
        return Err(Error::Data(format!(
            "downsample: {src_hz} Hz is not an integer multiple of {dst_hz} Hz"
        )));
    }
    let step = (src_hz / dst_hz) as usize;
    Ok(Sequence {
        records: seq.records.iter().step_by(step).cloned().collect(),
    })
}

/// Window extraction parameters. Defaults follow the 10-in/30-out protocol.
#[derive(Debug, Clone)]
pub struct WindowSpec {
    pub t_in: usize,
    pub t_out: usize,
    pub stride: usize,
    pub objects_per_category: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            t_in: 10,
            t_out: 30,
            stride: 1,
            objects_per_category: 2,
        }
    }
}

/// One training/evaluation sample: observation tensors plus the target block.
#[derive(Debug, Clone)]
pub struct Window {
    pub pose_in: Tensor,
    pub head_in: Tensor,
    pub objects: SelectedObjects,
    pub target: Tensor,
}

impl Window {
    /// Last observed pose, [3, n].
    pub fn last_pose(&self) -> Tensor {
        let shape = self.pose_in.shape();
        let (n, t) = (shape[1], shape[2]);
        Tensor::from_fn(&[3, n], |i| {
            let (c, j) = (i / n, i % n);
            self.pose_in.data()[(c * n + j) * t + (t - 1)]
        })
    }
}

/// Overlapping (input, target) windows. Sequences shorter than
/// t_in + t_out yield no windows; frames never cross sequence bounds.
pub fn make_windows(seq: &Sequence, spec: &WindowSpec) -> Result<Vec<Window>> {
    let need = spec.t_in + spec.t_out;
    if spec.t_in == 0 || spec.t_out == 0 || spec.stride == 0 {
        return Err(Error::invalid("make_windows: t_in, t_out, stride must be >= 1"));
    }
    if seq.len() < need {
        return Ok(Vec::new());
    }
    let n = seq.records[0].pose.len();
    let mut out = Vec::new();
    let mut start = 0;
    while start + need <= seq.len() {
        out.push(build_window(seq, start, n, spec)?);
        start += spec.stride;
    }
    Ok(out)
}

fn build_window(seq: &Sequence, start: usize, n: usize, spec: &WindowSpec) -> Result<Window> {
    let t_in = spec.t_in;
    let input = &seq.records[start..start + t_in];
    let target = &seq.records[start + t_in..start + t_in + spec.t_out];

    let pose_in = Tensor::from_fn(&[3, n, t_in], |i| {
        let c = i / (n * t_in);
        let j = (i / t_in) % n;
        let f = i % t_in;
        input[f].pose[j][c]
    });
    // head directions are renormalized on ingestion; zero-norm is an error
    let viewports: Vec<ViewportState> = input
        .iter()
        .map(|r| ViewportState::new(r.head_pos, r.head_dir))
        .collect::<Result<_>>()?;
    let head_in = Tensor::from_fn(&[3, t_in], |i| {
        let (c, f) = (i / t_in, i % t_in);
        viewports[f].head_dir[c]
    });
    let frames: Vec<SceneObjectFrame> = input
        .iter()
        .map(|r| SceneObjectFrame {
            objects: r.objects.clone(),
        })
        .collect();
    let objects = build_selected_sequence(&frames, &viewports, spec.objects_per_category)?;
    let target = Tensor::from_fn(&[3, n, spec.t_out], |i| {
        let c = i / (n * spec.t_out);
        let j = (i / spec.t_out) % n;
        let f = i % spec.t_out;
        target[f].pose[j][c]
    });
    Ok(Window {
        pose_in,
        head_in,
        objects,
        target,
    })
}

/// Windows for a whole corpus, sequence-parallel, order-preserving.
pub fn corpus_windows(seqs: &[Sequence], spec: &WindowSpec, exec: Exec) -> Result<Vec<Window>> {
    let per_seq = map_slice(exec, seqs, |seq| make_windows(seq, spec));
    let mut out = Vec::new();
    for ws in per_seq {
        out.extend(ws?);
    }
    Ok(out)
}
