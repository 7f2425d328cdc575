//! Raw clip -> flow clip: crop to the pitcher box, grayscale, resize to the
//! model input size, then dense flow between consecutive frames.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::{Manifest, PitchRecord};
use super::synth::SynthCorpus;
use crate::error::{Error, Result};
use crate::flow::{flow_clip, FlowClip, FlowParams};
use crate::tensor_file::{self, TensorData};
use crate::video::{crop_frame, resize, to_grayscale, BoundingBox, Clip, Frame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessParams {
    pub input_height: usize,
    pub input_width: usize,
    pub flow: FlowParams,
}

impl PreprocessParams {
    pub fn validate(&self) -> Result<()> {
        if self.input_height < 2 || self.input_width < 2 {
            return Err(Error::InvalidParams(format!(
                "input size {}x{} too small",
                self.input_height, self.input_width
            )));
        }
        self.flow
            .validate()
            .map_err(|e| Error::InvalidParams(e.to_string()))
    }
}

/// Anything that can produce the raw clip for a manifest record.
pub trait ClipSource {
    fn clip(&self, record: &PitchRecord) -> Result<Clip>;
}

impl ClipSource for SynthCorpus {
    fn clip(&self, record: &PitchRecord) -> Result<Clip> {
        self.render(record)
    }
}

/// Raw clips stored as `[T, C, H, W]` tensor files named `<clip_ref>.pgt`.
#[derive(Debug, Clone)]
pub struct ClipDir {
    pub dir: PathBuf,
    pub fps: f64,
}

pub fn clip_to_tensor(clip: &Clip) -> TensorData {
    let (h, w, c) = clip.frame_shape();
    let mut data = Vec::with_capacity(clip.len() * c * h * w);
    for f in clip.frames() {
        for ch in 0..c {
            data.extend(f.data().iter().skip(ch).step_by(c));
        }
    }
    TensorData {
        shape: vec![clip.len(), c, h, w],
        data,
    }
}

pub fn clip_from_tensor(t: &TensorData, fps: f64) -> Result<Clip> {
    let [n, c, h, w] = t.shape[..] else {
        return Err(Error::InvalidInput(format!(
            "clip tensor must be rank 4, got {:?}",
            t.shape
        )));
    };
    let plane = h * w;
    let frames = (0..n)
        .map(|i| {
            let base = i * c * plane;
            let mut data = vec![0.0; c * plane];
            for ch in 0..c {
                for p in 0..plane {
                    data[p * c + ch] = t.data[base + ch * plane + p];
                }
            }
            Frame::new(h, w, c, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Clip::new(frames, fps)
}

impl ClipDir {
    pub fn path(&self, clip_ref: &str) -> PathBuf {
        self.dir.join(format!("{clip_ref}.pgt"))
    }
}

impl ClipSource for ClipDir {
    fn clip(&self, record: &PitchRecord) -> Result<Clip> {
        let t = tensor_file::read(&self.path(&record.clip_ref))?;
        clip_from_tensor(&t, self.fps)
    }
}

/// Preprocessed flow lookup by manifest record.
pub trait FlowSource {
    fn flow(&self, record: &PitchRecord) -> Result<FlowClip>;
}

#[derive(Debug, Clone, Default)]
pub struct FlowStore {
    clips: BTreeMap<String, FlowClip>,
}

impl FlowStore {
    pub fn insert(&mut self, clip_ref: impl Into<String>, flow: FlowClip) {
        self.clips.insert(clip_ref.into(), flow);
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

impl FlowSource for FlowStore {
    fn flow(&self, record: &PitchRecord) -> Result<FlowClip> {
        self.clips
            .get(&record.clip_ref)
            .cloned()
            .ok_or_else(|| Error::Lookup {
                kind: "flow clip",
                id: record.clip_ref.clone(),
            })
    }
}

/// Flow clips stored as `[2, T-1, H, W]` tensor files named `<clip_ref>.pgt`.
#[derive(Debug, Clone)]
pub struct FlowDir {
    pub dir: PathBuf,
}

impl FlowDir {
    pub fn path(&self, clip_ref: &str) -> PathBuf {
        self.dir.join(format!("{clip_ref}.pgt"))
    }
}

impl FlowSource for FlowDir {
    fn flow(&self, record: &PitchRecord) -> Result<FlowClip> {
        let t = tensor_file::read(&self.path(&record.clip_ref))?;
        FlowClip::from_tensor(&t, record.clip_ref.clone())
    }
}

/// Crop, grayscale and resize every frame; the result has one channel.
pub fn prepare_frames(clip: &Clip, bbox: &BoundingBox, params: &PreprocessParams) -> Result<Clip> {
    clip.map_frames(|f| {
        let g = to_grayscale(&crop_frame(f, bbox)?)?;
        resize(&g, params.input_height, params.input_width)
    })
}

pub fn preprocess_clip(
    clip: &Clip,
    bbox: &BoundingBox,
    params: &PreprocessParams,
    source: &str,
) -> Result<FlowClip> {
    flow_clip(&prepare_frames(clip, bbox, params)?, &params.flow, source)
}

fn preprocess_record(
    source: &dyn ClipSource,
    r: &PitchRecord,
    params: &PreprocessParams,
) -> Result<FlowClip> {
    preprocess_clip(&source.clip(r)?, &r.bbox, params, &r.clip_ref)
        .map_err(|e| Error::InvalidInput(format!("pitch {}: {e}", r.pitch_id)))
}

pub fn preprocess_corpus(
    manifest: &Manifest,
    source: &dyn ClipSource,
    params: &PreprocessParams,
) -> Result<FlowStore> {
    params.validate()?;
    let mut store = FlowStore::default();
    for r in manifest.records() {
        store.insert(r.clip_ref.clone(), preprocess_record(source, r, params)?);
    }
    Ok(store)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub written: usize,
    pub reused: usize,
}

const PARAMS_FILE: &str = "preprocess.json";

/// Writes one flow file per record. Files already present with matching
/// parameters and shape are kept, so repeated runs are no-ops.
pub fn preprocess_to_dir(
    manifest: &Manifest,
    source: &dyn ClipSource,
    params: &PreprocessParams,
    dir: &Path,
) -> Result<PreprocessSummary> {
    preprocess_to_dir_with_progress(manifest, source, params, dir, &mut |_, _| {})
}

/// As [`preprocess_to_dir`], calling `progress(done, total)` after each record.
pub fn preprocess_to_dir_with_progress(
    manifest: &Manifest,
    source: &dyn ClipSource,
    params: &PreprocessParams,
    dir: &Path,
    progress: &mut dyn FnMut(usize, usize),
) -> Result<PreprocessSummary> {
    params.validate()?;
    let total = manifest.len();
    let store = FlowDir {
        dir: dir.to_path_buf(),
    };
    let params_path = dir.join(PARAMS_FILE);
    let params_json = serde_json::to_string_pretty(params)?;
    let same_params = fs::read_to_string(&params_path).is_ok_and(|s| s == params_json);
    tensor_file::write_bytes_atomic(&params_path, params_json.as_bytes())?;
    let mut summary = PreprocessSummary {
        written: 0,
        reused: 0,
    };
    for (i, r) in manifest.records().iter().enumerate() {
        let path = store.path(&r.clip_ref);
        let reusable = same_params
            && path.exists()
            && tensor_file::read(&path).is_ok_and(|t| {
                t.shape.len() == 4
                    && t.shape[0] == 2
                    && t.shape[2..] == [params.input_height, params.input_width]
            });
        if reusable {
            summary.reused += 1;
        } else {
            let flow = preprocess_record(source, r, params)?;
            tensor_file::write(&path, &flow.to_tensor())?;
            summary.written += 1;
        }
        progress(i + 1, total);
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::record::Handedness;
    use crate::dataset::synth::{synth_generate, SynthParams};
    use crate::flow::flip_flow;

    fn corpus() -> SynthCorpus {
        synth_generate(&SynthParams {
            left_pitchers: 1,
            right_pitchers: 1,
            healthy_per_pitcher: 3,
            injured_per_event: 2,
            ..SynthParams::compact()
        })
        .unwrap()
    }

    fn params() -> PreprocessParams {
        PreprocessParams {
            input_height: 24,
            input_width: 32,
            flow: FlowParams {
                iters: 30,
                ..FlowParams::default()
            },
        }
    }

    #[test]
    fn flow_shapes_follow_input_size() {
        let c = corpus();
        let store = preprocess_corpus(c.manifest(), &c, &params()).unwrap();
        assert_eq!(store.len(), c.manifest().len());
        let t = store.flow(&c.manifest().records()[0]).unwrap().to_tensor();
        assert_eq!(t.shape, vec![2, 7, 24, 32]);
    }

    #[test]
    fn right_handed_flow_is_flipped_left_flow() {
        let c = corpus();
        let p = params();
        for r in c
            .manifest()
            .records()
            .iter()
            .filter(|r| r.handedness == Handedness::Right)
        {
            let right = preprocess_clip(&c.render(r).unwrap(), &r.bbox, &p, "x").unwrap();
            let (left, lbox) = c.render_as(r, Handedness::Left).unwrap();
            let left = preprocess_clip(&left, &lbox, &p, "x").unwrap();
            assert_eq!(right.to_tensor().data, flip_flow(&left).to_tensor().data);
        }
    }

    #[test]
    fn to_dir_is_idempotent_and_round_trips() {
        let c = corpus();
        let dir = tempfile::tempdir().unwrap();
        let first = preprocess_to_dir(c.manifest(), &c, &params(), dir.path()).unwrap();
        assert_eq!(first.written, c.manifest().len());
        let before: Vec<_> = c
            .manifest()
            .records()
            .iter()
            .map(|r| fs::read(dir.path().join(format!("{}.pgt", r.clip_ref))).unwrap())
            .collect();
        let second = preprocess_to_dir(c.manifest(), &c, &params(), dir.path()).unwrap();
        assert_eq!(
            second,
            PreprocessSummary {
                written: 0,
                reused: c.manifest().len()
            }
        );
        let after: Vec<_> = c
            .manifest()
            .records()
            .iter()
            .map(|r| fs::read(dir.path().join(format!("{}.pgt", r.clip_ref))).unwrap())
            .collect();
        assert_eq!(before, after);
        let mem = preprocess_corpus(c.manifest(), &c, &params()).unwrap();
        let disk = FlowDir {
            dir: dir.path().to_path_buf(),
        };
        let r = &c.manifest().records()[1];
        assert_eq!(
            mem.flow(r).unwrap().to_tensor(),
            disk.flow(r).unwrap().to_tensor()
        );
    }

    #[test]
    fn clip_tensor_round_trip() {
        let c = corpus();
        let clip = c.render(&c.manifest().records()[0]).unwrap();
        let t = clip_to_tensor(&clip);
        assert_eq!(t.shape[..2], [clip.len(), 3]);
        assert_eq!(clip_from_tensor(&t, clip.fps()).unwrap(), clip);
    }

    #[test]
    fn bad_bbox_is_reported_with_pitch() {
        let c = corpus();
        let mut r = c.manifest().records()[0].clone();
        r.bbox.x = 1000;
        let m = Manifest::new(vec![r]).unwrap();
        let err = preprocess_corpus(&m, &c, &params())
            .unwrap_err()
            .to_string();
        assert!(err.contains("L01-0000"), "{err}");
    }
}
