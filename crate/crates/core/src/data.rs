//! Synthetic moving-blob video generation with exact ground-truth boxes,
//! dataset persistence (FEPD), the analytically constructed template
//! classifier for the four motion classes, and heatmap frame export.
//!
//! Each clip is Gaussian background noise, an optional label-correlated
//! high-frequency checkerboard, and a bright square blob translating one
//! pixel per frame in the labeled direction from a seeded random start.
//! A single frame never determines the label; the motion does.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::io::{read_tensor_bytes, save_pgm, write_tensor_bytes, CountingReader, FORMAT_VERSION};
use crate::model::TemplateModel;
use crate::scalar::Scalar;
use crate::tensor::{ClipShape, Tensor};

pub const DATASET_MAGIC: &[u8; 4] = b"FEPD";

pub const NUM_CLASSES: usize = 4;

/// Softmax temperature used when building the analytic motion classifier
/// for the desk preset; keeps the model confident but not saturated, so
/// masked-confidence gradients stay alive.
pub const DESK_TEMPLATE_TEMPERATURE: f64 = 0.2;

/// Blob displacement per frame, indexed by class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionDirection {
    Right = 0,
    Left = 1,
    Down = 2,
    Up = 3,
}

impl MotionDirection {
    pub fn from_label(label: usize) -> Result<Self> {
        match label {
            0 => Ok(MotionDirection::Right),
            1 => Ok(MotionDirection::Left),
            2 => Ok(MotionDirection::Down),
            3 => Ok(MotionDirection::Up),
            other => Err(Error::InvalidArgument(format!(
                "label {} out of range for {} motion classes",
                other, NUM_CLASSES
            ))),
        }
    }

    /// (dh, dw) per frame.
    pub fn delta(self) -> (i64, i64) {
        match self {
            MotionDirection::Right => (0, 1),
            MotionDirection::Left => (0, -1),
            MotionDirection::Down => (1, 0),
            MotionDirection::Up => (-1, 0),
        }
    }
}

/// Generator parameters. `hf_noise_amplitude` adds a checkerboard whose
/// phase depends on the label, giving models a learnable high-frequency
/// shortcut.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub clip_shape: ClipShape,
    pub blob_size: usize,
    pub blob_intensity: f64,
    pub noise_sigma: f64,
    pub hf_noise_amplitude: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Desk preset: 8 frames of 16x16, single channel, noiseless.
    pub fn desk(seed: u64) -> Self {
        SyntheticSpec {
            clip_shape: ClipShape::new(8, 1, 16, 16).unwrap(),
            blob_size: 4,
            blob_intensity: 1.0,
            noise_sigma: 0.0,
            hf_noise_amplitude: 0.0,
            seed,
        }
    }

    pub fn num_classes(&self) -> usize {
        NUM_CLASSES
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.clip_shape;
        if self.blob_size == 0 || self.blob_size > s.h || self.blob_size > s.w {
            return Err(Error::InvalidArgument(format!(
                "blob size {} does not fit a {}x{} frame",
                self.blob_size, s.h, s.w
            )));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !self.blob_intensity.is_finite() || !self.hf_noise_amplitude.is_finite() {
            return Err(Error::InvalidArgument("non-finite generator amplitude".into()));
        }
        // Every direction must admit at least one in-frame trajectory.
        let travel = s.t - 1;
        if s.w < self.blob_size + travel || s.h < self.blob_size + travel {
            return Err(Error::InvalidArgument(format!(
                "a {}-pixel blob travelling {} frames cannot stay inside {}x{}",
                self.blob_size, s.t, s.h, s.w
            )));
        }
        Ok(())
    }
}

/// One generated example: the clip, its motion label, and the exact
/// per-frame blob support as a binary T x H x W volume.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip<S: Scalar> {
    pub clip: Tensor<S>,
    pub label: usize,
    pub boxes: Tensor<S>,
}

/// Valid start range along the motion axis: the blob must stay inside
/// [0, full - size] at every frame.
fn start_range(full: usize, size: usize, frames: usize, delta: i64) -> (i64, i64) {
    let max_start = (full - size) as i64;
    let travel = (frames - 1) as i64 * delta;
    let lo = 0.max(-travel);
    let hi = max_start.min(max_start - travel);
    (lo, hi)
}

/// Start positions on the static axis: trajectories hug one of the two
/// border lanes, so every reachable cell excludes at least one motion
/// direction (cells in a top-lane row can never be mid-sequence "down"
/// and "up" cells at the same frame).
fn lane_starts(full: usize, size: usize) -> [i64; 2] {
    [0, (full - size) as i64]
}

fn checker_sign(label: usize, t: usize, h: usize, w: usize) -> f64 {
    // Spatial phase from the low label bit, temporal flip from the high
    // bit: four distinct high-frequency patterns.
    let phase = (h + w + (label & 1) + (label >> 1) * t) % 2;
    if phase == 0 {
        1.0
    } else {
        -1.0
    }
}

fn generate_clip<S: Scalar>(spec: &SyntheticSpec, index: u64) -> Result<LabeledClip<S>> {
    let shape = spec.clip_shape;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(index));
    let label = rng.gen_range(0..NUM_CLASSES);
    let (dh, dw) = MotionDirection::from_label(label)?.delta();

    // Motion axis: uniform over the in-frame range. Static axis: one of
    // the two border lanes. Starts that would leave the frame are
    // resampled; the range is only empty when the geometry itself is
    // impossible, which validate() already rejects.
    let (h_lo, h_hi) = start_range(shape.h, spec.blob_size, shape.t, dh);
    let (w_lo, w_hi) = start_range(shape.w, spec.blob_size, shape.t, dw);
    let h_lanes = lane_starts(shape.h, spec.blob_size);
    let w_lanes = lane_starts(shape.w, spec.blob_size);
    let mut start = None;
    for _ in 0..64 {
        let (sh, sw) = if dh == 0 {
            (h_lanes[rng.gen_range(0..2)], rng.gen_range(w_lo..=w_hi))
        } else {
            (rng.gen_range(h_lo..=h_hi), w_lanes[rng.gen_range(0..2)])
        };
        let fits = |s: i64, delta: i64, full: usize| {
            let last = s + (shape.t as i64 - 1) * delta;
            s >= 0 && last >= 0 && (s + spec.blob_size as i64) <= full as i64
                && (last + spec.blob_size as i64) <= full as i64
        };
        if fits(sh, dh, shape.h) && fits(sw, dw, shape.w) {
            start = Some((sh, sw));
            break;
        }
    }
    let (sh, sw) = start.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "could not place a blob trajectory for clip {} after bounded retries",
            index
        ))
    })?;

    let mut clip = vec![0.0f64; shape.volume()];
    let mut boxes = vec![S::zero(); shape.t * shape.h * shape.w];
    let normal = StandardNormal;
    for t in 0..shape.t {
        let bh = (sh + t as i64 * dh) as usize;
        let bw = (sw + t as i64 * dw) as usize;
        for c in 0..shape.c {
            for h in 0..shape.h {
                for w in 0..shape.w {
                    let mut v = 0.0;
                    if spec.noise_sigma > 0.0 {
                        let g: f64 = normal.sample(&mut rng);
                        v += spec.noise_sigma * g;
                    }
                    if spec.hf_noise_amplitude != 0.0 {
                        v += spec.hf_noise_amplitude * checker_sign(label, t, h, w);
                    }
                    let inside = h >= bh && h < bh + spec.blob_size && w >= bw && w < bw + spec.blob_size;
                    if inside {
                        v += spec.blob_intensity;
                        if c == 0 {
                            boxes[(t * shape.h + h) * shape.w + w] = S::one();
                        }
                    }
                    clip[((t * shape.c + c) * shape.h + h) * shape.w + w] = v;
                }
            }
        }
    }
    Ok(LabeledClip {
        clip: Tensor::new(shape.dims().to_vec(), clip.into_iter().map(S::from_f64).collect())?,
        label,
        boxes: Tensor::new(vec![shape.t, shape.h, shape.w], boxes)?,
    })
}

/// Generates `n` clips deterministically; clip `i` depends only on
/// `spec.seed + i`, so any subset reproduces bit-identically.
pub fn generate_dataset<S: Scalar>(spec: &SyntheticSpec, n: usize) -> Result<Vec<LabeledClip<S>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be >= 1".into()));
    }
    spec.validate()?;
    (0..n as u64).map(|i| generate_clip(spec, i)).collect()
}

/// Analytic template classifier for the four motion classes.
///
/// The template for class `d` is the indicator of every (t, h, w) cell
/// that some valid direction-`d` trajectory covers (motion axis swept,
/// static axis restricted to the generator's border lanes), replicated
/// over channels and normalized by the blob's voxel count. A clip of
/// class `d` keeps its blob inside that reachable set at every frame, so
/// the correct class always attains the maximal score, and because the
/// lanes keep at least one competitor band off every blob cell, the
/// masked-confidence gradient stays strictly positive across the blob.
pub fn motion_templates<S: Scalar>(
    shape: &ClipShape,
    blob_size: usize,
    temperature: f64,
) -> Result<TemplateModel<S>> {
    if blob_size == 0
        || shape.h < blob_size + (shape.t - 1)
        || shape.w < blob_size + (shape.t - 1)
    {
        return Err(Error::InvalidArgument(format!(
            "no valid trajectories for blob size {} in a {}x{}x{} volume",
            blob_size, shape.t, shape.h, shape.w
        )));
    }
    let b = blob_size as i64;
    let norm = 1.0 / (blob_size * blob_size * shape.t * shape.c) as f64;
    let mut templates = Vec::with_capacity(NUM_CLASSES);
    for label in 0..NUM_CLASSES {
        let (dh, dw) = MotionDirection::from_label(label)?.delta();
        // Some moving start s in [lo, hi] covers x at frame t.
        let sweep_reach = move |t: usize, x: usize, delta: i64, lo: i64, hi: i64| {
            let pos = x as i64 - t as i64 * delta;
            (pos - b + 1).max(lo) <= pos.min(hi)
        };
        // Static axis: covered by either border lane.
        let lane_reach = move |x: usize, lanes: [i64; 2]| {
            lanes
                .iter()
                .any(|&s| s <= x as i64 && (x as i64) < s + b)
        };
        let (h_lo, h_hi) = start_range(shape.h, blob_size, shape.t, dh);
        let (w_lo, w_hi) = start_range(shape.w, blob_size, shape.t, dw);
        let h_lanes = lane_starts(shape.h, blob_size);
        let w_lanes = lane_starts(shape.w, blob_size);
        let template = Tensor::from_fn(&shape.dims(), |idx| {
            let (t, h, w) = (idx[0], idx[2], idx[3]);
            let covered = if dh == 0 {
                lane_reach(h, h_lanes) && sweep_reach(t, w, dw, w_lo, w_hi)
            } else {
                sweep_reach(t, h, dh, h_lo, h_hi) && lane_reach(w, w_lanes)
            };
            if covered {
                S::from_f64(norm)
            } else {
                S::zero()
            }
        })?;
        templates.push(template);
    }
    TemplateModel::new(templates, vec![S::zero(); NUM_CLASSES], S::from_f64(temperature))
}

/// Writes a dataset as FEPD: magic, version, clip count, then per clip the
/// label, the boxes tensor, and the clip tensor.
pub fn save_dataset(path: impl AsRef<Path>, clips: &[LabeledClip<f64>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&[FORMAT_VERSION])?;
    w.write_all(&(clips.len() as u32).to_le_bytes())?;
    for clip in clips {
        w.write_all(&(clip.label as u32).to_le_bytes())?;
        write_tensor_bytes(&mut w, &clip.boxes)?;
        write_tensor_bytes(&mut w, &clip.clip)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a FEPD dataset; truncated or trailing bytes are an error, an
/// empty dataset is a valid empty list.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<LabeledClip<f64>>> {
    let mut r = CountingReader::new(BufReader::new(File::open(path)?));
    r.expect_magic(DATASET_MAGIC)?;
    r.expect_version()?;
    let count = r.read_u32("clip count")? as usize;
    let mut clips = Vec::with_capacity(count);
    for i in 0..count {
        let label = r.read_u32(&format!("label of clip {}", i))? as usize;
        let boxes = read_tensor_bytes(&mut r)?;
        let clip = read_tensor_bytes(&mut r)?;
        clips.push(LabeledClip { clip, label, boxes });
    }
    r.expect_eof()?;
    Ok(clips)
}

fn to_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Writes three PGM files per frame: the (globally normalized, channel
/// averaged) clip, the mask, and a half/half overlay. Returns the paths.
pub fn export_heatmap_frames(
    clip: &Tensor<f64>,
    mask: &Tensor<f64>,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    if clip.rank() != 4 || mask.rank() != 4 {
        return Err(Error::InvalidArgument(
            "heatmap export needs rank-4 clip and mask".into(),
        ));
    }
    let (t, c, h, w) = (
        clip.shape()[0],
        clip.shape()[1],
        clip.shape()[2],
        clip.shape()[3],
    );
    if mask.shape() != [t, 1, h, w] {
        return Err(Error::shape_mismatch(
            "heatmap mask",
            &[t, 1, h, w],
            mask.shape(),
        ));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in clip.data() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let norm = |v: f64| (v - lo) / span;

    let mut paths = Vec::with_capacity(3 * t);
    let mut frame = vec![0u8; h * w];
    for ti in 0..t {
        // Channel-averaged clip frame.
        let mut gray = vec![0.0f64; h * w];
        for ci in 0..c {
            for p in 0..h * w {
                gray[p] += clip.data()[((ti * c + ci) * h * w) + p];
            }
        }
        for g in gray.iter_mut() {
            *g = norm(*g / c as f64);
        }
        for (b, &g) in frame.iter_mut().zip(&gray) {
            *b = to_byte(g);
        }
        let p = dir.join(format!("clip_{:04}.pgm", ti));
        save_pgm(&p, w, h, &frame)?;
        paths.push(p);

        let mbase = ti * h * w;
        for (p, byte) in frame.iter_mut().enumerate() {
            *byte = to_byte(mask.data()[mbase + p]);
        }
        let p = dir.join(format!("mask_{:04}.pgm", ti));
        save_pgm(&p, w, h, &frame)?;
        paths.push(p);

        for (p, byte) in frame.iter_mut().enumerate() {
            *byte = to_byte(0.5 * gray[p] + 0.5 * mask.data()[mbase + p]);
        }
        let p = dir.join(format!("overlay_{:04}.pgm", ti));
        save_pgm(&p, w, h, &frame)?;
        paths.push(p);
    }
    Ok(paths)
}
