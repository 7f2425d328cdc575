//! Frames, clips and the spatial transforms applied ahead of flow estimation.
//!
//! Pixel data is row-major, channel-interleaved `f32` in `[0, 1]`. Every
//! transform here is pure and reproduces bit-identical output for identical
//! input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "frame dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "frame must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidInput(format!(
                "frame data length {} != {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(Frame {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Frame::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    /// Builds a single-channel frame by evaluating `f(row, col)`; results are clamped into `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c).clamp(0.0, 1.0));
            }
        }
        Frame::new(height, width, 1, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    frames: Vec<Frame>,
    fps: f64,
}

impl Clip {
    pub fn new(frames: Vec<Frame>, fps: f64) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "clip needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "fps must be positive, got {fps}"
            )));
        }
        let shape = frames[0].shape();
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.shape() != shape) {
            return Err(Error::InvalidInput(format!(
                "frame {i} has shape {:?}, expected {shape:?}",
                f.shape()
            )));
        }
        Ok(Clip { frames, fps })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(height, width, channels)` shared by every frame.
    pub fn frame_shape(&self) -> (usize, usize, usize) {
        self.frames[0].shape()
    }

    pub fn map_frames(&self, f: impl FnMut(&Frame) -> Result<Frame>) -> Result<Clip> {
        let frames = self.frames.iter().map(f).collect::<Result<Vec<_>>>()?;
        Clip::new(frames, self.fps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoundingBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::InvalidInput(format!(
                "bounding box extent must be positive, got {w}x{h}"
            )));
        }
        Ok(BoundingBox { x, y, w, h })
    }

    pub fn full(frame: &Frame) -> Self {
        BoundingBox {
            x: 0,
            y: 0,
            w: frame.width(),
            h: frame.height(),
        }
    }

    /// Reflects the box about the vertical axis of a frame `frame_width` wide.
    pub fn mirror(&self, frame_width: usize) -> Self {
        BoundingBox {
            x: frame_width - self.x - self.w,
            ..*self
        }
    }

    pub fn check_fits(&self, height: usize, width: usize) -> Result<()> {
        if self.w == 0 || self.h == 0 {
            return Err(Error::InvalidInput("bounding box has zero extent".into()));
        }
        if self.x + self.w > width {
            return Err(Error::Bounds {
                axis: "width",
                end: self.x + self.w,
                limit: width,
            });
        }
        if self.y + self.h > height {
            return Err(Error::Bounds {
                axis: "height",
                end: self.y + self.h,
                limit: height,
            });
        }
        Ok(())
    }
}

pub fn to_grayscale(frame: &Frame) -> Result<Frame> {
    if frame.channels != 3 {
        return Err(Error::InvalidInput(format!(
            "grayscale conversion needs 3 channels, got {}",
            frame.channels
        )));
    }
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = frame
        .data
        .chunks_exact(3)
        .map(|px| {
            let y = wr * px[0] as f64 + wg * px[1] as f64 + wb * px[2] as f64;
            (y as f32).clamp(0.0, 1.0)
        })
        .collect();
    Ok(Frame {
        height: frame.height,
        width: frame.width,
        channels: 1,
        data,
    })
}

/// Converts to one channel if needed; gray frames pass through unchanged.
pub fn ensure_gray(frame: &Frame) -> Result<Frame> {
    match frame.channels {
        1 => Ok(frame.clone()),
        _ => to_grayscale(frame),
    }
}

pub fn crop_frame(frame: &Frame, bbox: &BoundingBox) -> Result<Frame> {
    bbox.check_fits(frame.height, frame.width)?;
    let ch = frame.channels;
    let mut data = Vec::with_capacity(bbox.w * bbox.h * ch);
    for r in bbox.y..bbox.y + bbox.h {
        let start = (r * frame.width + bbox.x) * ch;
        data.extend_from_slice(&frame.data[start..start + bbox.w * ch]);
    }
    Ok(Frame {
        height: bbox.h,
        width: bbox.w,
        channels: ch,
        data,
    })
}

pub fn crop(clip: &Clip, bbox: &BoundingBox) -> Result<Clip> {
    clip.map_frames(|f| crop_frame(f, bbox))
}

pub fn hflip_frame(frame: &Frame) -> Frame {
    let ch = frame.channels;
    let mut data = Vec::with_capacity(frame.data.len());
    for row in frame.data.chunks_exact(frame.width * ch) {
        for px in row.chunks_exact(ch).rev() {
            data.extend_from_slice(px);
        }
    }
    Frame {
        height: frame.height,
        width: frame.width,
        channels: ch,
        data,
    }
}

pub fn hflip(clip: &Clip) -> Clip {
    Clip {
        frames: clip.frames.iter().map(hflip_frame).collect(),
        fps: clip.fps,
    }
}

/// Two-tap interpolation along one axis: `value = src[lo] * w_lo + src[hi] * w_hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Tap {
    lo: usize,
    hi: usize,
    w_lo: f64,
    w_hi: f64,
}

/// Corner-aligned sample positions for resizing an axis of `src` samples to `dst`.
///
/// Taps in the right half are derived by reflecting the left half, so the
/// result is exactly mirror-symmetric. Weights are quantised to 1/65536 so that
/// `w_lo + w_hi == 1` and the f64 blend of an f32 constant is exact.
fn axis_taps(src: usize, dst: usize) -> Vec<Tap> {
    let direct = |i: usize| -> Tap {
        let pos = if dst == 1 {
            (src - 1) as f64 / 2.0
        } else {
            (i * (src - 1)) as f64 / (dst - 1) as f64
        };
        let lo = (pos.floor() as usize).min(src - 1);
        let hi = (lo + 1).min(src - 1);
        let frac = ((pos - lo as f64) * 65536.0).round() / 65536.0;
        Tap {
            lo,
            hi,
            w_lo: 1.0 - frac,
            w_hi: frac,
        }
    };
    (0..dst)
        .map(|i| {
            if 2 * i > dst - 1 {
                let t = direct(dst - 1 - i);
                Tap {
                    lo: src - 1 - t.hi,
                    hi: src - 1 - t.lo,
                    w_lo: t.w_hi,
                    w_hi: t.w_lo,
                }
            } else {
                direct(i)
            }
        })
        .collect()
}

/// Bilinear resize with corner-aligned sampling.
pub fn resize(frame: &Frame, out_h: usize, out_w: usize) -> Result<Frame> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidInput(format!(
            "resize target must be positive, got {out_h}x{out_w}"
        )));
    }
    if out_h == frame.height && out_w == frame.width {
        return Ok(frame.clone());
    }
    let rows = axis_taps(frame.height, out_h);
    let cols = axis_taps(frame.width, out_w);
    let ch = frame.channels;
    let mut data = Vec::with_capacity(out_h * out_w * ch);
    for ry in &rows {
        for cx in &cols {
            for c in 0..ch {
                let px = |r: usize, col: usize| frame.get(r, col, c) as f64;
                let top = px(ry.lo, cx.lo) * cx.w_lo + px(ry.lo, cx.hi) * cx.w_hi;
                let bottom = px(ry.hi, cx.lo) * cx.w_lo + px(ry.hi, cx.hi) * cx.w_hi;
                let value = top * ry.w_lo + bottom * ry.w_hi;
                data.push((value as f32).clamp(0.0, 1.0));
            }
        }
    }
    Ok(Frame {
        height: out_h,
        width: out_w,
        channels: ch,
        data,
    })
}
