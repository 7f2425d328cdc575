//! Procedural pitch-video generator.
//!
//! Each pitch is a short RGB clip of a 2D stick-figure pitcher (torso, head,
//! throwing arm, glove arm, two legs) executing a parameterised overhand
//! delivery in front of a static background. The kinematic model is
//! left-handed; right-handed clips are the exact horizontal mirror of the
//! left-handed rendering with the same per-pitch noise.
//!
//! Injured pitches (the last `injured_per_event` before each disabled-list
//! placement) perturb the delivery along five channels: arm angular speed,
//! release timing, stride length, trunk lean and elbow extension. Each
//! injury type weights those channels differently. Game ids are metadata only
//! and never reach the renderer.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::record::{Handedness, InjuryType, Manifest, PitchRecord};
use crate::error::{Error, Result};
use crate::seed;
use crate::video::{hflip_frame, BoundingBox, Clip, Frame};

const BACKGROUND: [f32; 3] = [0.22, 0.42, 0.25];
const PANTS: [f32; 3] = [0.88, 0.88, 0.84];
const SKIN: [f32; 3] = [0.92, 0.74, 0.6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PitcherProfile {
    /// Angle swept by the throwing arm, radians.
    pub arm_amplitude: f64,
    /// Relative angular speed of the arm (1 = nominal).
    pub arm_speed: f64,
    /// Fraction of the clip at which the arm phase begins.
    pub release_offset: f64,
    /// Figure height as a fraction of the crop height.
    pub body_scale: f64,
    /// Stride length relative to figure height.
    pub stride: f64,
    /// Maximum trunk lean, radians.
    pub lean: f64,
    /// Habitual elbow bend added through the delivery, radians.
    pub elbow: f64,
    pub jersey: [f32; 3],
}

impl PitcherProfile {
    pub fn nominal() -> Self {
        PitcherProfile {
            arm_amplitude: 2.6,
            arm_speed: 1.0,
            release_offset: 0.3,
            body_scale: 0.78,
            stride: 0.5,
            lean: 0.5,
            elbow: 0.0,
            jersey: [0.85, 0.85, 0.9],
        }
    }

    /// Profile for the pitcher with global ordinal `ordinal`; `spread` scales the
    /// deviation from nominal (0 gives identical pitchers).
    pub fn derive(seed: u64, ordinal: u64, spread: f64) -> Self {
        let mut rng = seed::rng(seed, &[seed::tag("profile"), ordinal]);
        let mut jitter = |range: f64| spread * range * rng.random_range(-1.0..=1.0);
        let n = PitcherProfile::nominal();
        let arm_amplitude = n.arm_amplitude + jitter(0.35);
        let arm_speed = n.arm_speed + jitter(0.3);
        let release_offset = n.release_offset + jitter(0.06);
        let body_scale = n.body_scale + jitter(0.06);
        let stride = n.stride + jitter(0.12);
        let lean = n.lean + jitter(0.2);
        let elbow = n.elbow + jitter(0.3);
        let mut crng = seed::rng(seed, &[seed::tag("jersey"), ordinal]);
        let jersey = [
            crng.random_range(0.55f32..1.0),
            crng.random_range(0.55f32..1.0),
            crng.random_range(0.55f32..1.0),
        ];
        PitcherProfile {
            arm_amplitude,
            arm_speed,
            release_offset,
            body_scale,
            stride,
            lean,
            elbow,
            jersey,
        }
    }
}

/// Channel weights `(arm speed, release delay, stride, lean, elbow)` per injury.
/// Every motion-altering injury shares a guarded-arm component (slower arm,
/// later release, bent elbow); the remaining weight is type specific.
pub fn injury_channels(t: InjuryType) -> [f64; 5] {
    const GUARD: [f64; 5] = [0.5, 0.4, 0.0, 0.0, 0.5];
    let specific = match t {
        InjuryType::HamstringStrain => [0.0, 0.0, 1.0, 0.2, 0.0],
        InjuryType::BackStrain => [0.0, 0.0, 0.2, 1.0, 0.0],
        InjuryType::ShoulderStrain => [0.5, 0.2, 0.0, 0.2, 0.0],
        InjuryType::IntercostalStrain => [0.1, 0.0, 0.0, 0.8, 0.0],
        InjuryType::GroinStrain => [0.0, 0.0, 0.9, 0.0, 0.0],
        InjuryType::UclTear => [0.2, 0.2, 0.0, 0.0, 0.4],
        InjuryType::ArmStrain => [0.4, 0.1, 0.0, 0.0, 0.1],
        InjuryType::SternoclavicularJoint => [0.1, 0.1, 0.0, 0.3, 0.0],
        InjuryType::RotatorCuff => [0.2, 0.0, 0.0, 0.0, 0.0],
        InjuryType::FingerBlister => return [0.03, 0.02, 0.0, 0.0, 0.0],
    };
    std::array::from_fn(|i| GUARD[i] + specific[i])
}

/// Injury assignment order; the first eight are all motion-altering.
pub const DEFAULT_INJURY_CYCLE: [InjuryType; 10] = [
    InjuryType::HamstringStrain,
    InjuryType::BackStrain,
    InjuryType::ShoulderStrain,
    InjuryType::IntercostalStrain,
    InjuryType::GroinStrain,
    InjuryType::UclTear,
    InjuryType::ArmStrain,
    InjuryType::SternoclavicularJoint,
    InjuryType::RotatorCuff,
    InjuryType::FingerBlister,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub seed: u64,
    pub left_pitchers: u32,
    pub right_pitchers: u32,
    /// Unperturbed pitches per pitcher, spread over that pitcher's injury events.
    pub healthy_per_pitcher: u32,
    /// Perturbed pitches immediately preceding each disabled-list placement.
    pub injured_per_event: u32,
    /// How many pitchers (taken from the end of each arm's roster) have two injury events.
    pub multi_injury_pitchers: u32,
    /// Games the healthy pitches of each event block are spread over; the
    /// perturbed pitches form one additional injury game.
    pub healthy_games: u32,
    /// Pitches at most this far before a placement carry the event linkage; `None` links all.
    pub link_window: Option<u32>,
    pub frames: usize,
    pub frame_height: usize,
    pub frame_width: usize,
    pub crop_height: usize,
    pub crop_width: usize,
    pub fps: f64,
    pub injury_delta: f64,
    pub profile_spread: f64,
    pub pixel_noise: f64,
    pub timing_jitter: f64,
    pub injury_cycle: Vec<InjuryType>,
    /// Explicit per-pitcher profiles in roster order (lefties first); empty derives them from the seed.
    pub profiles: Vec<PitcherProfile>,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            seed: 2017,
            left_pitchers: 4,
            right_pitchers: 4,
            healthy_per_pitcher: 100,
            injured_per_event: 20,
            multi_injury_pitchers: 0,
            healthy_games: 2,
            link_window: Some(100),
            frames: 16,
            frame_height: 54,
            frame_width: 96,
            crop_height: 46,
            crop_width: 60,
            fps: 60.0,
            injury_delta: 1.0,
            profile_spread: 1.0,
            pixel_noise: 0.01,
            timing_jitter: 0.01,
            injury_cycle: DEFAULT_INJURY_CYCLE.to_vec(),
            profiles: Vec::new(),
        }
    }
}

impl SynthParams {
    /// Same corpus composition with 8 frames and a 24x32 pitcher crop, sized
    /// so whole protocol suites train in minutes on one core.
    pub fn compact() -> Self {
        SynthParams {
            frames: 8,
            frame_height: 30,
            frame_width: 48,
            crop_height: 24,
            crop_width: 32,
            ..SynthParams::default()
        }
    }

    pub fn total_pitchers(&self) -> u32 {
        self.left_pitchers + self.right_pitchers
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.total_pitchers() == 0 {
            return bad("at least one pitcher is required".into());
        }
        if self.multi_injury_pitchers > self.left_pitchers.max(self.right_pitchers) {
            return bad("multi_injury_pitchers exceeds the roster".into());
        }
        if self.healthy_games == 0 {
            return bad("healthy_games must be >= 1".into());
        }
        if self.frames < 2 {
            return bad(format!("need at least 2 frames, got {}", self.frames));
        }
        if self.crop_height < 8 || self.crop_width < 8 {
            return bad("crop must be at least 8x8".into());
        }
        if self.crop_height > self.frame_height || self.crop_width > self.frame_width {
            return bad("crop does not fit in the frame".into());
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive".into());
        }
        if !(self.injury_delta >= 0.0) || !(self.profile_spread >= 0.0) {
            return bad("injury_delta and profile_spread must be >= 0".into());
        }
        if !(self.pixel_noise >= 0.0) || !(self.timing_jitter >= 0.0) {
            return bad("noise levels must be >= 0".into());
        }
        if self.injury_cycle.is_empty() && self.injured_per_event > 0 {
            return bad("injury_cycle is empty".into());
        }
        if !self.profiles.is_empty() && self.profiles.len() != self.total_pitchers() as usize {
            return bad(format!(
                "{} explicit profiles for {} pitchers",
                self.profiles.len(),
                self.total_pitchers()
            ));
        }
        Ok(())
    }
}

/// Per-pitch rendering inputs resolved at generation time.
#[derive(Debug, Clone)]
struct PitchPlan {
    ordinal: u64,
    seq_index: u32,
    perturbation: Option<InjuryType>,
}

#[derive(Debug, Clone)]
struct PitcherSpec {
    handedness: Handedness,
    profile: PitcherProfile,
    left_bbox: BoundingBox,
}

/// A generated corpus: the manifest plus on-demand clip rendering.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    params: SynthParams,
    manifest: Manifest,
    pitchers: BTreeMap<String, PitcherSpec>,
    plans: BTreeMap<String, PitchPlan>,
}

fn left_bbox(p: &SynthParams) -> BoundingBox {
    BoundingBox {
        x: (p.frame_width - p.crop_width) / 4,
        y: p.frame_height - p.crop_height - (p.frame_height - p.crop_height) / 3,
        w: p.crop_width,
        h: p.crop_height,
    }
}

pub fn synth_generate(params: &SynthParams) -> Result<SynthCorpus> {
    params.validate()?;
    let mut records = Vec::new();
    let mut pitchers = BTreeMap::new();
    let mut plans = BTreeMap::new();
    let mut event_ordinal = 0usize;
    let roster: Vec<(Handedness, u32)> = (0..params.left_pitchers)
        .map(|i| (Handedness::Left, i))
        .chain((0..params.right_pitchers).map(|i| (Handedness::Right, i)))
        .collect();
    for (ordinal, &(hand, idx)) in roster.iter().enumerate() {
        let ordinal = ordinal as u64;
        let prefix = match hand {
            Handedness::Left => 'L',
            Handedness::Right => 'R',
        };
        let pitcher_id = format!("{prefix}{:02}", idx + 1);
        let profile = match params.profiles.get(ordinal as usize) {
            Some(p) => p.clone(),
            None => PitcherProfile::derive(params.seed, ordinal, params.profile_spread),
        };
        let lb = left_bbox(params);
        let bbox = match hand {
            Handedness::Left => lb,
            Handedness::Right => lb.mirror(params.frame_width),
        };
        let roster_len = match hand {
            Handedness::Left => params.left_pitchers,
            Handedness::Right => params.right_pitchers,
        };
        let events = if idx + params.multi_injury_pitchers >= roster_len {
            2
        } else {
            1
        };
        let mut seq = 0u32;
        let mut game = 0u32;
        let mut healthy_left = params.healthy_per_pitcher;
        for e in 0..events {
            let healthy = if e + 1 == events {
                healthy_left
            } else {
                params.healthy_per_pitcher.div_ceil(events)
            };
            healthy_left -= healthy;
            let injury = params.injury_cycle[event_ordinal % params.injury_cycle.len().max(1)];
            event_ordinal += 1;
            let event_id = format!("{pitcher_id}-e{}", e + 1);
            let block = healthy + params.injured_per_event;
            let games = params.healthy_games.min(healthy.max(1));
            for i in 0..block {
                let pbd = block - i;
                let perturbed = pbd <= params.injured_per_event;
                let game_in_block = if perturbed {
                    games
                } else {
                    i * games / healthy.max(1)
                };
                let linked = params.link_window.is_none_or(|w| pbd <= w);
                let pitch_id = format!("{pitcher_id}-{seq:04}");
                records.push(PitchRecord {
                    pitch_id: pitch_id.clone(),
                    pitcher_id: pitcher_id.clone(),
                    handedness: hand,
                    game_id: format!("{pitcher_id}-g{:02}", game + game_in_block + 1),
                    seq_index: seq,
                    injury_event_id: linked.then(|| event_id.clone()),
                    pitches_before_dl: linked.then_some(pbd),
                    injury_type: linked.then_some(injury),
                    clip_ref: pitch_id.clone(),
                    bbox,
                });
                plans.insert(
                    pitch_id,
                    PitchPlan {
                        ordinal,
                        seq_index: seq,
                        perturbation: perturbed.then_some(injury),
                    },
                );
                seq += 1;
            }
            game += games + 1;
        }
        pitchers.insert(
            pitcher_id,
            PitcherSpec {
                handedness: hand,
                profile,
                left_bbox: lb,
            },
        );
    }
    Ok(SynthCorpus {
        params: params.clone(),
        manifest: Manifest::new(records)?,
        pitchers,
        plans,
    })
}

impl SynthCorpus {
    pub fn params(&self) -> &SynthParams {
        &self.params
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn profile(&self, pitcher_id: &str) -> Option<&PitcherProfile> {
        self.pitchers.get(pitcher_id).map(|p| &p.profile)
    }

    /// Whether the generator perturbed this pitch, and with which injury.
    pub fn perturbation(&self, pitch_id: &str) -> Option<InjuryType> {
        self.plans.get(pitch_id).and_then(|p| p.perturbation)
    }

    pub fn render(&self, record: &PitchRecord) -> Result<Clip> {
        let spec = self.spec(record)?;
        Ok(self.render_as(record, spec.handedness)?.0)
    }

    /// Renders the pitch as if thrown with `hand`, keeping profile and noise
    /// stream; returns the clip and the matching bounding box.
    pub fn render_as(&self, record: &PitchRecord, hand: Handedness) -> Result<(Clip, BoundingBox)> {
        let spec = self.spec(record)?;
        let plan = &self.plans[&record.pitch_id];
        let frames = render_left(&self.params, &spec.profile, &spec.left_bbox, plan);
        let (frames, bbox) = match hand {
            Handedness::Left => (frames, spec.left_bbox),
            Handedness::Right => (
                frames.iter().map(hflip_frame).collect(),
                spec.left_bbox.mirror(self.params.frame_width),
            ),
        };
        Ok((Clip::new(frames, self.params.fps)?, bbox))
    }

    fn spec(&self, record: &PitchRecord) -> Result<&PitcherSpec> {
        if !self.plans.contains_key(&record.pitch_id) {
            return Err(Error::Lookup {
                kind: "pitch",
                id: record.pitch_id.clone(),
            });
        }
        self.pitchers
            .get(&record.pitcher_id)
            .ok_or_else(|| Error::Lookup {
                kind: "pitcher",
                id: record.pitcher_id.clone(),
            })
    }
}

#[derive(Clone, Copy)]
struct Pt {
    x: f64,
    y: f64,
}

impl Pt {
    fn along(self, len: f64, angle: f64) -> Pt {
        Pt {
            x: self.x + len * angle.cos(),
            y: self.y + len * angle.sin(),
        }
    }
}

struct Capsule {
    a: Pt,
    b: Pt,
    radius: f64,
    color: [f32; 3],
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Body segments for one instant `t` in `[0, 1]` of the delivery.
#[allow(clippy::too_many_arguments)]
fn pose(
    profile: &PitcherProfile,
    bbox: &BoundingBox,
    t: f64,
    arm_start: f64,
    arm_speed: f64,
    stride: f64,
    lean: f64,
    elbow_bias: f64,
) -> Vec<Capsule> {
    let h = bbox.h as f64;
    let s = profile.body_scale * h;
    let limb = (0.045 * s).max(0.8);
    let feet_y = bbox.y as f64 + 0.95 * h;
    let stride_phase = smoothstep((t - 0.05) / 0.5);
    let hip = Pt {
        x: bbox.x as f64 + 0.34 * bbox.w as f64 + 0.2 * stride * s * stride_phase,
        y: feet_y - 0.45 * s,
    };
    let lean_angle = lean * smoothstep((t - 0.3) / 0.5);
    let up = -std::f64::consts::FRAC_PI_2 + lean_angle;
    let neck = hip.along(0.36 * s, up);
    let head = hip.along(0.47 * s, up);

    let back_foot = Pt {
        x: hip.x - 0.18 * s - 0.2 * stride * s * stride_phase,
        y: feet_y,
    };
    let front_foot = Pt {
        x: hip.x + 0.1 * s + 0.6 * stride * s * stride_phase,
        y: feet_y - 0.08 * s * (1.0 - stride_phase),
    };
    let knee = Pt {
        x: 0.5 * (hip.x + front_foot.x) + 0.06 * s,
        y: 0.5 * (hip.y + front_foot.y) - 0.1 * s * (1.0 - stride_phase),
    };

    let arm_phase = smoothstep((t - arm_start) * arm_speed / 0.4);
    let cocked = std::f64::consts::PI + 0.6;
    let shoulder_angle = cocked + profile.arm_amplitude * arm_phase;
    let elbow = neck.along(0.2 * s, shoulder_angle);
    let bend = 0.9 * (1.0 - arm_phase) + elbow_bias;
    let hand = elbow.along(0.2 * s, shoulder_angle + bend);
    let glove = neck.along(0.28 * s, 0.3 + 1.0 * arm_phase);

    let jersey = profile.jersey;
    vec![
        Capsule {
            a: hip,
            b: back_foot,
            radius: limb,
            color: PANTS,
        },
        Capsule {
            a: neck,
            b: glove,
            radius: limb,
            color: jersey,
        },
        Capsule {
            a: hip,
            b: neck,
            radius: 1.6 * limb,
            color: jersey,
        },
        Capsule {
            a: hip,
            b: knee,
            radius: limb,
            color: PANTS,
        },
        Capsule {
            a: knee,
            b: front_foot,
            radius: limb,
            color: PANTS,
        },
        Capsule {
            a: head,
            b: head,
            radius: 0.08 * s,
            color: SKIN,
        },
        Capsule {
            a: neck,
            b: elbow,
            radius: limb,
            color: jersey,
        },
        Capsule {
            a: elbow,
            b: hand,
            radius: 0.9 * limb,
            color: SKIN,
        },
    ]
}

fn segment_distance(p: Pt, a: Pt, b: Pt) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.x + t * dx - p.x, a.y + t * dy - p.y);
    (qx * qx + qy * qy).sqrt()
}

fn paint(buf: &mut [f32], width: usize, height: usize, c: &Capsule) {
    let pad = c.radius + 1.0;
    let x0 = (c.a.x.min(c.b.x) - pad).floor().max(0.0) as usize;
    let y0 = (c.a.y.min(c.b.y) - pad).floor().max(0.0) as usize;
    let x1 = ((c.a.x.max(c.b.x) + pad).ceil().max(0.0) as usize).min(width - 1);
    let y1 = ((c.a.y.max(c.b.y) + pad).ceil().max(0.0) as usize).min(height - 1);
    for r in y0..=y1 {
        for col in x0..=x1 {
            let d = segment_distance(
                Pt {
                    x: col as f64,
                    y: r as f64,
                },
                c.a,
                c.b,
            );
            let cover = (c.radius + 0.5 - d).clamp(0.0, 1.0) as f32;
            if cover > 0.0 {
                let i = (r * width + col) * 3;
                for ch in 0..3 {
                    buf[i + ch] = buf[i + ch] * (1.0 - cover) + c.color[ch] * cover;
                }
            }
        }
    }
}

fn render_left(
    params: &SynthParams,
    profile: &PitcherProfile,
    bbox: &BoundingBox,
    plan: &PitchPlan,
) -> Vec<Frame> {
    let mut rng = seed::rng(
        params.seed,
        &[seed::tag("pitch"), plan.ordinal, plan.seq_index as u64],
    );
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let timing = params.timing_jitter * normal.sample(&mut rng);
    let speed_noise = 1.0 + 0.5 * params.timing_jitter * normal.sample(&mut rng);

    let [w_arm, w_delay, w_stride, w_lean, w_elbow] =
        plan.perturbation.map(injury_channels).unwrap_or([0.0; 5]);
    let d = params.injury_delta;
    let arm_speed = profile.arm_speed * speed_noise * (1.0 - 0.3 * d * w_arm).max(0.1);
    let arm_start = profile.release_offset + timing + 0.08 * d * w_delay;
    let stride = profile.stride * (1.0 - 0.4 * d * w_stride).max(0.0);
    let lean = profile.lean * (1.0 - 0.6 * d * w_lean).max(0.0);
    let elbow_bias = profile.elbow + 0.4 * d * w_elbow;

    let (h, w) = (params.frame_height, params.frame_width);
    let pixel_noise = Normal::new(0.0, params.pixel_noise.max(0.0)).expect("finite sigma");
    (0..params.frames)
        .map(|i| {
            let t = i as f64 / (params.frames - 1) as f64;
            let mut buf: Vec<f32> = BACKGROUND.iter().copied().cycle().take(h * w * 3).collect();
            for c in pose(
                profile, bbox, t, arm_start, arm_speed, stride, lean, elbow_bias,
            ) {
                paint(&mut buf, w, h, &c);
            }
            if params.pixel_noise > 0.0 {
                for v in buf.iter_mut() {
                    *v = (*v + pixel_noise.sample(&mut rng) as f32).clamp(0.0, 1.0);
                }
            }
            Frame::new(h, w, 3, buf).expect("renderer keeps pixels in range")
        })
        .collect()
}
