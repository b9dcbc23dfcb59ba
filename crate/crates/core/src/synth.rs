//! Deterministic synthetic sequences with exact ground truth: one square
//! target moving at constant velocity over a flat or noisy background.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;
use crate::tracker::BoundingBox;

/// Minimum distance between the target and every frame border.
pub const BORDER_MARGIN: f64 = 32.0;
/// Largest per-frame speed along either axis.
pub const MAX_SPEED: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    Solid,
    /// Two-tone checkerboard with square cells of the given side.
    Checker { cell: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Background {
    Uniform,
    /// Independent Gaussian noise on every pixel of every frame.
    Noise { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub target_size: f64,
    /// Center of the target on frame 0; `None` centers the trajectory.
    pub start: Option<(f64, f64)>,
    /// Per-frame motion `(dx, dy)` in pixels.
    pub velocity: (f64, f64),
    pub texture: Texture,
    pub background: Background,
    pub target_color: [f32; 3],
    pub background_color: [f32; 3],
    pub seed: u64,
    pub length: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            width: 360,
            height: 240,
            target_size: 40.0,
            start: None,
            velocity: (2.0, 1.0),
            texture: Texture::Solid,
            background: Background::Uniform,
            target_color: [0.9, 0.25, 0.15],
            background_color: [0.45, 0.5, 0.55],
            seed: 0,
            length: 100,
        }
    }
}

/// Lazily rendered sequence; frame `k` is identical however often it is
/// rendered.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    spec: SyntheticSpec,
    ground_truth: Vec<BoundingBox>,
}

impl SyntheticSequence {
    pub fn new(spec: SyntheticSpec) -> Result<Self> {
        if spec.length == 0 || spec.width == 0 || spec.height == 0 {
            return Err(Error::InvalidArgument("synthetic sequence needs frames and pixels".into()));
        }
        if !(spec.target_size > 0.0) {
            return Err(Error::InvalidArgument("target size must be positive".into()));
        }
        let (vx, vy) = spec.velocity;
        if !(vx.abs() <= MAX_SPEED && vy.abs() <= MAX_SPEED) {
            return Err(Error::InvalidArgument(format!(
                "velocity ({vx}, {vy}) exceeds {MAX_SPEED} px/frame"
            )));
        }
        if let Texture::Checker { cell: 0 } = spec.texture {
            return Err(Error::InvalidArgument("checker cell must be positive".into()));
        }
        if let Background::Noise { sigma } = spec.background {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::InvalidArgument("noise sigma must be nonnegative".into()));
            }
        }
        let steps = (spec.length - 1) as f64;
        let (sx, sy) = spec.start.unwrap_or((
            spec.width as f64 / 2.0 - vx * steps / 2.0,
            spec.height as f64 / 2.0 - vy * steps / 2.0,
        ));
        let half = spec.target_size / 2.0;
        let ground_truth: Vec<BoundingBox> = (0..spec.length)
            .map(|k| BoundingBox::new(sx + vx * k as f64, sy + vy * k as f64, spec.target_size, spec.target_size))
            .collect::<Result<_>>()?;
        // Motion is linear, so the first and last frames bound the trajectory.
        for b in [ground_truth[0], ground_truth[spec.length - 1]] {
            let inside = b.cx - half >= BORDER_MARGIN
                && b.cy - half >= BORDER_MARGIN
                && b.cx + half <= spec.width as f64 - BORDER_MARGIN
                && b.cy + half <= spec.height as f64 - BORDER_MARGIN;
            if !inside {
                return Err(Error::InvalidArgument(format!(
                    "target leaves the {BORDER_MARGIN} px border margin (box {b:?} in a {}x{} frame)",
                    spec.width, spec.height
                )));
            }
        }
        Ok(Self { spec, ground_truth })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.spec.length
    }

    pub fn is_empty(&self) -> bool {
        self.spec.length == 0
    }

    pub fn ground_truth(&self) -> &[BoundingBox] {
        &self.ground_truth
    }

    /// Renders frame `k`. Values are multiples of 1/255 so an 8-bit image
    /// stores them exactly.
    pub fn frame(&self, k: usize) -> Tensor3 {
        let spec = &self.spec;
        let b = self.ground_truth[k];
        let (x0, y0) = b.corner();
        let (x1, y1) = (x0 + b.w, y0 + b.h);
        let mut noise = match spec.background {
            Background::Noise { sigma } if sigma > 0.0 => {
                let rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                Some((rng, Normal::new(0.0, sigma).expect("valid sigma")))
            }
            _ => None,
        };
        let overlap = |lo: f64, hi: f64, p: usize| {
            let p = p as f64;
            (hi.min(p + 1.0) - lo.max(p)).clamp(0.0, 1.0)
        };
        let mut data = Vec::with_capacity(spec.width * spec.height * 3);
        for r in 0..spec.height {
            let cy = overlap(y0, y1, r);
            for c in 0..spec.width {
                let coverage = cy * overlap(x0, x1, c);
                let texel = match spec.texture {
                    Texture::Solid => spec.target_color,
                    Texture::Checker { cell } => {
                        let u = ((c as f64 + 0.5 - x0) / cell as f64).floor() as i64;
                        let v = ((r as f64 + 0.5 - y0) / cell as f64).floor() as i64;
                        if (u + v).rem_euclid(2) == 0 {
                            spec.target_color
                        } else {
                            spec.background_color.map(|v| 1.0 - v)
                        }
                    }
                };
                for ch in 0..3 {
                    let mut bg = spec.background_color[ch] as f64;
                    if let Some((rng, dist)) = noise.as_mut() {
                        bg += dist.sample(rng);
                    }
                    let v = bg * (1.0 - coverage) + texel[ch] as f64 * coverage;
                    data.push(quantize(v));
                }
            }
        }
        Tensor3::new(spec.height, spec.width, 3, data).expect("sized buffer")
    }

    pub fn frames(&self) -> impl Iterator<Item = Tensor3> + '_ {
        (0..self.len()).map(|k| self.frame(k))
    }
}

fn quantize(v: f64) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() as f32 / 255.0
}

/// Renders the whole sequence up front.
pub fn generate_synthetic(spec: SyntheticSpec) -> Result<(Vec<Tensor3>, Vec<BoundingBox>)> {
    let seq = SyntheticSequence::new(spec)?;
    let frames = seq.frames().collect();
    Ok((frames, seq.ground_truth().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(length: usize) -> SyntheticSpec {
        SyntheticSpec {
            width: 200,
            height: 160,
            target_size: 24.0,
            length,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn zero_velocity_static_truth() {
        let seq = SyntheticSequence::new(SyntheticSpec { velocity: (0.0, 0.0), ..small(10) }).unwrap();
        assert!(seq.ground_truth().iter().all(|b| *b == seq.ground_truth()[0]));
    }

    #[test]
    fn same_seed_same_frames() {
        let spec = SyntheticSpec {
            background: Background::Noise { sigma: 0.1 },
            texture: Texture::Checker { cell: 4 },
            ..small(5)
        };
        let a = generate_synthetic(spec.clone()).unwrap();
        let b = generate_synthetic(spec.clone()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(SyntheticSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn kinematics() {
        let spec = SyntheticSpec {
            width: 400,
            height: 300,
            velocity: (2.0, 1.0),
            length: 51,
            ..SyntheticSpec::default()
        };
        let seq = SyntheticSequence::new(spec).unwrap();
        let gt = seq.ground_truth();
        let first = gt[0];
        let last = gt[50];
        assert_eq!((last.cx - first.cx, last.cy - first.cy), (100.0, 50.0));
    }

    #[test]
    fn margin_violation_rejected() {
        let spec = SyntheticSpec {
            velocity: (3.0, 0.0),
            length: 200,
            ..small(1)
        };
        assert!(SyntheticSequence::new(spec).is_err());
        assert!(SyntheticSequence::new(SyntheticSpec { velocity: (3.5, 0.0), ..small(3) }).is_err());
        assert!(SyntheticSequence::new(SyntheticSpec { start: Some((20.0, 80.0)), ..small(3) }).is_err());
    }

    #[test]
    fn solid_target_is_painted_at_truth() {
        let spec = SyntheticSpec {
            start: Some((100.0, 80.0)),
            velocity: (0.0, 0.0),
            ..small(2)
        };
        let seq = SyntheticSequence::new(spec.clone()).unwrap();
        let f = seq.frame(1);
        let q = |v: f32| quantize(v as f64);
        assert_eq!(f.get(80, 100, 0), q(spec.target_color[0]));
        assert_eq!(f.get(68, 88, 1), q(spec.target_color[1]));
        assert_eq!(f.get(67, 88, 1), q(spec.background_color[1]));
        assert_eq!(f.get(10, 10, 2), q(spec.background_color[2]));
    }

    #[test]
    fn values_are_eight_bit_exact() {
        let seq = SyntheticSequence::new(SyntheticSpec {
            start: Some((100.3, 80.7)),
            velocity: (0.4, -0.2),
            background: Background::Noise { sigma: 0.05 },
            ..small(3)
        })
        .unwrap();
        for v in seq.frame(2).data() {
            let b = (v * 255.0).round();
            assert_eq!(b / 255.0, *v);
        }
    }
}
