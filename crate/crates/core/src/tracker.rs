//! Online single-object tracking with a three-scale search pyramid.
//!
//! The exemplar is cropped once from the first frame and its recalibrated
//! features are frozen for the whole sequence. Each later frame is searched
//! around the previous center at every configured scale; the scale whose
//! fused map peaks highest wins, and the box only changes size when that
//! scale is not 1. The cosine window only steers localization within the
//! winning scale: it rescales each map to unit sum, which would otherwise
//! turn the scale comparison into a contest of peak sharpness that larger
//! search areas always win.

use std::sync::Arc;

use rayon::prelude::*;

use crate::backbone::FeatureSet;
use crate::error::{Error, Result};
use crate::eval::ResettableTracker;
use crate::network::{correlate_layers, LayerResponses, SiameseNetwork};
use crate::numkit::catmull_rom_weights;
use crate::response::{
    cosine_window_eps, locate_peak, Displacement, FusionPlan, ResponseMap, DEFAULT_WINDOW_INFLUENCE,
};
use crate::tensor::Tensor3;

pub const EXEMPLAR_SIZE: usize = 127;
pub const SEARCH_SIZE: usize = 255;
pub const SCALE_STEP: f64 = 1.025;

/// Axis-aligned box by center and size, in frame pixels.
///
/// Pixel `(r, c)` covers `[c, c + 1) x [r, r + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { cx, cy, w, h };
        b.validate()?;
        Ok(b)
    }

    /// From top-left corner and size.
    pub fn from_corner(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x + w / 2.0, y + h / 2.0, w, h)
    }

    /// `(x, y)` of the top-left corner.
    pub fn corner(&self) -> (f64, f64) {
        (self.cx - self.w / 2.0, self.cy - self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.cx, self.cy, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite || self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::InvalidArgument(format!("degenerate bounding box {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Search scale factors; an odd count that includes 1.
    pub scales: Vec<f64>,
    pub fusion: FusionPlan,
    /// Cosine-window influence, or `None` to disable the window.
    pub window_influence: Option<f64>,
    /// Context margin as a fraction of `w + h`.
    pub context: f64,
    /// Evaluate the scales on the rayon pool.
    pub parallel_scales: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            scales: vec![SCALE_STEP.powi(-1), 1.0, SCALE_STEP],
            fusion: FusionPlan::default(),
            window_influence: Some(DEFAULT_WINDOW_INFLUENCE),
            context: 0.5,
            parallel_scales: false,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.len() % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "need an odd number of scales, got {}",
                self.scales.len()
            )));
        }
        if self.scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidArgument("scales must be positive".into()));
        }
        if !self.scales.contains(&1.0) {
            return Err(Error::InvalidArgument("scales must include 1".into()));
        }
        if let Some(g) = self.window_influence {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::InvalidArgument(format!("window influence {g} outside [0, 1]")));
            }
        }
        if !(self.context >= 0.0) {
            return Err(Error::InvalidArgument("context must be nonnegative".into()));
        }
        self.fusion.validate()
    }
}

/// Side of the square exemplar crop: `sqrt((w + p)(h + p))` with
/// `p = context * (w + h)`.
pub fn exemplar_side(bbox: &BoundingBox, context: f64) -> f64 {
    let p = context * (bbox.w + bbox.h);
    ((bbox.w + p) * (bbox.h + p)).sqrt()
}

pub fn search_side(exemplar_side: f64) -> f64 {
    exemplar_side * SEARCH_SIZE as f64 / EXEMPLAR_SIZE as f64
}

/// Square crop of side `side` centered on `(cx, cy)`, resampled to
/// `out_size x out_size` with Catmull-Rom interpolation. Area outside the
/// frame reads as the frame's per-channel mean.
pub fn crop_patch(frame: &Tensor3, cx: f64, cy: f64, side: f64, out_size: usize) -> Result<Tensor3> {
    if !(side.is_finite() && side > 0.0) || !cx.is_finite() || !cy.is_finite() || out_size == 0 {
        return Err(Error::InvalidArgument(format!(
            "degenerate crop: center ({cx}, {cy}), side {side}, output {out_size}"
        )));
    }
    let (h, w, c) = frame.shape();
    let mean: Vec<f32> = frame.channel_means().into_iter().map(|m| m as f32).collect();
    let step = side / out_size as f64;

    // Per output index along one axis: first tap and its four weights.
    let taps = |center: f64| -> Vec<(i64, [f64; 4])> {
        (0..out_size)
            .map(|j| {
                let p = center - side / 2.0 + (j as f64 + 0.5) * step - 0.5;
                let base = p.floor();
                (base as i64 - 1, catmull_rom_weights(p - base))
            })
            .collect()
    };
    let xt = taps(cx);
    let yt = taps(cy);

    let mut out = Vec::with_capacity(out_size * out_size * c);
    let mut acc = vec![0.0f64; c];
    for &(y0, wy) in &yt {
        for &(x0, wx) in &xt {
            acc.fill(0.0);
            for (i, wyi) in wy.iter().enumerate() {
                let y = y0 + i as i64;
                for (j, wxj) in wx.iter().enumerate() {
                    let x = x0 + j as i64;
                    let wgt = wyi * wxj;
                    let px: &[f32] = if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                        frame.pixel(y as usize, x as usize)
                    } else {
                        &mean
                    };
                    for (a, &v) in acc.iter_mut().zip(px) {
                        *a += wgt * v as f64;
                    }
                }
            }
            out.extend(acc.iter().map(|&v| v as f32));
        }
    }
    Tensor3::new(out_size, out_size, c, out)
}

/// Context-aware crop: the exemplar side for a 127 output,
/// the search side for anything else.
pub fn crop_for_box(frame: &Tensor3, bbox: &BoundingBox, context: f64, out_size: usize) -> Result<Tensor3> {
    bbox.validate()?;
    let sz = exemplar_side(bbox, context);
    let side = if out_size == EXEMPLAR_SIZE { sz } else { search_side(sz) };
    crop_patch(frame, bbox.cx, bbox.cy, side, out_size)
}

/// Maps of the winning scale, kept for debugging dumps.
#[derive(Debug, Clone)]
pub struct ScaleResponses {
    pub layers: LayerResponses,
    pub fused: ResponseMap,
    /// The map used for peak localization.
    pub scored: ResponseMap,
}

#[derive(Debug, Clone)]
pub struct FrameReport {
    pub bbox: BoundingBox,
    pub scale: f64,
    pub scale_index: usize,
    /// Center motion in frame pixels.
    pub displacement: Displacement,
    /// Maximum of the winning fused map.
    pub peak: f64,
    pub search_crops: usize,
    pub correlations: usize,
    pub responses: ScaleResponses,
}

struct ScaleEval {
    scale: f64,
    responses: ScaleResponses,
    peak: f64,
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    network: Arc<SiameseNetwork>,
    config: TrackerConfig,
    bbox: BoundingBox,
    exemplar: [FeatureSet; 2],
    exemplar_side: f64,
    search_side: f64,
    frame_index: usize,
}

impl TrackerState {
    pub fn init(
        frame: &Tensor3,
        bbox: BoundingBox,
        network: Arc<SiameseNetwork>,
        config: TrackerConfig,
    ) -> Result<Self> {
        config.validate()?;
        bbox.validate()?;
        let sz = exemplar_side(&bbox, config.context);
        let patch = crop_patch(frame, bbox.cx, bbox.cy, sz, EXEMPLAR_SIZE)?;
        let exemplar = network.all_features(&patch)?;
        Ok(Self {
            network,
            config,
            bbox,
            exemplar,
            exemplar_side: sz,
            search_side: search_side(sz),
            frame_index: 0,
        })
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Recalibrated exemplar features, indexed by `Model::index`.
    pub fn exemplar_features(&self) -> &[FeatureSet; 2] {
        &self.exemplar
    }

    pub fn exemplar_side(&self) -> f64 {
        self.exemplar_side
    }

    pub fn search_side(&self) -> f64 {
        self.search_side
    }

    fn evaluate_scale(&self, frame: &Tensor3, scale: f64) -> Result<ScaleEval> {
        let patch = crop_patch(
            frame,
            self.bbox.cx,
            self.bbox.cy,
            self.search_side * scale,
            SEARCH_SIZE,
        )?;
        let search = self.network.all_features(&patch)?;
        let layers = correlate_layers(&self.exemplar, &search)?;
        let fused = layers.fuse(&self.config.fusion)?;
        let scored = match self.config.window_influence {
            Some(g) => cosine_window_eps(&fused, g, self.config.fusion.epsilon)?,
            None => fused.clone(),
        };
        let peak = fused.max();
        if !peak.is_finite() || !scored.max().is_finite() {
            return Err(Error::NonFinite("response map"));
        }
        Ok(ScaleEval {
            scale,
            responses: ScaleResponses { layers, fused, scored },
            peak,
        })
    }

    /// Finds the target in `frame` and updates the state.
    pub fn track_frame(&mut self, frame: &Tensor3) -> Result<FrameReport> {
        let scales = &self.config.scales;
        let evals: Vec<ScaleEval> = if self.config.parallel_scales {
            scales
                .par_iter()
                .map(|&s| self.evaluate_scale(frame, s))
                .collect::<Result<_>>()?
        } else {
            scales
                .iter()
                .map(|&s| self.evaluate_scale(frame, s))
                .collect::<Result<_>>()?
        };
        let search_crops = evals.len();
        let correlations = evals.iter().map(|e| e.responses.layers.iter().count()).sum();

        // Highest peak wins; ties prefer the scale nearest 1, then the smaller.
        let better = |a: &ScaleEval, b: &ScaleEval| {
            if a.peak != b.peak {
                return a.peak > b.peak;
            }
            let (da, db) = (a.scale.ln().abs(), b.scale.ln().abs());
            if da != db {
                return da < db;
            }
            a.scale < b.scale
        };
        let mut best = 0;
        for i in 1..evals.len() {
            if better(&evals[i], &evals[best]) {
                best = i;
            }
        }
        let win = evals.into_iter().nth(best).expect("at least one scale");

        let d = locate_peak(&win.responses.scored)?;
        let factor = self.search_side * win.scale / SEARCH_SIZE as f64;
        let displacement = Displacement {
            dy: d.dy * factor,
            dx: d.dx * factor,
        };
        self.bbox.cx += displacement.dx;
        self.bbox.cy += displacement.dy;
        if win.scale != 1.0 {
            self.bbox.w *= win.scale;
            self.bbox.h *= win.scale;
            self.exemplar_side *= win.scale;
            self.search_side *= win.scale;
        }
        self.frame_index += 1;

        Ok(FrameReport {
            bbox: self.bbox,
            scale: win.scale,
            scale_index: self
                .config
                .scales
                .iter()
                .position(|&s| s == win.scale)
                .expect("winning scale is configured"),
            displacement,
            peak: win.peak,
            search_crops,
            correlations,
            responses: win.responses,
        })
    }
}

/// Runs a `TrackerState` under the reset protocol, fetching frames by
/// index from `source`.
pub struct ResettingTracker<F> {
    network: Arc<SiameseNetwork>,
    config: TrackerConfig,
    source: F,
    state: Option<TrackerState>,
}

impl<F: FnMut(usize) -> Result<Tensor3>> ResettingTracker<F> {
    pub fn new(network: Arc<SiameseNetwork>, config: TrackerConfig, source: F) -> Self {
        Self {
            network,
            config,
            source,
            state: None,
        }
    }
}

impl<F: FnMut(usize) -> Result<Tensor3>> ResettableTracker for ResettingTracker<F> {
    fn start(&mut self, frame: usize, bbox: BoundingBox) -> Result<()> {
        let image = (self.source)(frame)?;
        self.state = Some(TrackerState::init(
            &image,
            bbox,
            self.network.clone(),
            self.config.clone(),
        )?);
        Ok(())
    }

    fn step(&mut self, frame: usize) -> Result<BoundingBox> {
        let image = (self.source)(frame)?;
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::Sequence("step before start".into()))?;
        Ok(state.track_frame(&image)?.bbox)
    }
}
