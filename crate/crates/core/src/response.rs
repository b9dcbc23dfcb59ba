//! Response maps: correlation, fusion, displacement prior, peak
//! localization and the logistic loss.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::backbone::{Layer, Model, TOTAL_STRIDE};
use crate::error::{shape_err, Error, Result};
use crate::numkit::{argmax2d, bicubic_resize, dot_f64};
use crate::tensor::{Grid, Tensor3};

/// Side of every response map for a 127/255 exemplar/search pair.
pub const RESPONSE_SIZE: usize = 17;
/// Upsampling factor applied before peak localization.
pub const UPSAMPLE: usize = 16;
/// `(17 - 1) * 16 + 1`: upsampled cells are exactly half a search pixel apart.
pub const UPSAMPLED_SIZE: usize = (RESPONSE_SIZE - 1) * UPSAMPLE + 1;
pub const DEFAULT_EPSILON: f64 = 1e-12;
pub const DEFAULT_WINDOW_INFLUENCE: f64 = 0.176;
/// Positive-label radius in search-region pixels.
pub const DEFAULT_LABEL_RADIUS: f64 = 16.0;

/// Where a response map came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Layer(Model, Layer),
    /// Per-model fusion of the three layer maps.
    Model(Model),
    Fused,
    Unlabeled,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Layer(m, l) => write!(f, "{m}_{l}"),
            Provenance::Model(m) => write!(f, "{m}"),
            Provenance::Fused => f.write_str("fused"),
            Provenance::Unlabeled => f.write_str("map"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    pub grid: Grid,
    pub provenance: Provenance,
}

impl ResponseMap {
    pub fn new(grid: Grid, provenance: Provenance) -> Self {
        Self { grid, provenance }
    }

    pub fn unlabeled(grid: Grid) -> Self {
        Self::new(grid, Provenance::Unlabeled)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn shape(&self) -> (usize, usize) {
        self.grid.shape()
    }

    pub fn max(&self) -> f64 {
        self.grid.max()
    }
}

/// Sliding dot product of exemplar features over search features
/// (stride 1, no normalization).
pub fn cross_correlate(exemplar: &Tensor3, search: &Tensor3) -> Result<ResponseMap> {
    let (hz, wz, c) = exemplar.shape();
    let (hx, wx, cx) = search.shape();
    if c != cx {
        return Err(shape_err(format!(
            "cross_correlate: exemplar has {c} channels, search has {cx}"
        )));
    }
    if hz > hx || wz > wx {
        return Err(shape_err(format!(
            "cross_correlate: exemplar {hz}x{wz} larger than search {hx}x{wx}"
        )));
    }
    let (oh, ow) = (hx - hz + 1, wx - wz + 1);
    let run = wz * c;
    let z = exemplar.data();
    let x = search.data();
    let mut out = Vec::with_capacity(oh * ow);
    for u in 0..oh {
        for v in 0..ow {
            let mut acc = 0.0f64;
            for i in 0..hz {
                let zrow = &z[i * run..(i + 1) * run];
                let start = ((u + i) * wx + v) * c;
                acc += dot_f64(zrow, &x[start..start + run]);
            }
            out.push(acc);
        }
    }
    Ok(ResponseMap::unlabeled(Grid::new(oh, ow, out)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionStrategy {
    /// `sum w_t r_t`
    HardWeight,
    /// `sum r_t / max(r_t)`
    SoftMean,
    /// `sum w_t r_t / max(r_t)`
    SoftWeight,
}

impl FusionStrategy {
    pub fn short_name(self) -> &'static str {
        match self {
            FusionStrategy::HardWeight => "hw",
            FusionStrategy::SoftMean => "sm",
            FusionStrategy::SoftWeight => "sw",
        }
    }
}

impl fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hw" | "hard" | "hard-weight" => Ok(FusionStrategy::HardWeight),
            "sm" | "soft-mean" => Ok(FusionStrategy::SoftMean),
            "sw" | "soft-weight" => Ok(FusionStrategy::SoftWeight),
            other => Err(Error::InvalidArgument(format!(
                "unknown fusion strategy {other:?} (expected hw, sm or sw)"
            ))),
        }
    }
}

/// Strategies and weights of the two-stage fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionPlan {
    pub s_strategy: FusionStrategy,
    pub a_strategy: FusionStrategy,
    pub cross_strategy: FusionStrategy,
    /// Weights of `S` c3, c4, c5.
    pub s_weights: [f64; 3],
    /// Weights of `A` c3, c4, c5.
    pub a_weights: [f64; 3],
    /// Weights of the fused `S` and `A` maps.
    pub model_weights: [f64; 2],
    pub epsilon: f64,
}

impl Default for FusionPlan {
    fn default() -> Self {
        Self {
            s_strategy: FusionStrategy::HardWeight,
            a_strategy: FusionStrategy::SoftWeight,
            cross_strategy: FusionStrategy::SoftWeight,
            s_weights: [0.1, 0.3, 0.7],
            a_weights: [0.1, 0.6, 0.3],
            model_weights: [0.3, 0.7],
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl FusionPlan {
    pub fn validate(&self) -> Result<()> {
        let all = self
            .s_weights
            .iter()
            .chain(&self.a_weights)
            .chain(&self.model_weights);
        if all.clone().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument("fusion weights must be finite and nonnegative".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument("fusion epsilon must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Rescales a map so its maximum is one.
///
/// A map whose maximum is at most `epsilon` contributes nothing, except
/// that an entirely negative map is first shifted to a zero minimum. Either
/// way the result is a positive rescaling of a shift, never a sign flip.
fn max_normalized(map: &Grid, epsilon: f64) -> Option<Grid> {
    let peak = map.max();
    if peak > epsilon {
        return Some(map.map(|v| v / peak));
    }
    if peak < 0.0 {
        let floor = map.min();
        let shifted = map.map(|v| v - floor);
        let top = shifted.max();
        if top > epsilon {
            return Some(shifted.map(|v| v / top));
        }
    }
    None
}

/// Combines equally shaped maps with one of the three strategies.
/// `weights` is ignored by soft mean.
pub fn fuse(
    maps: &[ResponseMap],
    weights: &[f64],
    strategy: FusionStrategy,
    epsilon: f64,
) -> Result<ResponseMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidArgument("fuse: no maps given".into()))?;
    let (rows, cols) = first.shape();
    if maps.iter().any(|m| m.shape() != (rows, cols)) {
        return Err(shape_err("fuse: maps differ in shape"));
    }
    if strategy != FusionStrategy::SoftMean && weights.len() != maps.len() {
        return Err(Error::InvalidArgument(format!(
            "fuse: {} weights for {} maps",
            weights.len(),
            maps.len()
        )));
    }
    let mut acc = Grid::zeros(rows, cols);
    for (t, m) in maps.iter().enumerate() {
        let (term, w) = match strategy {
            FusionStrategy::HardWeight => (Some(m.grid.clone()), weights[t]),
            FusionStrategy::SoftMean => (max_normalized(&m.grid, epsilon), 1.0),
            FusionStrategy::SoftWeight => (max_normalized(&m.grid, epsilon), weights[t]),
        };
        if let Some(term) = term {
            for (a, v) in acc.data_mut().iter_mut().zip(term.data()) {
                *a += w * v;
            }
        }
    }
    Ok(ResponseMap::new(acc, Provenance::Fused))
}

/// Fuses each model's three layer maps, then the two model maps.
pub fn hierarchical_fuse(
    s_maps: &[ResponseMap; 3],
    a_maps: &[ResponseMap; 3],
    plan: &FusionPlan,
) -> Result<ResponseMap> {
    let rs = fuse(s_maps, &plan.s_weights, plan.s_strategy, plan.epsilon)?
        .with_provenance(Provenance::Model(Model::S));
    let ra = fuse(a_maps, &plan.a_weights, plan.a_strategy, plan.epsilon)?
        .with_provenance(Provenance::Model(Model::A));
    fuse(&[rs, ra], &plan.model_weights, plan.cross_strategy, plan.epsilon)
}

/// Periodic-free Hann window of length `n`, peaking at the center.
fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Blends a sum-normalized copy of the map with a sum-normalized 2-D Hann
/// window: `(1 - influence) * normalized + influence * hann`.
pub fn cosine_window(map: &ResponseMap, influence: f64) -> Result<ResponseMap> {
    cosine_window_eps(map, influence, DEFAULT_EPSILON)
}

pub fn cosine_window_eps(map: &ResponseMap, influence: f64, epsilon: f64) -> Result<ResponseMap> {
    if !(0.0..=1.0).contains(&influence) {
        return Err(Error::InvalidArgument(format!(
            "window influence {influence} outside [0, 1]"
        )));
    }
    let (rows, cols) = map.shape();
    let floor = map.grid.min();
    let shifted = map.grid.map(|v| v - floor);
    let total = shifted.sum();
    let normalized = if total > epsilon {
        shifted.map(|v| v / total)
    } else {
        Grid::zeros(rows, cols)
    };
    let (hr, hc) = (hann(rows), hann(cols));
    let hsum: f64 = hr.iter().sum::<f64>() * hc.iter().sum::<f64>();
    let out = Grid::from_fn(rows, cols, |r, c| {
        (1.0 - influence) * normalized.get(r, c) + influence * hr[r] * hc[c] / hsum
    });
    Ok(ResponseMap::new(out, map.provenance))
}

/// Peak displacement from the search-region center, in search-region pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Displacement {
    pub dy: f64,
    pub dx: f64,
}

/// Upsamples the map by 16 (corner aligned) and converts the peak index to a
/// displacement. With a total stride of 8, each upsampled cell is half a
/// search pixel.
pub fn locate_peak(map: &ResponseMap) -> Result<Displacement> {
    let (rows, cols) = map.shape();
    let up_rows = (rows - 1) * UPSAMPLE + 1;
    let up_cols = (cols - 1) * UPSAMPLE + 1;
    let up = bicubic_resize(&map.grid, up_rows, up_cols)?;
    let (pr, pc) = argmax2d(&up);
    let cell = TOTAL_STRIDE as f64 / UPSAMPLE as f64;
    Ok(Displacement {
        dy: (pr as f64 - (up_rows - 1) as f64 / 2.0) * cell,
        dx: (pc as f64 - (up_cols - 1) as f64 / 2.0) * cell,
    })
}

/// Ground-truth labels: +1 for cells whose displacement from the center is
/// within `radius` search pixels, -1 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub grid: Grid,
    pub radius: f64,
}

pub fn make_label_map(radius: f64) -> Result<LabelMap> {
    make_label_map_sized(radius, RESPONSE_SIZE)
}

pub fn make_label_map_sized(radius: f64, size: usize) -> Result<LabelMap> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidArgument(format!("label radius {radius} must be >= 0")));
    }
    let center = (size as f64 - 1.0) / 2.0;
    let stride = TOTAL_STRIDE as f64;
    let grid = Grid::from_fn(size, size, |r, c| {
        let dy = (r as f64 - center) * stride;
        let dx = (c as f64 - center) * stride;
        if (dy * dy + dx * dx).sqrt() <= radius {
            1.0
        } else {
            -1.0
        }
    });
    Ok(LabelMap { grid, radius })
}

/// Mean of `log(1 + exp(-y * v))` over the map.
pub fn logistic_loss(map: &ResponseMap, labels: &LabelMap) -> Result<f64> {
    if map.shape() != labels.grid.shape() {
        return Err(shape_err(format!(
            "logistic_loss: map {:?} vs labels {:?}",
            map.shape(),
            labels.grid.shape()
        )));
    }
    let n = map.grid.data().len() as f64;
    let total: f64 = map
        .grid
        .data()
        .iter()
        .zip(labels.grid.data())
        .map(|(&v, &y)| {
            let x = y * v;
            (-x.abs()).exp().ln_1p() + (-x).max(0.0)
        })
        .sum();
    Ok(total / n)
}
