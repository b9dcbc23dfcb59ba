//! Run configuration for `track`: a flat `key = value` file whose entries
//! are overridden by command-line flags.

use std::path::{Path, PathBuf};

use mfst_core::tracker::TrackerConfig;
use mfst_core::{BoundingBox, FusionPlan, FusionStrategy};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum WeightSource {
    File(PathBuf),
    Seed(u64),
}

/// Every setting as optionally given by one source (file or flags).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigValues {
    pub weights: Option<PathBuf>,
    pub seed: Option<u64>,
    pub s_fusion: Option<FusionStrategy>,
    pub a_fusion: Option<FusionStrategy>,
    pub cross_fusion: Option<FusionStrategy>,
    pub gamma: Option<f64>,
    pub window: Option<bool>,
    pub scales: Option<Vec<f64>>,
    pub frames: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub init: Option<BoundingBox>,
    pub out: Option<PathBuf>,
    pub dump_responses: Option<PathBuf>,
    pub overlay: Option<PathBuf>,
    pub parallel: Option<bool>,
}

fn bad(line: usize, key: &str, value: &str) -> CliError {
    CliError::Usage(format!("config line {line}: bad value {value:?} for {key}"))
}

pub fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

pub fn parse_scales(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(|p| p.trim().parse().ok()).collect()
}

/// `x,y,w,h` with the top-left corner.
pub fn parse_box(s: &str) -> Option<BoundingBox> {
    let boxes = mfst_core::eval::parse_boxes(s).ok()?;
    match boxes.as_slice() {
        [b] => Some(*b),
        _ => None,
    }
}

impl ConfigValues {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut v = ConfigValues::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {line_no}: expected key = value")))?;
            let (key, value) = (key.trim(), value.trim());
            let path = || base.join(value);
            let strategy = || value.parse::<FusionStrategy>().map_err(|_| bad(line_no, key, value));
            match key {
                "weights" => v.weights = Some(path()),
                "seed" => v.seed = Some(value.parse().map_err(|_| bad(line_no, key, value))?),
                "s_fusion" => v.s_fusion = Some(strategy()?),
                "a_fusion" => v.a_fusion = Some(strategy()?),
                "cross_fusion" => v.cross_fusion = Some(strategy()?),
                "gamma" => v.gamma = Some(value.parse().map_err(|_| bad(line_no, key, value))?),
                "window" => v.window = Some(parse_bool(value).ok_or_else(|| bad(line_no, key, value))?),
                "scales" => v.scales = Some(parse_scales(value).ok_or_else(|| bad(line_no, key, value))?),
                "frames" => v.frames = Some(path()),
                "gt" => v.gt = Some(path()),
                "init" => v.init = Some(parse_box(value).ok_or_else(|| bad(line_no, key, value))?),
                "out" => v.out = Some(path()),
                "dump_responses" => v.dump_responses = Some(path()),
                "overlay" => v.overlay = Some(path()),
                "parallel" => v.parallel = Some(parse_bool(value).ok_or_else(|| bad(line_no, key, value))?),
                other => return Err(CliError::Usage(format!("config line {line_no}: unknown key {other:?}"))),
            }
        }
        Ok(v)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Values set in `over` replace those in `self`. A weights path and a
    /// seed count as one setting, so either in `over` clears both here.
    pub fn overridden_by(mut self, over: ConfigValues) -> Self {
        if over.weights.is_some() || over.seed.is_some() {
            self.weights = over.weights;
            self.seed = over.seed;
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(s_fusion, a_fusion, cross_fusion, gamma, window, scales, frames, gt, init, out, dump_responses, overlay, parallel);
        self
    }
}

/// Fully resolved `track` settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub weights: WeightSource,
    pub tracker: TrackerConfig,
    pub frames: PathBuf,
    pub gt: Option<PathBuf>,
    pub init: Option<BoundingBox>,
    pub out: PathBuf,
    pub dump_responses: Option<PathBuf>,
    pub overlay: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(v: ConfigValues) -> Result<Self> {
        let weights = match (v.weights, v.seed) {
            (Some(p), None) => WeightSource::File(p),
            (None, Some(s)) => WeightSource::Seed(s),
            (Some(_), Some(_)) => return Err(CliError::Usage("give either a weights file or a seed, not both".into())),
            (None, None) => return Err(CliError::Usage("a weights file or a seed is required".into())),
        };
        let frames = v.frames.ok_or_else(|| CliError::Usage("--frames is required".into()))?;
        let out = v.out.ok_or_else(|| CliError::Usage("--out is required".into()))?;
        if v.gt.is_none() && v.init.is_none() {
            return Err(CliError::Usage("give --gt or --init for the first box".into()));
        }
        let defaults = TrackerConfig::default();
        let base_plan = FusionPlan::default();
        let fusion = FusionPlan {
            s_strategy: v.s_fusion.unwrap_or(base_plan.s_strategy),
            a_strategy: v.a_fusion.unwrap_or(base_plan.a_strategy),
            cross_strategy: v.cross_fusion.unwrap_or(base_plan.cross_strategy),
            ..base_plan
        };
        let window_influence = match v.window {
            Some(false) => None,
            _ => Some(v.gamma.unwrap_or(defaults.window_influence.unwrap_or(0.0))),
        };
        let tracker = TrackerConfig {
            scales: v.scales.unwrap_or(defaults.scales),
            fusion,
            window_influence,
            parallel_scales: v.parallel.unwrap_or(false),
            ..defaults
        };
        tracker
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(RunConfig {
            weights,
            tracker,
            frames,
            gt: v.gt,
            init: v.init,
            out,
            dump_responses: v.dump_responses,
            overlay: v.overlay,
        })
    }
}
