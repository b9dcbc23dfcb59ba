use std::cell::RefCell;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use mfst_core::eval::{self, format_boxes, format_curve, parse_boxes, reset_based_run, SequenceResult};
use mfst_core::synth::{Background, SyntheticSequence, SyntheticSpec, Texture};
use mfst_core::tracker::{ResettingTracker, TrackerState};
use mfst_core::weights::{expected_tensors, load_weights, save_weights, seeded_random_weights, WeightStore};
use mfst_core::{BoundingBox, SiameseNetwork, Tensor3};

use crate::config::{RunConfig, WeightSource};
use crate::error::{CliError, Context, Result};
use crate::frames::{frame_name, list_frames, load_frame};
use crate::ppm;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_boxes(path: &Path) -> Result<Vec<BoundingBox>> {
    parse_boxes(&read_text(path)?).context(|| path.display().to_string())
}

pub fn load_store(source: &WeightSource) -> Result<WeightStore> {
    match source {
        WeightSource::Seed(seed) => Ok(seeded_random_weights(*seed)),
        WeightSource::File(path) => {
            if !path.exists() {
                return Err(CliError::missing(path, "weights file not found"));
            }
            load_weights(path).context(|| path.display().to_string())
        }
    }
}

/// Two-pixel box outline; pixels outside the image are skipped.
fn draw_box(image: &mut Tensor3, b: &BoundingBox, color: [f32; 3]) {
    let (x0, y0) = b.corner();
    let (x0, y0) = (x0.round() as i64, y0.round() as i64);
    let (x1, y1) = (x0 + b.w.round() as i64 - 1, y0 + b.h.round() as i64 - 1);
    let (h, w) = (image.height() as i64, image.width() as i64);
    let mut put = |r: i64, c: i64| {
        if (0..h).contains(&r) && (0..w).contains(&c) {
            for (ch, v) in color.iter().enumerate() {
                image.set(r as usize, c as usize, ch, *v);
            }
        }
    };
    for t in 0..2 {
        for c in x0..=x1 {
            put(y0 + t, c);
            put(y1 - t, c);
        }
        for r in y0..=y1 {
            put(r, x0 + t);
            put(r, x1 - t);
        }
    }
}

pub struct TrackSummary {
    pub frames: usize,
    pub boxes: Vec<BoundingBox>,
}

pub fn track(cfg: &RunConfig) -> Result<TrackSummary> {
    let frames = list_frames(&cfg.frames)?;
    let gt = match &cfg.gt {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::missing(p, "ground-truth file not found"));
            }
            Some(read_boxes(p)?)
        }
        None => None,
    };
    let init = match (cfg.init, &gt) {
        (Some(b), _) => b,
        (None, Some(boxes)) => *boxes.first().ok_or_else(|| CliError::Core {
            context: cfg.gt.as_ref().expect("gt path").display().to_string(),
            source: mfst_core::Error::Sequence("ground-truth file is empty".into()),
        })?,
        (None, None) => return Err(CliError::Usage("no initial box".into())),
    };
    let network = Arc::new(SiameseNetwork::from_store(&load_store(&cfg.weights)?).context(|| "weights".into())?);
    for dir in [&cfg.dump_responses, &cfg.overlay].into_iter().flatten() {
        create_dir(dir)?;
    }

    let first = load_frame(&frames[0])?;
    let mut state = TrackerState::init(&first, init, network, cfg.tracker.clone())
        .context(|| format!("initializing on {}", frames[0].display()))?;
    let mut boxes = vec![init];
    let overlay = |index: usize, mut image: Tensor3, b: &BoundingBox| -> Result<()> {
        if let Some(dir) = &cfg.overlay {
            if let Some(g) = gt.as_ref().and_then(|g| g.get(index)) {
                draw_box(&mut image, g, [0.0, 1.0, 0.0]);
            }
            draw_box(&mut image, b, [1.0, 0.0, 0.0]);
            let path = dir.join(frame_name(index));
            ppm::write_frame(&path, &image).map_err(|e| CliError::io(path, e))?;
        }
        Ok(())
    };
    overlay(0, first, &init)?;
    for (index, path) in frames.iter().enumerate().skip(1) {
        let frame = load_frame(path)?;
        let report = state
            .track_frame(&frame)
            .context(|| format!("tracking {}", path.display()))?;
        if let Some(dir) = &cfg.dump_responses {
            let maps = report.responses.layers.iter().chain([&report.responses.fused]);
            for map in maps {
                let file = dir.join(format!("{index:05}_{}.txt", map.provenance));
                write_text(&file, &map.grid.to_text())?;
            }
        }
        overlay(index, frame, &report.bbox)?;
        boxes.push(report.bbox);
    }
    write_text(&cfg.out, &format_boxes(&boxes))?;
    Ok(TrackSummary {
        frames: frames.len(),
        boxes,
    })
}

/// Report text for a result/ground-truth pair.
pub fn eval_report(result: &SequenceResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "frames {}", result.len());
    let _ = writeln!(out, "precision@20 {:.6}", eval::precision_at(result, 20.0));
    let _ = writeln!(out, "success_auc {:.6}", eval::success_auc(result));
    let _ = writeln!(out, "mean_center_error {:.6}", result.mean_center_error());
    out
}

pub fn evaluate(result_path: &Path, gt_path: &Path, out_dir: Option<&Path>) -> Result<String> {
    for p in [result_path, gt_path] {
        if !p.exists() {
            return Err(CliError::missing(p, "file not found"));
        }
    }
    let predictions = read_boxes(result_path)?;
    let gt = read_boxes(gt_path)?;
    let result = SequenceResult::new(predictions, gt)
        .context(|| format!("{} vs {}", result_path.display(), gt_path.display()))?;
    let report = eval_report(&result);
    if let Some(dir) = out_dir {
        write_text(&dir.join("report.txt"), &report)?;
        write_text(&dir.join("precision.txt"), &format_curve(&eval::precision_curve(&result)))?;
        write_text(&dir.join("success.txt"), &format_curve(&eval::success_curve(&result)))?;
    }
    Ok(report)
}

pub fn reset_run(cfg: &RunConfig) -> Result<String> {
    let frames = list_frames(&cfg.frames)?;
    let gt_path = cfg
        .gt
        .as_ref()
        .ok_or_else(|| CliError::Usage("the reset protocol needs --gt".into()))?;
    if !gt_path.exists() {
        return Err(CliError::missing(gt_path, "ground-truth file not found"));
    }
    let gt = read_boxes(gt_path)?;
    if gt.len() != frames.len() {
        return Err(CliError::Core {
            context: gt_path.display().to_string(),
            source: mfst_core::Error::Sequence(format!("{} boxes for {} frames", gt.len(), frames.len())),
        });
    }
    let network = Arc::new(SiameseNetwork::from_store(&load_store(&cfg.weights)?).context(|| "weights".into())?);
    // Keep the typed frame error; the tracker only sees a core error.
    let frame_error = RefCell::new(None);
    let mut tracker = ResettingTracker::new(network, cfg.tracker.clone(), |k| {
        load_frame(&frames[k]).map_err(|e| {
            let message = e.to_string();
            *frame_error.borrow_mut() = Some(e);
            mfst_core::Error::Sequence(message)
        })
    });
    let outcome = reset_based_run(&mut tracker, &gt);
    drop(tracker);
    if let Some(e) = frame_error.into_inner() {
        return Err(e);
    }
    let outcome = outcome.context(|| "reset protocol".into())?;
    let mut out = String::new();
    let _ = writeln!(out, "frames {}", frames.len());
    let _ = writeln!(out, "accuracy {:.6}", outcome.accuracy);
    let _ = writeln!(out, "failures {}", outcome.failures);
    let _ = writeln!(out, "scored_frames {}", outcome.scored_frames);
    write_text(&cfg.out, &out)?;
    Ok(out)
}

pub fn synth(spec: SyntheticSpec, out_dir: &Path) -> Result<usize> {
    let seq = SyntheticSequence::new(spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let frames_dir = out_dir.join("frames");
    create_dir(&frames_dir)?;
    for k in 0..seq.len() {
        let path = frames_dir.join(frame_name(k));
        ppm::write_frame(&path, &seq.frame(k)).map_err(|e| CliError::io(path, e))?;
    }
    write_text(&out_dir.join("groundtruth.txt"), &format_boxes(seq.ground_truth()))?;
    Ok(seq.len())
}

pub fn parse_texture(s: &str) -> Option<Texture> {
    match s.split_once(':') {
        None if s == "solid" => Some(Texture::Solid),
        None if s == "checker" => Some(Texture::Checker { cell: 8 }),
        Some(("checker", cell)) => cell.parse().ok().filter(|&c| c > 0).map(|cell| Texture::Checker { cell }),
        _ => None,
    }
}

pub fn background(noise: Option<f64>) -> Background {
    match noise {
        Some(sigma) if sigma > 0.0 => Background::Noise { sigma },
        _ => Background::Uniform,
    }
}

pub fn inspect(path: &Path) -> Result<String> {
    let store = load_store(&WeightSource::File(path.to_path_buf()))?;
    let mut out = String::new();
    let _ = writeln!(out, "format MFSTW001 version {}", store.format_version());
    let _ = writeln!(out, "tensors {}", store.len());
    let order: Vec<String> = expected_tensors().into_iter().map(|(n, _)| n).collect();
    for name in &order {
        if let Some(t) = store.get(name) {
            let dims: Vec<String> = t.dims.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(out, "{name} {}", dims.join("x"));
        }
    }
    Ok(out)
}

pub fn export_weights(seed: u64, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_weights(&seeded_random_weights(seed), path).context(|| path.display().to_string())
}

pub(crate) fn print(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    let _ = out.flush();
}
