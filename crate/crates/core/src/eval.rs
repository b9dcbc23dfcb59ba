//! Benchmark metrics: center-error precision, IoU success AUC, and the
//! reset-based accuracy/robustness protocol. Also the plain-text box and
//! curve file formats.
//!
//! Frame 0 is the initialization frame and never counts toward precision
//! or success.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tracker::BoundingBox;

/// Frames skipped after a failure before the tracker is restarted.
pub const RESET_BURN_IN: usize = 5;
/// Center-error thresholds 0..=50 px.
pub const PRECISION_MAX_THRESHOLD: usize = 50;
/// IoU thresholds 0, 0.05, ..., 1.
pub const SUCCESS_STEPS: usize = 20;

pub fn center_error(pred: &BoundingBox, gt: &BoundingBox) -> f64 {
    (pred.cx - gt.cx).hypot(pred.cy - gt.cy)
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.corner();
    let (bx, by) = b.corner();
    let ix = ((ax + a.w).min(bx + b.w) - ax.max(bx)).max(0.0);
    let iy = ((ay + a.h).min(by + b.h) - ay.max(by)).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Predictions paired with ground truth for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceResult {
    predictions: Vec<BoundingBox>,
    ground_truth: Vec<BoundingBox>,
}

impl SequenceResult {
    /// Needs equal lengths, at least one frame after initialization, and a
    /// first prediction equal to the first ground-truth box.
    pub fn new(predictions: Vec<BoundingBox>, ground_truth: Vec<BoundingBox>) -> Result<Self> {
        if predictions.len() != ground_truth.len() {
            return Err(Error::Sequence(format!(
                "{} predictions for {} ground-truth frames",
                predictions.len(),
                ground_truth.len()
            )));
        }
        if predictions.len() < 2 {
            return Err(Error::Sequence("need at least two frames".into()));
        }
        let (p, g) = (&predictions[0], &ground_truth[0]);
        let tol = 1e-6 * (1.0 + g.w.abs().max(g.h.abs()).max(g.cx.abs()).max(g.cy.abs()));
        let close = [(p.cx, g.cx), (p.cy, g.cy), (p.w, g.w), (p.h, g.h)]
            .iter()
            .all(|(a, b)| (a - b).abs() <= tol);
        if !close {
            return Err(Error::Sequence(
                "first prediction must equal the first ground-truth box".into(),
            ));
        }
        Ok(Self {
            predictions,
            ground_truth,
        })
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn predictions(&self) -> &[BoundingBox] {
        &self.predictions
    }

    pub fn ground_truth(&self) -> &[BoundingBox] {
        &self.ground_truth
    }

    fn scored(&self) -> impl Iterator<Item = (&BoundingBox, &BoundingBox)> {
        self.predictions.iter().zip(&self.ground_truth).skip(1)
    }

    pub fn center_errors(&self) -> Vec<f64> {
        self.scored().map(|(p, g)| center_error(p, g)).collect()
    }

    pub fn overlaps(&self) -> Vec<f64> {
        self.scored().map(|(p, g)| iou(p, g)).collect()
    }

    pub fn mean_center_error(&self) -> f64 {
        let e = self.center_errors();
        e.iter().sum::<f64>() / e.len() as f64
    }
}

/// Fraction of scored frames whose center error is at most `threshold`.
pub fn precision_at(result: &SequenceResult, threshold: f64) -> f64 {
    let errors = result.center_errors();
    errors.iter().filter(|&&e| e <= threshold).count() as f64 / errors.len() as f64
}

/// `(threshold, precision)` for thresholds 0..=50 px.
pub fn precision_curve(result: &SequenceResult) -> Vec<(f64, f64)> {
    let errors = result.center_errors();
    let n = errors.len() as f64;
    (0..=PRECISION_MAX_THRESHOLD)
        .map(|t| {
            let t = t as f64;
            (t, errors.iter().filter(|&&e| e <= t).count() as f64 / n)
        })
        .collect()
}

/// `(threshold, success)` for 21 IoU thresholds, success counting IoU
/// strictly above the threshold.
pub fn success_curve(result: &SequenceResult) -> Vec<(f64, f64)> {
    let overlaps = result.overlaps();
    let n = overlaps.len() as f64;
    (0..=SUCCESS_STEPS)
        .map(|i| {
            let t = i as f64 / SUCCESS_STEPS as f64;
            (t, overlaps.iter().filter(|&&o| o > t).count() as f64 / n)
        })
        .collect()
}

/// Mean of the success curve.
pub fn success_auc(result: &SequenceResult) -> f64 {
    let curve = success_curve(result);
    curve.iter().map(|(_, v)| v).sum::<f64>() / curve.len() as f64
}

/// A tracker the reset protocol can drive. Frames are addressed by index;
/// the implementation owns access to the images.
pub trait ResettableTracker {
    /// (Re)initialize on `frame` with the given box.
    fn start(&mut self, frame: usize, bbox: BoundingBox) -> Result<()>;
    /// Predict the box on `frame`, which follows the previous call.
    fn step(&mut self, frame: usize) -> Result<BoundingBox>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResetOutcome {
    /// Mean IoU over tracked frames that were not failures.
    /// Zero when no such frame exists.
    pub accuracy: f64,
    /// Number of failures (frames with zero overlap).
    pub failures: usize,
    /// Frames that entered the accuracy mean.
    pub scored_frames: usize,
    /// Per-frame prediction; `None` for initialization and skipped frames.
    pub predictions: Vec<Option<BoundingBox>>,
}

/// Runs `tracker` over `ground_truth.len()` frames. A prediction with no
/// overlap is a failure; the tracker restarts from ground truth
/// `RESET_BURN_IN` frames later. Initialization frames and the skipped
/// frames in between do not count toward accuracy.
pub fn reset_based_run<T: ResettableTracker + ?Sized>(
    tracker: &mut T,
    ground_truth: &[BoundingBox],
) -> Result<ResetOutcome> {
    let n = ground_truth.len();
    if n == 0 {
        return Err(Error::Sequence("empty ground truth".into()));
    }
    let mut predictions = vec![None; n];
    let mut overlaps = Vec::new();
    let mut failures = 0;
    tracker.start(0, ground_truth[0])?;
    let mut t = 1;
    while t < n {
        let pred = tracker.step(t)?;
        predictions[t] = Some(pred);
        let o = iou(&pred, &ground_truth[t]);
        if o > 0.0 {
            overlaps.push(o);
            t += 1;
        } else {
            failures += 1;
            let restart = t + RESET_BURN_IN;
            if restart < n {
                tracker.start(restart, ground_truth[restart])?;
            }
            t = restart + 1;
        }
    }
    let accuracy = if overlaps.is_empty() {
        0.0
    } else {
        overlaps.iter().sum::<f64>() / overlaps.len() as f64
    };
    Ok(ResetOutcome {
        accuracy,
        failures,
        scored_frames: overlaps.len(),
        predictions,
    })
}

/// Parses one box per line as `x,y,w,h` (top-left corner, 0-based).
/// Commas and whitespace both separate fields. Trailing blank lines are
/// ignored.
pub fn parse_boxes(text: &str) -> Result<Vec<BoundingBox>> {
    let mut lines: Vec<&str> = text.lines().collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            if fields.len() != 4 {
                return Err(parse_err(format!("expected 4 fields, found {}", fields.len())));
            }
            let mut v = [0.0f64; 4];
            for (slot, f) in v.iter_mut().zip(&fields) {
                *slot = f
                    .parse()
                    .map_err(|_| parse_err(format!("not a number: {f:?}")))?;
            }
            BoundingBox::from_corner(v[0], v[1], v[2], v[3]).map_err(|e| parse_err(e.to_string()))
        })
        .collect()
}

pub fn format_box(b: &BoundingBox) -> String {
    let (x, y) = b.corner();
    format!("{x},{y},{},{}", b.w, b.h)
}

pub fn format_boxes(boxes: &[BoundingBox]) -> String {
    let mut out = String::new();
    for b in boxes {
        out.push_str(&format_box(b));
        out.push('\n');
    }
    out
}

/// Two-column text: threshold, value.
pub fn format_curve(curve: &[(f64, f64)]) -> String {
    let mut out = String::new();
    for (t, v) in curve {
        writeln!(out, "{t:.2} {v:.6}").expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(cx, cy, w, h).unwrap()
    }

    fn result_with_offsets(offsets: &[(f64, f64)]) -> SequenceResult {
        let gt: Vec<BoundingBox> = (0..=offsets.len()).map(|i| bx(100.0 + i as f64, 80.0, 20.0, 30.0)).collect();
        let mut pred = vec![gt[0]];
        for (i, (dx, dy)) in offsets.iter().enumerate() {
            let g = gt[i + 1];
            pred.push(bx(g.cx + dx, g.cy + dy, g.w, g.h));
        }
        SequenceResult::new(pred, gt).unwrap()
    }

    #[test]
    fn center_error_examples() {
        let a = bx(0.0, 0.0, 5.0, 5.0);
        let b = bx(3.0, 4.0, 1.0, 9.0);
        assert_eq!(center_error(&a, &a), 0.0);
        assert_eq!(center_error(&a, &b), 5.0);
        assert_eq!(center_error(&b, &a), 5.0);
    }

    #[test]
    fn iou_examples() {
        let a = bx(1.0, 1.0, 2.0, 2.0);
        let b = bx(2.0, 2.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(iou(&a, &bx(10.0, 10.0, 2.0, 2.0)), 0.0);
        // Touching edges do not overlap.
        assert_eq!(iou(&a, &bx(3.0, 1.0, 2.0, 2.0)), 0.0);
    }

    #[test]
    fn shrinking_inner_box_reduces_iou() {
        let outer = bx(50.0, 50.0, 40.0, 40.0);
        let inner = bx(50.0, 50.0, 20.0, 20.0);
        let smaller = bx(50.0, 50.0, 10.0, 10.0);
        assert!(iou(&outer, &smaller) < iou(&outer, &inner));
    }

    #[test]
    fn precision_examples() {
        let exact = result_with_offsets(&[(0.0, 0.0); 10]);
        assert_eq!(precision_at(&exact, 20.0), 1.0);

        let off25 = result_with_offsets(&[(15.0, 20.0); 8]);
        assert_eq!(precision_at(&off25, 20.0), 0.0);
        assert_eq!(precision_at(&off25, 25.0), 1.0);

        let mut half = vec![(0.0, 0.0); 5];
        half.extend(vec![(100.0, 0.0); 5]);
        assert_eq!(precision_at(&result_with_offsets(&half), 20.0), 0.5);
    }

    #[test]
    fn frame_zero_is_excluded() {
        let r = result_with_offsets(&[(100.0, 0.0)]);
        assert_eq!(precision_at(&r, 20.0), 0.0);
        assert_eq!(r.center_errors().len(), 1);
    }

    #[test]
    fn success_examples() {
        let exact = result_with_offsets(&[(0.0, 0.0); 4]);
        assert!((success_auc(&exact) - 20.0 / 21.0).abs() < 1e-15);
        let far = result_with_offsets(&[(500.0, 0.0); 4]);
        assert_eq!(success_auc(&far), 0.0);

        // IoU exactly 0.5: same width, half the height overlapping.
        let gt = vec![bx(0.0, 0.0, 10.0, 10.0); 3];
        let pred = vec![gt[0], bx(0.0, 0.0, 10.0, 5.0), bx(0.0, 0.0, 5.0, 10.0)];
        let r = SequenceResult::new(pred, gt).unwrap();
        assert_eq!(r.overlaps(), vec![0.5, 0.5]);
        assert!((success_auc(&r) - 10.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn curve_shapes() {
        let r = result_with_offsets(&[(3.0, 4.0); 3]);
        let p = precision_curve(&r);
        assert_eq!(p.len(), 51);
        assert_eq!(p[4].1, 0.0);
        assert_eq!(p[5].1, 1.0);
        let s = success_curve(&r);
        assert_eq!(s.len(), 21);
        assert_eq!(s[20].0, 1.0);
        assert_eq!(s[10].0, 0.5);
    }

    #[test]
    fn sequence_result_validation() {
        let g = vec![bx(1.0, 1.0, 2.0, 2.0); 3];
        assert!(SequenceResult::new(g[..2].to_vec(), g.clone()).is_err());
        assert!(SequenceResult::new(g[..1].to_vec(), g[..1].to_vec()).is_err());
        let mut p = g.clone();
        p[0] = bx(5.0, 1.0, 2.0, 2.0);
        assert!(SequenceResult::new(p, g).is_err());
    }

    struct Scripted {
        // Per frame: prediction the tracker will return.
        script: Vec<BoundingBox>,
        starts: Vec<usize>,
        steps: Vec<usize>,
    }

    impl ResettableTracker for Scripted {
        fn start(&mut self, frame: usize, _bbox: BoundingBox) -> Result<()> {
            self.starts.push(frame);
            Ok(())
        }

        fn step(&mut self, frame: usize) -> Result<BoundingBox> {
            self.steps.push(frame);
            Ok(self.script[frame])
        }
    }

    #[test]
    fn reset_perfect_tracker() {
        let gt: Vec<BoundingBox> = (0..12).map(|i| bx(20.0 + i as f64, 20.0, 8.0, 8.0)).collect();
        let mut t = Scripted { script: gt.clone(), starts: vec![], steps: vec![] };
        let out = reset_based_run(&mut t, &gt).unwrap();
        assert_eq!(out.failures, 0);
        assert_eq!(out.accuracy, 1.0);
        assert_eq!(out.scored_frames, 11);
        assert_eq!(t.starts, vec![0]);
    }

    #[test]
    fn reset_stuck_tracker_fails() {
        let gt: Vec<BoundingBox> = (0..30).map(|i| bx(20.0 + 3.0 * i as f64, 20.0, 8.0, 8.0)).collect();
        let mut t = Scripted { script: vec![gt[0]; 30], starts: vec![], steps: vec![] };
        let out = reset_based_run(&mut t, &gt).unwrap();
        assert!(out.failures >= 1);
    }

    #[test]
    fn reset_scripted_accounting() {
        // 20 frames. Frame 3 fails -> skip 4..7, restart at 8, resume at 9.
        // Frame 12 fails -> restart at 17, resume at 18.
        // Tracked, non-failing frames: 1, 2, 9, 10, 11, 18, 19 (7 frames),
        // with IoU 1 except frames 2 and 10 at IoU 1/7.
        let gt: Vec<BoundingBox> = (0..20).map(|_| bx(1.0, 1.0, 2.0, 2.0)).collect();
        let mut script = gt.clone();
        script[2] = bx(2.0, 2.0, 2.0, 2.0);
        script[10] = bx(2.0, 2.0, 2.0, 2.0);
        script[3] = bx(50.0, 50.0, 2.0, 2.0);
        script[12] = bx(50.0, 50.0, 2.0, 2.0);
        let mut t = Scripted { script, starts: vec![], steps: vec![] };
        let out = reset_based_run(&mut t, &gt).unwrap();
        assert_eq!(out.failures, 2);
        assert_eq!(t.starts, vec![0, 8, 17]);
        assert_eq!(t.steps, vec![1, 2, 3, 9, 10, 11, 12, 18, 19]);
        assert_eq!(out.scored_frames, 7);
        let expect = (5.0 + 2.0 / 7.0) / 7.0;
        assert!((out.accuracy - expect).abs() < 1e-12);
        assert!(out.predictions[5].is_none() && out.predictions[8].is_none());
    }

    #[test]
    fn box_file_round_trip() {
        let text = "10,20,30,40\n1.5 2.5\t3 4\n 0, 0, 1, 1 \n\n";
        let boxes = parse_boxes(text).unwrap();
        assert_eq!(boxes.len(), 3);
        assert_eq!(boxes[0], BoundingBox::from_corner(10.0, 20.0, 30.0, 40.0).unwrap());
        assert_eq!(boxes[1].corner(), (1.5, 2.5));
        let again = parse_boxes(&format_boxes(&boxes)).unwrap();
        assert_eq!(again, boxes);
    }

    #[test]
    fn box_file_errors() {
        assert!(matches!(parse_boxes("1,2,3\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_boxes("1,2,3,4\n1,2,x,4\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_boxes("1,2,3,4\n\n1,2,3,4\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_boxes("1,2,0,4\n"), Err(Error::Parse { line: 1, .. })));
        assert_eq!(parse_boxes("").unwrap().len(), 0);
    }

    proptest! {
        #[test]
        fn prop_iou_range_and_symmetry(a in (-50.0f64..50.0, -50.0f64..50.0, 0.1f64..40.0, 0.1f64..40.0),
                                       b in (-50.0f64..50.0, -50.0f64..50.0, 0.1f64..40.0, 0.1f64..40.0)) {
            let a = bx(a.0, a.1, a.2, a.3);
            let b = bx(b.0, b.1, b.2, b.3);
            let x = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert_eq!(x, iou(&b, &a));
        }

        #[test]
        fn prop_curves_monotone(offsets in proptest::collection::vec((-60.0f64..60.0, -60.0f64..60.0), 1..30)) {
            let r = result_with_offsets(&offsets);
            let p = precision_curve(&r);
            prop_assert!(p.windows(2).all(|w| w[0].1 <= w[1].1));
            let s = success_curve(&r);
            prop_assert!(s.windows(2).all(|w| w[0].1 >= w[1].1));
            prop_assert_eq!(success_auc(&r), success_auc(&r));
        }
    }
}
