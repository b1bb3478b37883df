use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::{iou, BBox};
use crate::scalar::Real;

/// A predicted box on one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection<T> {
    pub image_id: String,
    pub bbox: BBox<T>,
    pub confidence: T,
}

impl<T: Real> Detection<T> {
    pub fn new(image_id: &str, bbox: BBox<T>, confidence: T) -> Result<Self, EvalError> {
        if !(confidence >= T::zero() && confidence <= T::one()) {
            return Err(EvalError::InvalidDetection(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        if !bbox.is_valid() {
            return Err(EvalError::InvalidDetection("invalid box".into()));
        }
        Ok(Self {
            image_id: image_id.to_string(),
            bbox,
            confidence,
        })
    }
}

/// A detection reduced to what AP needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredDetection<T> {
    pub confidence: T,
    pub true_positive: bool,
}

fn by_confidence_desc<T: Real>(a: T, b: T) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Total order on boxes used to break exact IoU ties between ground truths,
/// so matching does not depend on ground-truth input order.
fn box_key_cmp<T: Real>(a: &BBox<T>, b: &BBox<T>) -> Ordering {
    [a.cx, a.cy, a.w, a.h]
        .iter()
        .zip([b.cx, b.cy, b.w, b.h].iter())
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Greedy matching for one image. Detections are visited in descending
/// confidence (stable on ties); each takes its best-IoU unmatched ground
/// truth of the same category when that IoU reaches `iou_threshold`.
/// Returns true-positive flags in the detections' input order.
pub fn match_detections<T: Real>(
    ground_truth: &[BBox<T>],
    detections: &[Detection<T>],
    iou_threshold: T,
) -> Vec<bool> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&i, &j| by_confidence_desc(detections[i].confidence, detections[j].confidence));

    let mut matched = vec![false; ground_truth.len()];
    let mut flags = vec![false; detections.len()];
    for di in order {
        let det = &detections[di].bbox;
        let mut best: Option<(usize, T)> = None;
        for (gi, gt) in ground_truth.iter().enumerate() {
            if matched[gi] || gt.category_id != det.category_id {
                continue;
            }
            let v = iou(det, gt);
            best = match best {
                None => Some((gi, v)),
                Some((bi, bv)) => {
                    let better = v > bv
                        || (v == bv && box_key_cmp(gt, &ground_truth[bi]) == Ordering::Less);
                    if better {
                        Some((gi, v))
                    } else {
                        Some((bi, bv))
                    }
                }
            };
        }
        if let Some((gi, v)) = best {
            if v >= iou_threshold {
                matched[gi] = true;
                flags[di] = true;
            }
        }
    }
    flags
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint<T> {
    pub confidence: T,
    pub precision: T,
    pub recall: T,
}

/// Precision/recall after each detection in descending-confidence order.
pub fn pr_curve<T: Real>(scored: &[ScoredDetection<T>], total_gt: usize) -> Vec<PrPoint<T>> {
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| by_confidence_desc(a.confidence, b.confidence));
    let total = T::from_count(total_gt.max(1));
    let mut tp = 0usize;
    sorted
        .iter()
        .enumerate()
        .map(|(k, s)| {
            tp += usize::from(s.true_positive);
            PrPoint {
                confidence: s.confidence,
                precision: T::from_count(tp) / T::from_count(k + 1),
                recall: T::from_count(tp) / total,
            }
        })
        .collect()
}

/// All-points interpolated average precision: the area under the precision
/// envelope (precision at each recall replaced by the best precision at any
/// recall at least as large).
pub fn average_precision_50<T: Real>(scored: &[ScoredDetection<T>], total_gt: usize) -> Result<T, EvalError> {
    if total_gt == 0 {
        return Err(EvalError::ZeroGroundTruth);
    }
    let curve = pr_curve(scored, total_gt);
    let mut envelope: Vec<T> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = T::zero();
    let mut prev_recall = T::zero();
    for (p, env) in curve.iter().zip(&envelope) {
        ap += (p.recall - prev_recall) * *env;
        prev_recall = p.recall;
    }
    Ok(ap.min(T::one()))
}

/// Precision and recall over detections with confidence `>= cutoff`.
/// With nothing above the cutoff the result is `(1, 0)`.
pub fn precision_recall_at<T: Real>(scored: &[ScoredDetection<T>], cutoff: T, total_gt: usize) -> (T, T) {
    let (mut tp, mut n) = (0usize, 0usize);
    for s in scored.iter().filter(|s| s.confidence >= cutoff) {
        n += 1;
        tp += usize::from(s.true_positive);
    }
    if n == 0 {
        return (T::one(), T::zero());
    }
    let recall = if total_gt == 0 {
        T::zero()
    } else {
        T::from_count(tp) / T::from_count(total_gt)
    };
    (T::from_count(tp) / T::from_count(n), recall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport<T> {
    /// Mean over categories that have ground truth.
    pub map50: T,
    pub per_category: BTreeMap<u32, T>,
    pub precision: T,
    pub recall: T,
    pub confidence_cutoff: T,
    pub ground_truth: usize,
    pub detections: usize,
}

/// Matches every image, then reports mAP50 plus precision/recall at
/// `confidence_cutoff`. Images are keyed by id; detections on images with no
/// ground truth count as false positives.
pub fn evaluate_map<T: Real>(
    ground_truth: &BTreeMap<String, Vec<BBox<T>>>,
    detections: &[Detection<T>],
    iou_threshold: T,
    confidence_cutoff: T,
) -> Result<MapReport<T>, EvalError> {
    let mut per_image: BTreeMap<&str, Vec<Detection<T>>> = BTreeMap::new();
    for d in detections {
        per_image.entry(d.image_id.as_str()).or_default().push(d.clone());
    }
    let empty = Vec::new();
    let mut scored: BTreeMap<u32, Vec<ScoredDetection<T>>> = BTreeMap::new();
    for (image, dets) in &per_image {
        let gts = ground_truth.get(*image).unwrap_or(&empty);
        let flags = match_detections(gts, dets, iou_threshold);
        for (d, tp) in dets.iter().zip(flags) {
            scored.entry(d.bbox.category_id).or_default().push(ScoredDetection {
                confidence: d.confidence,
                true_positive: tp,
            });
        }
    }

    let mut gt_per_cat: BTreeMap<u32, usize> = BTreeMap::new();
    for b in ground_truth.values().flatten() {
        *gt_per_cat.entry(b.category_id).or_default() += 1;
    }
    let total_gt: usize = gt_per_cat.values().sum();
    if total_gt == 0 {
        return Err(EvalError::ZeroGroundTruth);
    }
    let categories: BTreeSet<u32> = gt_per_cat.keys().copied().collect();
    let mut per_category = BTreeMap::new();
    for cat in &categories {
        let s = scored.get(cat).map(Vec::as_slice).unwrap_or(&[]);
        per_category.insert(*cat, average_precision_50(s, gt_per_cat[cat])?);
    }
    let map50 = per_category.values().copied().sum::<T>() / T::from_count(per_category.len());

    let all: Vec<ScoredDetection<T>> = scored.into_values().flatten().collect();
    let (precision, recall) = precision_recall_at(&all, confidence_cutoff, total_gt);
    Ok(MapReport {
        map50,
        per_category,
        precision,
        recall,
        confidence_cutoff,
        ground_truth: total_gt,
        detections: detections.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(cx: f64, cy: f64, w: f64, h: f64) -> BBox<f64> {
        BBox::new(0, cx, cy, w, h).unwrap()
    }

    fn det(b: BBox<f64>, c: f64) -> Detection<f64> {
        Detection::new("img", b, c).unwrap()
    }

    fn sd(confidence: f64, true_positive: bool) -> ScoredDetection<f64> {
        ScoredDetection {
            confidence,
            true_positive,
        }
    }

    #[test]
    fn single_match_and_double_detection() {
        let gt = [bb(0.5, 0.5, 0.2, 0.2)];
        assert_eq!(match_detections(&gt, &[det(gt[0], 0.9)], 0.5), vec![true]);
        assert_eq!(
            match_detections(&gt, &[det(gt[0], 0.6), det(gt[0], 0.9)], 0.5),
            vec![false, true]
        );
        // equal confidence: input order wins
        assert_eq!(
            match_detections(&gt, &[det(gt[0], 0.7), det(gt[0], 0.7)], 0.5),
            vec![true, false]
        );
    }

    #[test]
    fn category_must_agree() {
        let gt = [BBox::new(1, 0.5, 0.5, 0.2, 0.2).unwrap()];
        assert_eq!(match_detections(&gt, &[det(bb(0.5, 0.5, 0.2, 0.2), 0.9)], 0.5), vec![false]);
    }

    #[test]
    fn crossed_overlaps_follow_greedy_order() {
        // d1 (0.9) overlaps g1 best but also g2; d2 (0.8) overlaps g1 only.
        let g1 = bb(0.30, 0.5, 0.2, 0.2);
        let g2 = bb(0.36, 0.5, 0.2, 0.2);
        let d1 = det(bb(0.32, 0.5, 0.2, 0.2), 0.9);
        let d2 = det(bb(0.30, 0.5, 0.2, 0.2), 0.8);
        assert_eq!(match_detections(&[g1, g2], &[d1.clone(), d2.clone()], 0.5), vec![true, true]);
        assert!(iou(&d1.bbox, &g1) > iou(&d1.bbox, &g2));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision_50(&[sd(0.9, true)], 1).unwrap(), 1.0);
        assert_eq!(average_precision_50(&[sd(0.9, false)], 1).unwrap(), 0.0);
        let ap = average_precision_50(&[sd(0.9, true), sd(0.8, false), sd(0.7, true)], 2).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(average_precision_50::<f64>(&[], 1).unwrap(), 0.0);
        assert_eq!(average_precision_50::<f64>(&[], 0), Err(EvalError::ZeroGroundTruth));
    }

    #[test]
    fn operating_point_examples() {
        let all_tp = [sd(0.9, true), sd(0.8, true)];
        assert_eq!(precision_recall_at(&all_tp, 0.5, 4).0, 1.0);
        assert_eq!(precision_recall_at(&all_tp, 0.95, 4), (1.0, 0.0));
        let mixed = [sd(0.9, true), sd(0.8, true), sd(0.7, false), sd(0.6, true), sd(0.1, true)];
        assert_eq!(precision_recall_at(&mixed, 0.5, 6), (0.75, 0.5));
    }

    #[test]
    fn map_over_images() {
        let mut gt = BTreeMap::new();
        gt.insert("a".to_string(), vec![bb(0.2, 0.2, 0.1, 0.1)]);
        gt.insert("b".to_string(), vec![bb(0.7, 0.7, 0.1, 0.1)]);
        let dets = vec![
            Detection::new("a", bb(0.2, 0.2, 0.1, 0.1), 0.9).unwrap(),
            Detection::new("b", bb(0.2, 0.2, 0.1, 0.1), 0.8).unwrap(),
            Detection::new("b", bb(0.7, 0.7, 0.1, 0.1), 0.7).unwrap(),
            Detection::new("zz", bb(0.7, 0.7, 0.1, 0.1), 0.95).unwrap(),
        ];
        let r = evaluate_map(&gt, &dets, 0.5, 0.0).unwrap();
        // order: FP(.95) TP(.9) FP(.8) TP(.7) -> points (0,0) (.5,.5) (.5,1/3) (1,.5)
        assert!((r.map50 - (0.5 * 0.5 + 0.5 * 0.5)).abs() < 1e-12);
        assert_eq!((r.precision, r.recall), (0.5, 1.0));
        assert!(evaluate_map::<f64>(&BTreeMap::new(), &dets, 0.5, 0.0).is_err());
    }

    fn arb_scored() -> impl Strategy<Value = Vec<ScoredDetection<f64>>> {
        prop::collection::vec((0.0f64..1.0, any::<bool>()), 0..30)
            .prop_map(|v| v.into_iter().map(|(c, t)| sd(c, t)).collect())
    }

    proptest! {
        #[test]
        fn ap_bounded_and_order_preserving(scored in arb_scored(), extra_gt in 0usize..5) {
            let tps = scored.iter().filter(|s| s.true_positive).count();
            let total = tps + extra_gt + 1;
            let ap = average_precision_50(&scored, total).unwrap();
            prop_assert!((0.0..=1.0).contains(&ap));
            let squared: Vec<_> = scored.iter().map(|s| sd(s.confidence * s.confidence, s.true_positive)).collect();
            prop_assert!((average_precision_50(&squared, total).unwrap() - ap).abs() < 1e-12);
            let mut with_fp = scored.clone();
            with_fp.push(sd(-1.0, false));
            prop_assert!(average_precision_50(&with_fp, total).unwrap() <= ap + 1e-12);
        }

        #[test]
        fn adding_tp_never_lowers_recall(scored in arb_scored(), c in 0.0f64..1.0, cutoff in 0.0f64..1.0) {
            let total = scored.len() + 2;
            let (_, r0) = precision_recall_at(&scored, cutoff, total);
            let mut more = scored.clone();
            more.push(sd(c, true));
            let (_, r1) = precision_recall_at(&more, cutoff, total);
            prop_assert!(r1 >= r0);
        }

        #[test]
        fn matching_ignores_ground_truth_order(
            gts in prop::collection::vec((0.2f64..0.8, 0.2f64..0.8, 0.05f64..0.3, 0.05f64..0.3), 0..6),
            dets in prop::collection::vec((0.2f64..0.8, 0.2f64..0.8, 0.05f64..0.3, 0.05f64..0.3, 0.0f64..1.0), 0..8),
            rot in 0usize..6,
        ) {
            let gts: Vec<_> = gts.into_iter().map(|(x, y, w, h)| bb(x, y, w, h)).collect();
            let dets: Vec<_> = dets.into_iter().map(|(x, y, w, h, c)| det(bb(x, y, w, h), c)).collect();
            let base = match_detections(&gts, &dets, 0.3);
            let mut perm = gts.clone();
            if !perm.is_empty() { let k = rot % perm.len(); perm.rotate_left(k); }
            perm.reverse();
            prop_assert_eq!(match_detections(&perm, &dets, 0.3), base.clone());
            prop_assert!(base.iter().filter(|f| **f).count() <= gts.len());
        }
    }
}
