//! Quantitative evaluation: voxel RMSE, box IoU, average precision, and
//! reproducible dataset splits.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::raster::{BBox, DensityVolume};
use crate::synthesis::DatasetManifest;
use crate::{Error, Result};

/// A scored detection box for AP evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub slice: usize,
    pub bbox: BBox,
    pub score: f64,
}

/// A ground-truth box for AP evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub slice: usize,
    pub bbox: BBox,
}

/// Root mean square error, voxel to voxel.
pub fn rmse(a: &DensityVolume, b: &DensityVolume) -> Result<f64> {
    if a.dims != b.dims {
        return Err(Error::dimension(format!(
            "volume dims {:?} vs {:?}",
            a.dims, b.dims
        )));
    }
    let n = a.data.len() as f64;
    let se: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| ((x - y) as f64).powi(2))
        .sum();
    Ok((se / n).sqrt())
}

/// Intersection over union of two boxes; 0 when disjoint.
pub fn iou(a: BBox, b: BBox) -> Result<f64> {
    let area = |r: BBox| (r.x1 - r.x0) * (r.y1 - r.y0);
    if area(a) <= 0.0 || area(b) <= 0.0 {
        return Err(Error::domain("degenerate box"));
    }
    let ix = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let iy = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = ix * iy;
    Ok(inter / (area(a) + area(b) - inter))
}

/// Average precision at one IoU threshold, all-point PR interpolation.
///
/// Detections are sorted by (score desc, slice asc, x0 asc) and matched
/// greedily, one detection per ground truth, within the same slice.
pub fn average_precision(
    detections: &[ScoredBox],
    ground_truths: &[GroundTruthBox],
    iou_threshold: f64,
) -> f64 {
    if ground_truths.is_empty() || detections.is_empty() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&detections[i], &detections[j]);
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.slice.cmp(&b.slice))
            .then(a.bbox.x0.partial_cmp(&b.bbox.x0).unwrap())
    });

    let mut gt_by_slice: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, gt) in ground_truths.iter().enumerate() {
        gt_by_slice.entry(gt.slice).or_default().push(i);
    }
    let mut gt_matched = vec![false; ground_truths.len()];

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(order.len());
    for &i in &order {
        let det = &detections[i];
        let mut best: Option<(f64, usize)> = None;
        if let Some(candidates) = gt_by_slice.get(&det.slice) {
            for &g in candidates {
                if gt_matched[g] {
                    continue;
                }
                let overlap = iou(det.bbox, ground_truths[g].bbox).unwrap_or(0.0);
                if overlap >= iou_threshold && best.is_none_or(|(b, _)| overlap > b) {
                    best = Some((overlap, g));
                }
            }
        }
        match best {
            Some((_, g)) => {
                gt_matched[g] = true;
                tp += 1;
            }
            None => fp += 1,
        }
        curve.push((
            tp as f64 / ground_truths.len() as f64,
            tp as f64 / (tp + fp) as f64,
        ));
    }

    // Precision envelope: max precision at recall >= r, integrated over the
    // recall steps.
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..curve.len() {
        let (recall, _) = curve[i];
        if recall > prev_recall {
            let p_max = curve[i..].iter().map(|&(_, p)| p).fold(0.0f64, f64::max);
            ap += (recall - prev_recall) * p_max;
            prev_recall = recall;
        }
    }
    ap
}

/// Deterministic train/val/test split of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub fractions: (f64, f64, f64),
    pub seed: u64,
}

/// Shuffled split with per-knot-count balance preserved within rounding.
pub fn split_dataset(
    manifest: &DatasetManifest,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<SplitAssignment> {
    let (ft, fv, fs) = fractions;
    if (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(Error::domain("fractions must sum to 1"));
    }
    let mut by_k: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for e in &manifest.entries {
        by_k.entry(e.k).or_default().push(e.id.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = SplitAssignment {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        fractions,
        seed,
    };
    for ids in by_k.values_mut() {
        ids.shuffle(&mut rng);
        let n = ids.len();
        let n_test = (n as f64 * fs).round() as usize;
        let n_val = (n as f64 * fv).round() as usize;
        let n_train = n - n_test - n_val;
        assignment.train.extend_from_slice(&ids[..n_train]);
        assignment
            .val
            .extend_from_slice(&ids[n_train..n_train + n_val]);
        assignment.test.extend_from_slice(&ids[n_train + n_val..]);
    }
    Ok(assignment)
}
