//! The evaluation toolkit on small hand-checkable fixtures: box IoU, average
//! precision at two thresholds, and voxel RMSE.
//!
//!     cargo run --release --example evaluate_detections

use woodlog::metrics::{average_precision, iou, rmse, GroundTruthBox, ScoredBox};
use woodlog::raster::{BBox, DensityVolume};

fn main() -> woodlog::Result<()> {
    let a = BBox {
        x0: 0.0,
        y0: 0.0,
        x1: 2.0,
        y1: 2.0,
    };
    let b = BBox {
        x0: 1.0,
        y0: 1.0,
        x1: 3.0,
        y1: 3.0,
    };
    println!("iou {}", iou(a, b)?); // 1/7: unit overlap, union 7

    // One ground truth and one detection overlapping it at IoU 0.6: a hit at
    // the 0.5 threshold, a miss at 0.75.
    let gt = [GroundTruthBox { slice: 0, bbox: a }];
    let det = BBox {
        x0: 0.5,
        y0: 0.0,
        x1: 2.5,
        y1: 2.0,
    };
    let dets = [ScoredBox {
        slice: 0,
        bbox: det,
        score: 0.9,
    }];
    println!("ap@50 {}", average_precision(&dets, &gt, 0.5));
    println!("ap@75 {}", average_precision(&dets, &gt, 0.75));

    let va = DensityVolume {
        dims: (2, 2, 1),
        extent: 1.0,
        height: 1.0,
        data: vec![1.0, 2.0, 3.0, 4.0],
    };
    let vb = DensityVolume {
        data: vec![0.0; 4],
        ..va.clone()
    };
    println!("rmse {}", rmse(&va, &vb)?); // sqrt(30/4)
    Ok(())
}
