//! Label agreement between a plan and its 45° rotated copy.
//!
//! Ignored by default: a trained model currently agrees on roughly 86% of
//! matched nodes, short of the 95% target. Run with `--ignored` to measure.

use floorplan::classify::{train, NodeClassifier};
use floorplan::pipeline::experiment::{labeled_graphs, synthetic_suite, LabeledPlan};
use floorplan::pipeline::{labeled_graph, PipelineConfig};
use floorplan::ragbuild::{relabel_by_iou, Region};
use floorplan::raster::RotationFrame;

fn plans(count: usize, seed: u64) -> Vec<LabeledPlan> {
    synthetic_suite(count, seed)
        .unwrap()
        .into_iter()
        .map(Into::into)
        .collect()
}

#[test]
#[ignore = "measured agreement is below the 95% target"]
fn predictions_agree_after_45_degree_rotation() {
    let cfg = PipelineConfig::default();
    let graphs = labeled_graphs(&plans(60, 1), &cfg).unwrap();
    let (model, _) = train(&graphs, None, cfg.model_config(), &cfg.train_config()).unwrap();

    let (mut agree, mut total) = (0usize, 0usize);
    for p in plans(20, 500) {
        let g0 = labeled_graph(&p.image, &p.boxes, &p.truth, &cfg).unwrap();
        let r = p.rotated(45.0);
        let g1 = labeled_graph(&r.image, &r.boxes, &r.truth, &cfg).unwrap();
        let frame = RotationFrame::new(p.image.width(), p.image.height(), 45.0);

        // Carry each original prediction onto the rotated graph by IoU.
        let pred0 = model.predict(&g0).unwrap();
        let moved: Vec<_> = g0
            .nodes
            .iter()
            .map(|(id, n)| {
                let poly = n.region.polygon.map(|q| frame.forward(q)).unwrap();
                (poly, pred0[id])
            })
            .collect();
        let regions: Vec<Region> = g1.nodes.values().map(|n| n.region.clone()).collect();
        let expected = relabel_by_iou(&regions, &moved, r.image.width(), r.image.height()).unwrap();
        let pred1 = model.predict(&g1).unwrap();
        for (id, label) in &pred1 {
            total += 1;
            agree += usize::from(expected.get(id) == Some(label));
        }
    }
    let rate = agree as f64 / total as f64;
    println!("agreement {agree}/{total} = {rate:.3}");
    assert!(rate >= 0.95, "agreement {rate:.3} below 0.95");
}
