//! Synthetic suites, the rotation experiment and the closure check.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synth::{
    generate_synthetic, rotate_box, rotate_truth, SpaceRef, SyntheticPlan, SyntheticPlanSpec,
};
use super::{labeled_graph, run_pipeline, LabelSource, PipelineConfig, PipelineError, Result};
use crate::classify::{
    train, ClassifierModel, MetricAccumulator, MetricReport, NodeClassifier, TrainReport,
};
use crate::geometry::{MultiPolygon, PolygonWithHoles};
use crate::postprocess::SpaceKind;
use crate::preprocess::TextBox;
use crate::ragbuild::{ClassLabel, FeatureMode, RegionGraph};
use crate::raster::{rotate_expand, GrayRaster, RotationFrame};

/// A plan image with truth polygons.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPlan {
    pub image: GrayRaster,
    pub truth: Vec<(PolygonWithHoles, ClassLabel)>,
    pub boxes: Vec<TextBox>,
}

impl From<SyntheticPlan> for LabeledPlan {
    fn from(p: SyntheticPlan) -> Self {
        LabeledPlan {
            image: p.image,
            truth: p.truth,
            boxes: p.boxes,
        }
    }
}

impl LabeledPlan {
    pub fn rotated(&self, angle_deg: f64) -> LabeledPlan {
        let frame = RotationFrame::new(self.image.width(), self.image.height(), angle_deg);
        LabeledPlan {
            image: rotate_expand(&self.image, angle_deg),
            truth: rotate_truth(&self.truth, &frame),
            boxes: self.boxes.iter().map(|b| rotate_box(b, &frame)).collect(),
        }
    }
}

/// Plan parameters drawn from `seed`: 2 to 6 rooms, varying wall and door
/// sizes, windows, objects and stairs.
pub fn suite_spec(seed: u64) -> SyntheticPlanSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5017);
    SyntheticPlanSpec {
        rooms: rng.gen_range(2..=6),
        wall_width: rng.gen_range(6..=9),
        door_width: rng.gen_range(14..=16),
        window_count: rng.gen_range(1..=4),
        max_objects_per_room: rng.gen_range(0..=2),
        stairs: rng.gen_range(0..=1),
        seed,
        ..SyntheticPlanSpec::default()
    }
}

/// `count` plans with seeds `base_seed..base_seed + count`. A layout that
/// cannot hold the drawn room count is retried with one room fewer.
pub fn synthetic_suite(count: usize, base_seed: u64) -> Result<Vec<SyntheticPlan>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut spec = suite_spec(base_seed + i);
            loop {
                match generate_synthetic(&spec) {
                    Ok(p) => return Ok(p),
                    Err(_) if spec.rooms > 1 => spec.rooms -= 1,
                    Err(e) => return Err(PipelineError::stage("synth", e)),
                }
            }
        })
        .collect()
}

pub fn labeled_graphs(plans: &[LabeledPlan], cfg: &PipelineConfig) -> Result<Vec<RegionGraph>> {
    plans
        .par_iter()
        .map(|p| labeled_graph(&p.image, &p.boxes, &p.truth, cfg))
        .collect()
}

fn accumulate(acc: &mut MetricAccumulator, model: &ClassifierModel, g: &RegionGraph) -> Result<()> {
    let pred = model
        .predict(g)
        .map_err(|e| PipelineError::stage("predict", e))?;
    let areas: BTreeMap<u32, f64> = g.nodes.iter().map(|(&id, n)| (id, n.region.area)).collect();
    acc.add(&pred, &g.labels(), &areas)
        .map_err(|e| PipelineError::stage("eval", e))
}

/// Scores a model on labeled graphs.
pub fn evaluate_model(model: &ClassifierModel, graphs: &[RegionGraph]) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::default();
    for g in graphs {
        accumulate(&mut acc, model, g)?;
    }
    Ok(acc.report())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationReport {
    pub angle: f64,
    pub original: MetricReport,
    pub rotated: MetricReport,
    /// `original − rotated` per class, where both are defined.
    pub delta_f1: Vec<Option<f64>>,
    pub delta_macro_f1: f64,
}

/// Evaluates on the plans as given and rotated by `angle_deg`; rotated
/// regions take the class of the rotated truth polygon with highest IoU.
pub fn rotation_experiment(
    plans: &[LabeledPlan],
    model: &ClassifierModel,
    angle_deg: f64,
    cfg: &PipelineConfig,
) -> Result<RotationReport> {
    let pairs: Vec<(RegionGraph, RegionGraph)> = plans
        .par_iter()
        .map(|p| {
            let g0 = labeled_graph(&p.image, &p.boxes, &p.truth, cfg)?;
            let r = p.rotated(angle_deg);
            let g1 = labeled_graph(&r.image, &r.boxes, &r.truth, cfg)?;
            Ok((g0, g1))
        })
        .collect::<Result<_>>()?;
    let (mut a0, mut a1) = (MetricAccumulator::default(), MetricAccumulator::default());
    for (g0, g1) in &pairs {
        accumulate(&mut a0, model, g0)?;
        accumulate(&mut a1, model, g1)?;
    }
    let (original, rotated) = (a0.report(), a1.report());
    let delta_f1 = original
        .per_class_f1
        .iter()
        .zip(&rotated.per_class_f1)
        .map(|(a, b)| Some((*a)? - (*b)?))
        .collect();
    let delta_macro_f1 = original.macro_f1_excl_outer - rotated.macro_f1_excl_outer;
    Ok(RotationReport {
        angle: angle_deg,
        original,
        rotated,
        delta_f1,
        delta_macro_f1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: FeatureMode,
    pub training: TrainReport,
    pub report: RotationReport,
}

/// Trains one model per feature mode on the same plans and runs the
/// rotation experiment for each.
pub fn compare_feature_modes(
    train_plans: &[LabeledPlan],
    test_plans: &[LabeledPlan],
    angle_deg: f64,
    cfg: &PipelineConfig,
) -> Result<Vec<ModeResult>> {
    [FeatureMode::Normalized, FeatureMode::Raw]
        .into_iter()
        .map(|mode| {
            let mut c = cfg.clone();
            c.rag.feature_mode = mode;
            let graphs = labeled_graphs(train_plans, &c)?;
            let (model, training) = train(&graphs, None, c.model_config(), &c.train_config())
                .map_err(|e| PipelineError::stage("train", e))?;
            let report = rotation_experiment(test_plans, &model, angle_deg, &c)?;
            Ok(ModeResult {
                mode,
                training,
                report,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureOutcome {
    pub expected_rooms: usize,
    pub room_count: usize,
    pub bipartite: bool,
    pub expected_doors: Vec<Vec<SpaceRef>>,
    pub observed_doors: Vec<Vec<SpaceRef>>,
}

impl ClosureOutcome {
    pub fn rooms_match(&self) -> bool {
        self.room_count == self.expected_rooms
    }

    pub fn topology_matches(&self) -> bool {
        self.expected_doors == self.observed_doors
    }
}

/// Runs the pipeline with truth labels and compares the connectivity graph
/// with the generator layout. Spaces map to the layout room they overlap
/// most.
pub fn closure_check(plan: &SyntheticPlan, cfg: &PipelineConfig) -> Result<ClosureOutcome> {
    let run = run_pipeline(
        &plan.image,
        &plan.boxes,
        cfg,
        LabelSource::Truth(&plan.truth),
    )?;
    let rcg = &run.post.rcg;
    let rooms: Vec<MultiPolygon> = plan
        .layout
        .rooms
        .iter()
        .map(|r| {
            let p = r.polygon();
            MultiPolygon::from(match &plan.frame {
                Some(f) => p.map(|q| f.forward(q)).expect("rotation is an isometry"),
                None => p,
            })
        })
        .collect();
    let mut refs: BTreeMap<u32, SpaceRef> = BTreeMap::new();
    for s in &rcg.spaces {
        match s.kind {
            SpaceKind::OuterSpace => {
                refs.insert(s.id, SpaceRef::Outer);
            }
            SpaceKind::Room => {
                let best = rooms
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (i, r.intersection(&s.polygon).area()))
                    .filter(|(_, a)| *a > 0.0)
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
                if let Some((i, _)) = best {
                    refs.insert(s.id, SpaceRef::Room(i));
                }
            }
            SpaceKind::Porch => {}
        }
    }
    let mut observed: Vec<Vec<SpaceRef>> = rcg
        .topology()
        .values()
        .map(|spaces| {
            let mut v: Vec<SpaceRef> = spaces.iter().filter_map(|s| refs.get(s).copied()).collect();
            v.sort();
            v
        })
        .collect();
    observed.sort();
    let mut expected: Vec<Vec<SpaceRef>> = plan
        .layout
        .door_topology()
        .into_iter()
        .map(|(a, b)| vec![a, b])
        .collect();
    expected.sort();
    Ok(ClosureOutcome {
        expected_rooms: plan.layout.rooms.len(),
        room_count: rcg.room_count(),
        bipartite: rcg.is_bipartite(),
        expected_doors: expected,
        observed_doors: observed,
    })
}
