//! End-to-end orchestration, configuration and artifact IO.

pub mod experiment;
pub mod svg;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{ClassifierModel, ModelConfig, NodeClassifier, Optimizer, TrainConfig};
use crate::geometry::{MultiPolygon, PolygonWithHoles};
use crate::postprocess::{
    postprocess, PostprocessConfig, PostprocessOutput, RoomConnectivityGraph, SeparationLine,
    WallSegment,
};
use crate::preprocess::{preprocess_detailed, PreprocessConfig, PreprocessOutput, TextBox};
use crate::ragbuild::{
    build_rag, relabel_by_iou, ClassLabel, RagConfig, RegionGraph, FORMAT_VERSION,
};
use crate::raster::{write_pgm, GrayRaster};
use crate::zernike::feature_names;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Input(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{stage}: {message}")]
    Stage {
        stage: &'static str,
        message: String,
    },
}

impl PipelineError {
    /// Process exit code: 1 for bad input, 2 for a failing stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Input(_) | PipelineError::Io { .. } => 1,
            PipelineError::Stage { .. } => 2,
        }
    }

    pub fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Classifier architecture settings stored in a pipeline config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub layer_count: usize,
    pub hidden_width: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            layer_count: m.layer_count,
            hidden_width: m.hidden_width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub log_scale: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            optimizer: t.optimizer,
            log_scale: t.log_scale,
        }
    }
}

/// Every tunable of the pipeline. All randomness derives from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub format_version: u32,
    pub seed: u64,
    pub preprocess: PreprocessConfig,
    pub rag: RagConfig,
    pub postprocess: PostprocessConfig,
    pub model: ModelSection,
    pub train: TrainSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            format_version: FORMAT_VERSION,
            seed: 7,
            preprocess: PreprocessConfig::default(),
            rag: RagConfig::default(),
            postprocess: PostprocessConfig::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Input(format!("invalid config: {m}")));
        if self.format_version != FORMAT_VERSION {
            return bad(format!(
                "unsupported format_version {}",
                self.format_version
            ));
        }
        if i64::try_from(self.seed).is_err() {
            return bad(format!(
                "seed {} exceeds the signed 64-bit range",
                self.seed
            ));
        }
        if let Err(e) = self.rag.zernike.validate() {
            return Err(PipelineError::Input(e.to_string()));
        }
        if !(self.preprocess.refine_radius >= 0.0 && self.preprocess.refine_radius.is_finite()) {
            return bad("refine_radius must be non-negative".into());
        }
        let p = &self.postprocess;
        let nonneg = [
            p.dp_epsilon,
            p.closing_radius,
            p.alg2_eps,
            p.association_tolerance,
            p.min_sliver_area,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(p.neighbour_tolerance >= 1.0) {
            return bad(
                "post-processing distances must be non-negative and neighbour_tolerance >= 1"
                    .into(),
            );
        }
        if !(0.0..=90.0).contains(&p.angle_min) || !(0.0..=90.0).contains(&p.ortho_tol) {
            return bad("angles must lie within [0, 90] degrees".into());
        }
        if self.model.layer_count == 0 || self.model.hidden_width == 0 {
            return bad("model needs at least one layer of non-zero width".into());
        }
        self.train_config()
            .validate()
            .map_err(|e| PipelineError::Input(e.to_string()))
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            layer_count: self.model.layer_count,
            hidden_width: self.model.hidden_width,
            input_dim: 2 + crate::zernike::index_pairs(self.rag.zernike.n_max).len(),
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            seed: self.seed.wrapping_add(1),
            optimizer: self.train.optimizer,
            log_scale: self.train.log_scale,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes to JSON")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let c: PipelineConfig =
            toml::from_str(s).map_err(|e| PipelineError::Input(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: PipelineConfig =
            serde_json::from_str(s).map_err(|e| PipelineError::Input(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    /// Loads TOML, or JSON for `.json` files.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }
}

/// Where node labels come from.
pub enum LabelSource<'a> {
    Model(&'a ClassifierModel),
    /// Labels transferred from truth polygons by pixel IoU.
    Truth(&'a [(PolygonWithHoles, ClassLabel)]),
    Given(&'a BTreeMap<u32, ClassLabel>),
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub preprocessed: PreprocessOutput,
    pub graph: RegionGraph,
    pub post: PostprocessOutput,
}

pub fn preprocess_stage(
    img: &GrayRaster,
    boxes: &[TextBox],
    cfg: &PipelineConfig,
) -> Result<PreprocessOutput> {
    preprocess_detailed(img, boxes, &cfg.preprocess)
        .map_err(|e| PipelineError::stage("preprocess", e))
}

/// Preprocess and build the region graph without labels.
pub fn graph_stage(
    img: &GrayRaster,
    boxes: &[TextBox],
    cfg: &PipelineConfig,
) -> Result<(PreprocessOutput, RegionGraph)> {
    let pre = preprocess_stage(img, boxes, cfg)?;
    let g = build_rag(&pre.filtered, &cfg.rag).map_err(|e| PipelineError::stage("rag", e))?;
    Ok((pre, g))
}

pub fn apply_labels(g: &mut RegionGraph, source: LabelSource<'_>) -> Result<()> {
    let labels = match source {
        LabelSource::Model(m) => m
            .predict(g)
            .map_err(|e| PipelineError::stage("predict", e))?,
        LabelSource::Truth(t) => {
            let regions: Vec<_> = g.nodes.values().map(|n| n.region.clone()).collect();
            relabel_by_iou(&regions, t, g.width, g.height)
                .map_err(|e| PipelineError::stage("label", e))?
        }
        LabelSource::Given(l) => {
            if let Some(id) = g.nodes.keys().find(|k| !l.contains_key(k)) {
                return Err(PipelineError::stage(
                    "label",
                    format!("no label for node {id}"),
                ));
            }
            l.clone()
        }
    };
    g.set_labels(&labels);
    Ok(())
}

/// Graph of a plan labeled from its truth polygons, used for training and
/// evaluation.
pub fn labeled_graph(
    img: &GrayRaster,
    boxes: &[TextBox],
    truth: &[(PolygonWithHoles, ClassLabel)],
    cfg: &PipelineConfig,
) -> Result<RegionGraph> {
    let (_, mut g) = graph_stage(img, boxes, cfg)?;
    apply_labels(&mut g, LabelSource::Truth(truth))?;
    Ok(g)
}

/// Preprocess, build the graph, label it and post-process.
pub fn run_pipeline(
    img: &GrayRaster,
    boxes: &[TextBox],
    cfg: &PipelineConfig,
    labels: LabelSource<'_>,
) -> Result<PipelineRun> {
    cfg.validate()?;
    let (preprocessed, mut graph) = graph_stage(img, boxes, cfg)?;
    apply_labels(&mut graph, labels)?;
    let post = postprocess(&graph, &cfg.postprocess);
    Ok(PipelineRun {
        preprocessed,
        graph,
        post,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RcgFile {
    pub format_version: u32,
    #[serde(flatten)]
    pub rcg: RoomConnectivityGraph,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WallsFile {
    pub format_version: u32,
    pub p_wall: MultiPolygon,
    pub separation_lines: Vec<SeparationLine>,
    pub segments: Vec<WallSegment>,
}

pub fn rcg_json(post: &PostprocessOutput) -> String {
    serde_json::to_string_pretty(&RcgFile {
        format_version: FORMAT_VERSION,
        rcg: post.rcg.clone(),
    })
    .expect("rcg serializes")
}

pub fn walls_json(post: &PostprocessOutput) -> String {
    let f = WallsFile {
        format_version: FORMAT_VERSION,
        p_wall: post.p_wall.clone(),
        separation_lines: post.separation_lines.clone(),
        segments: post.wall_segments.clone(),
    };
    serde_json::to_string_pretty(&f).expect("walls serialize")
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}

/// Writes the post-processing artifacts: RCG, wall segments and overlay.
pub fn write_postprocess_artifacts(
    dir: &Path,
    graph: &RegionGraph,
    post: &PostprocessOutput,
) -> Result<()> {
    write_file(&dir.join("rcg.json"), rcg_json(post).as_bytes())?;
    write_file(&dir.join("walls.json"), walls_json(post).as_bytes())?;
    let scene = svg::SvgScene::from_graph(graph).with_postprocess(post);
    write_file(&dir.join("overlay.svg"), svg::export_svg(&scene).as_bytes())
}

impl PipelineRun {
    /// Persists every stage: binarized and filtered rasters, graph, RCG,
    /// walls and an SVG overlay.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        for (name, r) in [
            ("binary.pgm", &self.preprocessed.binary),
            ("filtered.pgm", &self.preprocessed.filtered),
        ] {
            let mut buf = Vec::new();
            write_pgm(&r.to_gray(), &mut buf).map_err(|e| PipelineError::io(&dir.join(name), e))?;
            write_file(&dir.join(name), &buf)?;
        }
        write_file(&dir.join("graph.json"), self.graph.to_json().as_bytes())?;
        write_postprocess_artifacts(dir, &self.graph, &self.post)
    }
}

/// Node features as CSV: `id,label,degree,area,z_n_m...`.
pub fn features_csv(g: &RegionGraph) -> String {
    let mut s = String::from("id,label,degree,area");
    for n in feature_names(g.meta.n_max) {
        s.push(',');
        s.push_str(&n);
    }
    s.push('\n');
    for (id, n) in &g.nodes {
        let label = n.label.map_or("", |l| l.name());
        let _ = write!(s, "{id},{label}");
        for v in n.features.to_vec() {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub format_version: u32,
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub validation: Vec<String>,
}

/// Seed-deterministic train/test/validation split in the ratio 7 : 2 : 1.
/// Input order does not matter.
pub fn split_dataset(names: &[String], seed: u64) -> DatasetSplit {
    let mut v: Vec<String> = names.to_vec();
    v.sort();
    v.dedup();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = v.len();
    let n_train = (n * 7).div_ceil(10).min(n);
    let n_test = ((n * 2) / 10).min(n - n_train);
    let mut train: Vec<String> = v[..n_train].to_vec();
    let mut test: Vec<String> = v[n_train..n_train + n_test].to_vec();
    let mut validation: Vec<String> = v[n_train + n_test..].to_vec();
    train.sort();
    test.sort();
    validation.sort();
    DatasetSplit {
        format_version: FORMAT_VERSION,
        seed,
        train,
        test,
        validation,
    }
}
