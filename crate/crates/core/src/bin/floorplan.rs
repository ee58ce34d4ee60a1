use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use floorplan::classify::{train, ClassifierModel, NodeClassifier};
use floorplan::geometry::PolygonWithHoles;
use floorplan::pipeline::experiment::{
    compare_feature_modes, evaluate_model, rotation_experiment, synthetic_suite, LabeledPlan,
};
use floorplan::pipeline::svg::{export_svg, import_labeled_svg, SvgScene};
use floorplan::pipeline::synth::{generate_synthetic, SyntheticPlan, SyntheticPlanSpec};
use floorplan::pipeline::{
    apply_labels, features_csv, graph_stage, preprocess_stage, run_pipeline, split_dataset,
    write_file, write_postprocess_artifacts, LabelSource, PipelineConfig, PipelineError, Result,
};
use floorplan::postprocess::postprocess;
use floorplan::preprocess::TextBox;
use floorplan::ragbuild::{ClassLabel, FeatureMode, RegionGraph};
use floorplan::raster::{load_gray, save_gray, GrayRaster};

#[derive(Parser)]
#[command(
    name = "floorplan",
    version,
    about = "Raster floor-plan digitization",
    allow_negative_numbers = true
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Settings applied on top of the config file.
#[derive(Args)]
struct Overrides {
    /// Pipeline configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; model training uses seed + 1.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Binarization threshold; pixels darker than this are ink.
    #[arg(long, global = true)]
    threshold: Option<u8>,
    /// Opening radius in pixels used to smooth the building outline.
    #[arg(long, global = true)]
    refine_radius: Option<f64>,
    /// Invariant ratio target used to scale polygons before projection.
    #[arg(long = "c", global = true)]
    invariant_ratio_c: Option<f64>,
    /// Maximum Zernike order n.
    #[arg(long, global = true)]
    zernike_order: Option<u32>,
    /// Side length of the raster used to evaluate moments.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// `normalized` or `raw` region shape features.
    #[arg(long, global = true, value_parser = parse_mode)]
    feature_mode: Option<FeatureMode>,
    /// Douglas-Peucker tolerance for wall outlines.
    #[arg(long, global = true)]
    dp_epsilon: Option<f64>,
    /// Minimum angle, in degrees, between the two separation lines kept per vertex.
    #[arg(long, global = true)]
    angle_min: Option<f64>,
    /// Angular tolerance, in degrees, for treating lines as orthogonal.
    #[arg(long, global = true)]
    ortho_tol: Option<f64>,
    /// Smallest clearance from separation lines at which a wall piece starts a new polygon.
    #[arg(long, global = true)]
    alg2_eps: Option<f64>,
}

fn parse_mode(s: &str) -> std::result::Result<FeatureMode, String> {
    match s {
        "normalized" => Ok(FeatureMode::Normalized),
        "raw" => Ok(FeatureMode::Raw),
        _ => Err(format!(
            "unknown feature mode {s:?}, expected normalized or raw"
        )),
    }
}

impl Overrides {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.threshold {
            c.preprocess.threshold = v;
        }
        if let Some(v) = self.refine_radius {
            c.preprocess.refine_radius = v;
        }
        if let Some(v) = self.invariant_ratio_c {
            c.rag.zernike.c = v;
        }
        if let Some(v) = self.zernike_order {
            c.rag.zernike.n_max = v;
        }
        if let Some(v) = self.grid {
            c.rag.zernike.grid = v;
        }
        if let Some(v) = self.feature_mode {
            c.rag.feature_mode = v;
        }
        if let Some(v) = self.dp_epsilon {
            c.postprocess.dp_epsilon = v;
        }
        if let Some(v) = self.angle_min {
            c.postprocess.angle_min = v;
        }
        if let Some(v) = self.ortho_tol {
            c.postprocess.ortho_tol = v;
        }
        if let Some(v) = self.alg2_eps {
            c.postprocess.alg2_eps = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic plans with truth polygons.
    Synth(SynthArgs),
    /// Binarize, remove text boxes and keep the building component.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        /// JSON array of {x, y, w, h} text boxes.
        #[arg(long)]
        boxes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the binarized image before filtering.
        #[arg(long)]
        binary_out: Option<PathBuf>,
    },
    /// Build the region adjacency graph of a plan image.
    Rag {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        boxes: Option<PathBuf>,
        /// Labeled SVG used to assign node labels by IoU.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export node features of a graph as CSV.
    Features {
        #[arg(long)]
        graph: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the node classifier on a plan directory.
    Train {
        /// Directory of `*.graph.json` files or images with sibling `.svg` truth.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Training report with per-epoch losses.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Label a graph with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Room connectivity graph and wall segments of a labeled graph.
    Postprocess {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model on a plan directory.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate on plans as given and rotated.
    RotateExp(RotateArgs),
    /// Draw a graph, truth SVG or post-processing result as layered SVG.
    Render {
        #[arg(long, conflicts_with = "truth")]
        graph: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Canvas size for truth rendering, as WIDTHxHEIGHT.
        #[arg(long, value_parser = parse_size)]
        size: Option<(usize, usize)>,
        /// Add post-processing layers; requires a fully labeled graph.
        #[arg(long)]
        post: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seed-deterministic 7:2:1 train/test/validation split of a directory.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline on one plan, writing every stage artifact.
    Run {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        boxes: Option<PathBuf>,
        #[arg(long, required_unless_present = "truth")]
        model: Option<PathBuf>,
        #[arg(long, conflicts_with = "model")]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Seed of the first plan; plan i uses seed + i.
    #[arg(long = "plan-seed", default_value_t = 0)]
    plan_seed: u64,
    /// Draw plan parameters at random instead of using the flags below.
    #[arg(long)]
    varied: bool,
    #[arg(long, default_value_t = 5)]
    rooms: usize,
    #[arg(long, default_value_t = 320)]
    canvas: usize,
    #[arg(long, default_value_t = 8)]
    wall_width: usize,
    #[arg(long, default_value_t = 16)]
    door_width: usize,
    #[arg(long, default_value_t = 3)]
    windows: usize,
    #[arg(long, default_value_t = 0.0)]
    rotation: f64,
    #[arg(long)]
    porch: bool,
    #[arg(long)]
    legend: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RotateArgs {
    #[arg(long, default_value_t = 45.0)]
    angle: f64,
    /// Test plans: images with sibling `.svg` truth.
    #[arg(long, required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    /// Train a normalized and a raw model on generated plans and compare.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 60)]
    train_count: usize,
    #[arg(long, default_value_t = 20)]
    test_count: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or("expected WIDTHxHEIGHT")?;
    Ok((
        w.parse().map_err(|e| format!("{e}"))?,
        h.parse().map_err(|e| format!("{e}"))?,
    ))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

fn load_image(path: &Path) -> Result<GrayRaster> {
    load_gray(path).map_err(|e| PipelineError::io(path, e))
}

fn load_boxes(path: Option<&Path>) -> Result<Vec<TextBox>> {
    match path {
        None => Ok(Vec::new()),
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| PipelineError::io(p, e)),
    }
}

fn load_truth(path: &Path) -> Result<Vec<(PolygonWithHoles, ClassLabel)>> {
    import_labeled_svg(path).map_err(|e| PipelineError::io(path, e))
}

fn load_graph(path: &Path) -> Result<RegionGraph> {
    RegionGraph::from_json(&read_text(path)?).map_err(|e| PipelineError::io(path, e))
}

fn load_model(path: &Path) -> Result<ClassifierModel> {
    ClassifierModel::from_json(&read_text(path)?).map_err(|e| PipelineError::io(path, e))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            use std::io::Write;
            // a closed pipe (e.g. `| head`) is not an error
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("pgm"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut v: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
    v.sort();
    Ok(v)
}

/// Images in `dir` that have a sibling `.svg` truth file. A sibling
/// `.boxes.json` is used as the text-box list.
fn labeled_plans(dir: &Path) -> Result<Vec<LabeledPlan>> {
    let images: Vec<PathBuf> = sorted_entries(dir)?
        .into_iter()
        .filter(|p| is_image(p) && p.with_extension("svg").exists())
        .collect();
    images
        .par_iter()
        .map(|p| {
            let boxes_path = p.with_extension("boxes.json");
            Ok(LabeledPlan {
                image: load_image(p)?,
                truth: load_truth(&p.with_extension("svg"))?,
                boxes: load_boxes(boxes_path.exists().then_some(boxes_path.as_path()))?,
            })
        })
        .collect()
}

/// Labeled graphs from `*.graph.json` files and from image/SVG pairs.
fn labeled_dataset(dir: &Path, cfg: &PipelineConfig) -> Result<Vec<RegionGraph>> {
    let mut graphs: Vec<RegionGraph> = sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.to_string_lossy().ends_with(".graph.json"))
        .map(|p| {
            let g = load_graph(&p)?;
            if !g.is_fully_labeled() {
                return Err(PipelineError::Input(format!(
                    "{}: graph has unlabeled nodes",
                    p.display()
                )));
            }
            Ok(g)
        })
        .collect::<Result<_>>()?;
    let plans = labeled_plans(dir)?;
    graphs.extend(floorplan::pipeline::experiment::labeled_graphs(
        &plans, cfg,
    )?);
    if graphs.is_empty() {
        return Err(PipelineError::Input(format!(
            "{}: no labeled plans found",
            dir.display()
        )));
    }
    Ok(graphs)
}

fn synth(args: &SynthArgs) -> Result<()> {
    let plans: Vec<SyntheticPlan> = if args.varied {
        synthetic_suite(args.count, args.plan_seed)?
    } else {
        (0..args.count as u64)
            .into_par_iter()
            .map(|i| {
                let spec = SyntheticPlanSpec {
                    rooms: args.rooms,
                    canvas: args.canvas,
                    wall_width: args.wall_width,
                    door_width: args.door_width,
                    window_count: args.windows,
                    rotation: args.rotation,
                    seed: args.plan_seed + i,
                    porch: args.porch,
                    legend: args.legend,
                    ..SyntheticPlanSpec::default()
                };
                generate_synthetic(&spec).map_err(|e| PipelineError::Input(e.to_string()))
            })
            .collect::<Result<_>>()?
    };
    for (i, plan) in plans.iter().enumerate() {
        let base = args
            .out
            .join(format!("plan_{:04}", args.plan_seed + i as u64));
        let img = base.with_extension("png");
        if let Some(parent) = img.parent() {
            std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
        }
        save_gray(&plan.image, &img).map_err(|e| PipelineError::io(&img, e))?;
        let scene = SvgScene::from_truth(plan.image.width(), plan.image.height(), &plan.truth);
        write_file(&base.with_extension("svg"), export_svg(&scene).as_bytes())?;
        write_file(
            &base.with_extension("boxes.json"),
            to_json(&plan.boxes).as_bytes(),
        )?;
    }
    log::info!("wrote {} plans to {}", plans.len(), args.out.display());
    Ok(())
}

fn rotate_exp(args: &RotateArgs, cfg: &PipelineConfig) -> Result<()> {
    let report = if args.synthetic {
        let train_plans: Vec<LabeledPlan> =
            synthetic_suite(args.train_count, cfg.seed.wrapping_mul(1000) + 1)?
                .into_iter()
                .map(Into::into)
                .collect();
        let test_plans: Vec<LabeledPlan> =
            synthetic_suite(args.test_count, cfg.seed.wrapping_mul(1000) + 500)?
                .into_iter()
                .map(Into::into)
                .collect();
        to_json(&compare_feature_modes(
            &train_plans,
            &test_plans,
            args.angle,
            cfg,
        )?)
    } else {
        let data = args.data.as_deref().expect("required by clap");
        let model_path = args
            .model
            .as_deref()
            .ok_or_else(|| PipelineError::Input("--model is required with --data".into()))?;
        let model = load_model(model_path)?;
        to_json(&rotation_experiment(
            &labeled_plans(data)?,
            &model,
            args.angle,
            cfg,
        )?)
    };
    write_or_print(args.out.as_deref(), &report)
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = cli.overrides.resolve()?;
    match cli.command {
        Command::Synth(args) => synth(&args),
        Command::Preprocess {
            input,
            boxes,
            out,
            binary_out,
        } => {
            let pre = preprocess_stage(&load_image(&input)?, &load_boxes(boxes.as_deref())?, &cfg)?;
            save_gray(&pre.filtered.to_gray(), &out).map_err(|e| PipelineError::io(&out, e))?;
            if let Some(b) = binary_out {
                save_gray(&pre.binary.to_gray(), &b).map_err(|e| PipelineError::io(&b, e))?;
            }
            Ok(())
        }
        Command::Rag {
            input,
            boxes,
            truth,
            out,
        } => {
            let (_, mut g) =
                graph_stage(&load_image(&input)?, &load_boxes(boxes.as_deref())?, &cfg)?;
            if let Some(t) = truth {
                apply_labels(&mut g, LabelSource::Truth(&load_truth(&t)?))?;
            }
            write_file(&out, g.to_json().as_bytes())
        }
        Command::Features { graph, out } => write_or_print(
            out.as_deref(),
            features_csv(&load_graph(&graph)?).trim_end(),
        ),
        Command::Train {
            data,
            validation,
            epochs,
            lr,
            out,
            report,
        } => {
            let graphs = labeled_dataset(&data, &cfg)?;
            let val = validation.map(|v| labeled_dataset(&v, &cfg)).transpose()?;
            let mut tc = cfg.train_config();
            if let Some(e) = epochs {
                tc.epochs = e;
            }
            if let Some(l) = lr {
                tc.learning_rate = l;
            }
            let (model, rep) = train(&graphs, val.as_deref(), cfg.model_config(), &tc)
                .map_err(|e| PipelineError::stage("train", e))?;
            write_file(&out, model.to_json().as_bytes())?;
            if let Some(r) = report {
                write_file(&r, to_json(&rep).as_bytes())?;
            }
            Ok(())
        }
        Command::Predict { model, graph, out } => {
            let m = load_model(&model)?;
            let mut g = load_graph(&graph)?;
            let labels = m
                .predict(&g)
                .map_err(|e| PipelineError::stage("predict", e))?;
            g.set_labels(&labels);
            write_or_print(out.as_deref(), &g.to_json())
        }
        Command::Postprocess { graph, out } => {
            let g = load_graph(&graph)?;
            if !g.is_fully_labeled() {
                return Err(PipelineError::Input(format!(
                    "{}: graph has unlabeled nodes",
                    graph.display()
                )));
            }
            let post = postprocess(&g, &cfg.postprocess);
            write_postprocess_artifacts(&out, &g, &post)
        }
        Command::Eval { model, data, out } => {
            let m = load_model(&model)?;
            let report = evaluate_model(&m, &labeled_dataset(&data, &cfg)?)?;
            write_or_print(out.as_deref(), &to_json(&report))
        }
        Command::RotateExp(args) => rotate_exp(&args, &cfg),
        Command::Render {
            graph,
            truth,
            size,
            post,
            out,
        } => {
            let scene = match (graph, truth) {
                (Some(gp), _) => {
                    let g = load_graph(&gp)?;
                    let scene = SvgScene::from_graph(&g);
                    if post {
                        if !g.is_fully_labeled() {
                            return Err(PipelineError::Input(format!(
                                "{}: graph has unlabeled nodes",
                                gp.display()
                            )));
                        }
                        scene.with_postprocess(&postprocess(&g, &cfg.postprocess))
                    } else {
                        scene
                    }
                }
                (None, Some(tp)) => {
                    let (w, h) = size.ok_or_else(|| {
                        PipelineError::Input("--size is required with --truth".into())
                    })?;
                    SvgScene::from_truth(w, h, &load_truth(&tp)?)
                }
                (None, None) => {
                    return Err(PipelineError::Input(
                        "one of --graph or --truth is required".into(),
                    ))
                }
            };
            write_file(&out, export_svg(&scene).as_bytes())
        }
        Command::Split { data, out } => {
            let names: Vec<String> = sorted_entries(&data)?
                .into_iter()
                .filter(|p| is_image(p))
                .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
                .collect();
            write_or_print(out.as_deref(), &to_json(&split_dataset(&names, cfg.seed)))
        }
        Command::Run {
            input,
            boxes,
            model,
            truth,
            out,
        } => {
            let img = load_image(&input)?;
            let boxes = load_boxes(boxes.as_deref())?;
            let run = match (model, truth) {
                (Some(m), _) => {
                    run_pipeline(&img, &boxes, &cfg, LabelSource::Model(&load_model(&m)?))?
                }
                (None, Some(t)) => {
                    run_pipeline(&img, &boxes, &cfg, LabelSource::Truth(&load_truth(&t)?))?
                }
                (None, None) => unreachable!("clap requires --model or --truth"),
            };
            run.write_artifacts(&out)?;
            let summary: BTreeMap<&str, usize> = [
                ("nodes", run.graph.node_count()),
                ("rooms", run.post.rcg.room_count()),
                ("doors", run.post.rcg.doors.len()),
                ("wall_segments", run.post.wall_segments.len()),
            ]
            .into();
            write_or_print(None, &to_json(&summary))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
