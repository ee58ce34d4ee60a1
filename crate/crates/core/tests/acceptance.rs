//! Acceptance suite. Every criterion prints one `PASS` or `FAIL` line; the
//! process exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use floorplan::classify::{
    gradient_check, standardize, train, ClassifierModel, GraphInput, ModelConfig, TrainConfig,
};
use floorplan::geometry::{
    area, is_convex, segments_cross, LineString, MultiPolygon, Point, PolygonWithHoles,
};
use floorplan::pipeline::experiment::{
    closure_check, compare_feature_modes, suite_spec, synthetic_suite, LabeledPlan,
};
use floorplan::pipeline::synth::generate_synthetic;
use floorplan::pipeline::{labeled_graph, run_pipeline, LabelSource, PipelineConfig};
use floorplan::postprocess::{construct_polygons, separation_lines, PostprocessConfig};
use floorplan::ragbuild::FeatureMode;
use floorplan::raster::rotate_polygon;
use floorplan::zernike::{
    index_pairs, invariant_ratio, normalize, ZernikeConfig, ZernikeExtractor,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Simple star-shaped polygon with `3..max_vertices` vertices at an offset.
fn random_polygon(rng: &mut ChaCha8Rng, scale: f64, max_vertices: usize) -> PolygonWithHoles {
    loop {
        let n = rng.gen_range(3..max_vertices);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        angles.sort_by(f64::total_cmp);
        angles.dedup_by(|a, b| (*a - *b).abs() < 0.05);
        if angles.len() < 3 {
            continue;
        }
        let off = Point::new(
            rng.gen_range(-3.0..3.0) * scale,
            rng.gen_range(-3.0..3.0) * scale,
        );
        let pts: Vec<Point> = angles
            .iter()
            .map(|a| {
                let r = scale * rng.gen_range(0.3..1.0);
                Point::new(off.x + r * a.cos(), off.y + r * a.sin())
            })
            .collect();
        if let Ok(p) = PolygonWithHoles::from_points(pts) {
            if area(&p).is_ok_and(|a| a > 1e-3 * scale * scale) {
                return p;
            }
        }
    }
}

fn max_vertex_norm(p: &PolygonWithHoles) -> f64 {
    p.rings()
        .flat_map(|r| r.points().iter())
        .map(|v| v.norm())
        .fold(0.0, f64::max)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn containment_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = 1.0;
    let (mut agree, mut inside, mut boundary) = (0, 0, 0);
    let total = 1000;
    for i in 0..total {
        let size = rng.gen_range(1.0..200.0);
        let p = random_polygon(&mut rng, size, 14);
        let ratio = invariant_ratio(&p).map_err(|e| e.to_string())?;
        // every tenth case sits exactly on the boundary c = ratio
        let c = if i % 10 == 0 {
            boundary += 1;
            ratio
        } else {
            rng.gen_range(0.01..1.5)
        };
        let np = normalize(&p, c, r).map_err(|e| e.to_string())?;
        // the disk is convex, so containment is decided by the vertices
        let contained = max_vertex_norm(&np.polygon) <= r * (1.0 + 1e-12);
        let predicate = c <= ratio * (1.0 + 1e-12);
        if contained == predicate {
            agree += 1;
        }
        inside += usize::from(contained);
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        agree == total && secs < 10.0,
        format!("{agree}/{total} agree ({inside} contained, {boundary} at equality) in {secs:.2}s"),
    )
}

fn figure_values() -> Outcome {
    let rect = |a: f64, b: f64| PolygonWithHoles::rect(0.0, 0.0, a, b).unwrap();
    let cases = [
        ("square", rect(3.0, 3.0), 2.0 / PI),
        ("a=2b", rect(4.0, 2.0), 8.0 / (5.0 * PI)),
        ("a=10b", rect(10.0, 1.0), 40.0 / (101.0 * PI)),
    ];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, p, expect) in cases {
        let got = invariant_ratio(&p).map_err(|e| e.to_string())?;
        worst = worst.max((got - expect).abs());
        parts.push(format!("{name} {got:.12}"));
    }
    check(
        worst <= 1e-9,
        format!("{} (max error {worst:.1e})", parts.join(", ")),
    )
}

fn zernike_count() -> Outcome {
    let pairs = index_pairs(6);
    let valid = pairs.iter().all(|&(n, m)| m <= n && (n - m) % 2 == 0);
    let distinct = pairs.windows(2).all(|w| w[0] < w[1]);
    check(
        pairs.len() == 16 && valid && distinct,
        format!("{} pairs for n_max = 6", pairs.len()),
    )
}

fn invariance() -> Outcome {
    let t = Instant::now();
    let cfg = ZernikeConfig::default();
    let ex = ZernikeExtractor::new(cfg).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let polys: Vec<PolygonWithHoles> =
        std::iter::repeat_with(|| random_polygon(&mut rng, 40.0, 12))
            .filter(|p| invariant_ratio(p).is_ok_and(|r| r >= cfg.c))
            .take(50)
            .collect();
    let (mut rot, mut trans_pre, mut trans, mut scale): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for p in &polys {
        let base = ex.features(p).map_err(|e| e.to_string())?.amplitudes;
        for angle in [13.0, 45.0, 90.0, 217.0] {
            let q = rotate_polygon(p, angle, Point::new(7.0, -3.0));
            let f = ex.features(&q).map_err(|e| e.to_string())?.amplitudes;
            rot = rot.max(max_abs_diff(&base, &f));
        }
        let d = Point::new(rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0));
        let moved = p.translate(d);
        let a = normalize(p, cfg.c, 1.0).map_err(|e| e.to_string())?;
        let b = normalize(&moved, cfg.c, 1.0).map_err(|e| e.to_string())?;
        for (ra, rb) in a.polygon.rings().zip(b.polygon.rings()) {
            for (u, v) in ra.points().iter().zip(rb.points()) {
                trans_pre = trans_pre.max(u.dist(*v));
            }
        }
        let f = ex.features(&moved).map_err(|e| e.to_string())?.amplitudes;
        trans = trans.max(max_abs_diff(&base, &f));
        let s = rng.gen_range(0.25..4.0);
        let f = ex
            .features(&p.scale(s).unwrap())
            .map_err(|e| e.to_string())?
            .amplitudes;
        scale = scale.max(max_abs_diff(&base, &f));
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        polys.len() == 50 && rot <= 2e-2 && trans_pre <= 1e-9 && trans <= 1e-2 && scale <= 1e-2 && secs < 60.0,
        format!(
            "rotation {rot:.2e}, translation {trans_pre:.1e} (vertices) / {trans:.2e} (features), scale {scale:.2e} over {} polygons in {secs:.1}s",
            polys.len()
        ),
    )
}

fn normalized_area() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let size = rng.gen_range(1.0..300.0);
        let p = random_polygon(&mut rng, size, 16);
        let c = rng.gen_range(0.01..1.5);
        let r = rng.gen_range(0.5..2.0);
        let np = normalize(&p, c, r).map_err(|e| e.to_string())?;
        let target = c * r * r * PI;
        worst = worst.max((area(&np.polygon).unwrap() - target).abs() / target);
    }
    check(
        worst <= 1e-3,
        format!("max relative area error {worst:.2e} over 100 polygons"),
    )
}

fn gradient() -> Outcome {
    let spec = floorplan::pipeline::synth::SyntheticPlanSpec {
        rooms: 1,
        window_count: 1,
        max_objects_per_room: 0,
        stairs: 0,
        seed: 2,
        ..Default::default()
    };
    let plan = generate_synthetic(&spec).map_err(|e| e.to_string())?;
    let cfg = PipelineConfig::default();
    let g =
        labeled_graph(&plan.image, &plan.boxes, &plan.truth, &cfg).map_err(|e| e.to_string())?;
    let (s, _) = standardize(std::slice::from_ref(&g), &[0, 1]).map_err(|e| e.to_string())?;
    let input = GraphInput::new(&g, &s).map_err(|e| e.to_string())?;
    let targets: Vec<usize> = g.nodes.values().map(|n| n.label.unwrap().index()).collect();
    let model = ClassifierModel::new(
        ModelConfig {
            input_dim: s.mean.len(),
            ..cfg.model_config()
        },
        s,
    );
    let err = gradient_check(&model, &input, &targets, 200, 9);
    check(
        err < 1e-4 && g.node_count() <= 20,
        format!(
            "max relative error {err:.2e} on a {}-node graph, {} parameters",
            g.node_count(),
            model.param_count()
        ),
    )
}

fn direction_of_effect() -> Outcome {
    let t = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..3u64 {
        let train_plans: Vec<LabeledPlan> = synthetic_suite(60, 1000 * seed + 1)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(Into::into)
            .collect();
        let test_plans: Vec<LabeledPlan> = synthetic_suite(20, 1000 * seed + 500)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(Into::into)
            .collect();
        let cfg = PipelineConfig {
            seed,
            ..PipelineConfig::default()
        };
        let res = compare_feature_modes(&train_plans, &test_plans, 45.0, &cfg)
            .map_err(|e| e.to_string())?;
        let get = |m: FeatureMode| res.iter().find(|r| r.mode == m).expect("both modes run");
        let (n, r) = (get(FeatureMode::Normalized), get(FeatureMode::Raw));
        let gap = n.report.rotated.macro_f1_excl_outer - r.report.rotated.macro_f1_excl_outer;
        let unrot =
            (n.report.original.macro_f1_excl_outer - r.report.original.macro_f1_excl_outer).abs();
        ok &= gap >= 0.05 && unrot <= 0.05;
        lines.push(format!(
            "seed {seed}: rotated {:.1} vs {:.1} (gap {:.1}), unrotated {:.1} vs {:.1}",
            100.0 * n.report.rotated.macro_f1_excl_outer,
            100.0 * r.report.rotated.macro_f1_excl_outer,
            100.0 * gap,
            100.0 * n.report.original.macro_f1_excl_outer,
            100.0 * r.report.original.macro_f1_excl_outer,
        ));
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        ok && secs < 600.0,
        format!("{}; {secs:.0}s", lines.join("; ")),
    )
}

fn frame_fixture() -> MultiPolygon {
    let ring = |a: f64, b: f64| {
        LineString::new_ring(vec![
            Point::new(a, a),
            Point::new(b, a),
            Point::new(b, b),
            Point::new(a, b),
        ])
        .unwrap()
    };
    MultiPolygon::from(PolygonWithHoles::new(ring(0.0, 100.0), vec![ring(10.0, 90.0)]).unwrap())
}

fn tee_fixture() -> MultiPolygon {
    MultiPolygon::from(
        PolygonWithHoles::from_points(vec![
            Point::new(0.0, 0.0),
            Point::new(100.0, 0.0),
            Point::new(100.0, 10.0),
            Point::new(55.0, 10.0),
            Point::new(55.0, 60.0),
            Point::new(45.0, 60.0),
            Point::new(45.0, 10.0),
            Point::new(0.0, 10.0),
        ])
        .unwrap(),
    )
}

fn wall_fixtures() -> Outcome {
    let cfg = PostprocessConfig::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, p_wall) in [("frame", frame_fixture()), ("tee", tee_fixture())] {
        let t = Instant::now();
        let lines = separation_lines(&p_wall, cfg.angle_min, cfg.ortho_tol);
        let segs = construct_polygons(&p_wall, &lines, &cfg);
        let secs = t.elapsed().as_secs_f64();
        let crossings = (0..lines.len())
            .flat_map(|i| (i + 1..lines.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| segments_cross(&lines[i].segment, &lines[j].segment))
            .count();
        let convex = segs.iter().all(|s| is_convex(&s.hull));
        let wall_area = p_wall.area();
        let pieces: Vec<MultiPolygon> = segs
            .iter()
            .map(|s| MultiPolygon::from(s.polygon.clone()))
            .collect();
        let union = pieces
            .iter()
            .fold(MultiPolygon::default(), |acc, p| acc.union(p));
        let coverage = union.intersection(&p_wall).area() / wall_area;
        let mut overlap: f64 = 0.0;
        for i in 0..pieces.len() {
            for j in i + 1..pieces.len() {
                let shared = pieces[i].intersection(&pieces[j]).area() / wall_area;
                if shared > overlap {
                    overlap = shared;
                }
            }
        }
        ok &= crossings == 0 && convex && coverage >= 0.99 && overlap <= 0.01 && secs < 1.0;
        parts.push(format!(
            "{name}: {} lines, {crossings} crossings, {} segments convex={convex}, coverage {:.4}, max overlap {:.1e}, {:.3}s",
            lines.len(),
            segs.len(),
            coverage,
            overlap,
            secs
        ));
    }
    check(ok, parts.join("; "))
}

fn closure() -> Outcome {
    let t = Instant::now();
    let cfg = PipelineConfig::default();
    let results: Vec<Result<(bool, bool, bool, usize), String>> = {
        use rayon::prelude::*;
        (0..100u64)
            .into_par_iter()
            .map(|seed| {
                let mut spec = suite_spec(seed);
                let plan = loop {
                    match generate_synthetic(&spec) {
                        Ok(p) => break p,
                        Err(_) if spec.rooms > 1 => spec.rooms -= 1,
                        Err(e) => return Err(format!("seed {seed}: {e}")),
                    }
                };
                let out = closure_check(&plan, &cfg).map_err(|e| format!("seed {seed}: {e}"))?;
                Ok((
                    out.room_count == spec.rooms,
                    out.bipartite,
                    out.topology_matches(),
                    spec.rooms,
                ))
            })
            .collect()
    };
    let mut failures = Vec::new();
    let (mut rooms_ok, mut bip_ok, mut topo_ok) = (0, 0, 0);
    let mut room_total = 0;
    for (seed, r) in results.into_iter().enumerate() {
        match r {
            Ok((a, b, c, n)) => {
                rooms_ok += usize::from(a);
                bip_ok += usize::from(b);
                topo_ok += usize::from(c);
                room_total += n;
                if !(a && b) {
                    failures.push(format!("seed {seed}"));
                }
            }
            Err(e) => failures.push(e),
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        failures.is_empty(),
        format!(
            "room count {rooms_ok}/100, bipartite {bip_ok}/100, door topology {topo_ok}/100, {room_total} rooms total, {secs:.0}s{}",
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    )
}

fn hash_dir(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if !p.is_file() {
            continue;
        }
        let bytes = std::fs::read(&p).unwrap();
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), hex);
    }
    out
}

fn determinism() -> Outcome {
    let cfg = PipelineConfig::default();
    let run_once = |dir: &Path| -> Result<(), String> {
        let plans = synthetic_suite(4, 77).map_err(|e| e.to_string())?;
        let graphs: Vec<_> = plans[..3]
            .iter()
            .map(|p| labeled_graph(&p.image, &p.boxes, &p.truth, &cfg))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let tc = TrainConfig {
            epochs: 3,
            ..cfg.train_config()
        };
        let (model, _) =
            train(&graphs, None, cfg.model_config(), &tc).map_err(|e| e.to_string())?;
        std::fs::write(dir.join("model.json"), model.to_json()).map_err(|e| e.to_string())?;
        let test = &plans[3];
        let oracle = run_pipeline(
            &test.image,
            &test.boxes,
            &cfg,
            LabelSource::Truth(&test.truth),
        )
        .map_err(|e| e.to_string())?;
        oracle
            .write_artifacts(&dir.join("oracle"))
            .map_err(|e| e.to_string())?;
        let predicted = run_pipeline(&test.image, &test.boxes, &cfg, LabelSource::Model(&model))
            .map_err(|e| e.to_string())?;
        predicted
            .write_artifacts(&dir.join("model"))
            .map_err(|e| e.to_string())?;
        Ok(())
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_once(a.path())?;
    run_once(b.path())?;
    let mut files = 0;
    let mut differing = Vec::new();
    for sub in ["", "oracle", "model"] {
        let (ha, hb) = (hash_dir(&a.path().join(sub)), hash_dir(&b.path().join(sub)));
        if ha.keys().ne(hb.keys()) {
            differing.push(format!("{sub}: file sets differ"));
        }
        for (name, h) in &ha {
            files += 1;
            if hb.get(name) != Some(h) {
                differing.push(format!("{sub}/{name}"));
            }
        }
    }
    check(
        differing.is_empty() && files >= 13,
        format!(
            "{files} artifacts hashed with SHA-256 across two runs{}",
            if differing.is_empty() {
                String::new()
            } else {
                format!("; differing: {}", differing.join(", "))
            }
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("containment oracle", containment_oracle),
        ("invariant ratio values", figure_values),
        ("zernike index count", zernike_count),
        ("rotation, translation and scale invariance", invariance),
        ("normalized area identity", normalized_area),
        ("classifier gradient check", gradient),
        (
            "normalization versus raw moments under rotation",
            direction_of_effect,
        ),
        ("wall splitting fixtures", wall_fixtures),
        ("generator closure", closure),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {:>2}: {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str())) {
            continue;
        }
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => println!("PASS {label}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {label}: {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
