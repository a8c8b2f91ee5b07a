use std::path::{Path, PathBuf};

use image::RgbImage;
use selo_core::io::read_map;
use selo_core::metrics::{evaluate_case, MetricParams};
use selo_core::pipeline::PipelineConfig;
use selo_core::report::{cmd_evaluate, cmd_generate, cmd_run, cmd_stats, strip_volatile, RunConfig, RunReport};
use selo_core::{Manifest, ScorerSpec};

const MANIFEST: &str = r#"{
  "version": 1,
  "images": [
    {"file": "a.png", "height": 200, "width": 240, "cases": [
      {"id": "a-1", "query": "a grey roof", "regions": [[[20, 20], [80, 20], [80, 70], [20, 70]]]},
      {"id": "a-2", "query": "the pond", "regions": [[[150, 100], [220, 120], [190, 180]]]}
    ]},
    {"file": "b.png", "height": 160, "width": 160, "cases": [
      {"id": "b-1", "query": "two sheds", "regions": [[[10, 10], [50, 10], [50, 40], [10, 40]], [[100, 100], [140, 100], [140, 150], [100, 150]]]}
    ]}
  ]
}"#;

fn fixture(dir: &Path) -> PathBuf {
    for (name, w, h) in [("a.png", 240, 200), ("b.png", 160, 160)] {
        RgbImage::from_fn(w, h, |x, y| image::Rgb([(x % 256) as u8, (y % 256) as u8, 90]))
            .save(dir.join(name))
            .unwrap();
    }
    let path = dir.join("manifest.json");
    std::fs::write(&path, MANIFEST).unwrap();
    path
}

fn config(manifest: PathBuf, out: PathBuf, scorer: ScorerSpec) -> RunConfig {
    RunConfig {
        manifest,
        scorer,
        pipeline: PipelineConfig {
            scales: vec![32, 64],
            ..Default::default()
        },
        params: MetricParams::default(),
        out_dir: out,
        render: false,
        seed: 11,
        workers: 2,
    }
}

#[test]
fn constant_scorer_writes_degenerate_maps_and_timings() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    let out = dir.path().join("out");
    let report = cmd_generate(&config(manifest, out.clone(), ScorerSpec::Constant { value: 0.5 })).unwrap();
    assert!(report.is_success());
    assert_eq!(report.cases.len(), 3);
    for c in &report.cases {
        assert!(c.degenerate);
        let map = read_map(&out.join(format!("{}.npy", c.case_id))).unwrap();
        assert!(map.values().iter().all(|&v| v == 0.0));
        assert!(out.join(format!("{}.png", c.case_id)).is_file());
        let timing: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join(format!("{}.timing.json", c.case_id))).unwrap())
                .unwrap();
        for key in ["cut_s", "sim_s", "gnt_s", "flt_s", "total_s"] {
            assert!(timing[key].as_f64().unwrap() >= 0.0);
        }
    }
}

#[test]
fn broken_image_is_a_per_case_failure() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    std::fs::remove_file(dir.path().join("b.png")).unwrap();
    let report = cmd_generate(&config(manifest.clone(), dir.path().join("out"), ScorerSpec::GtOracle)).unwrap();
    assert!(!report.is_success());
    assert_eq!(report.failures, 1);
    let failed = report.cases.iter().find(|c| c.case_id == "b-1").unwrap();
    assert_eq!(failed.error.as_ref().unwrap().kind, "file-missing");

    let run = cmd_run(&config(manifest, dir.path().join("run"), ScorerSpec::GtOracle)).unwrap();
    assert_eq!(run.failures, 1);
    assert_eq!(run.aggregate.as_ref().unwrap().count, 2);
}

#[test]
fn evaluate_matches_metrics_module() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = fixture(dir.path());
    let maps = dir.path().join("maps");
    cmd_generate(&config(manifest_path.clone(), maps.clone(), ScorerSpec::GtOracle)).unwrap();
    let report = cmd_evaluate(&maps, &manifest_path, &MetricParams::default(), &maps, 1).unwrap();
    assert!(report.is_success());

    let manifest: Manifest = selo_core::load_manifest(&manifest_path).unwrap();
    for c in &report.cases {
        let (_, case) = manifest.find_case(&c.case_id).unwrap();
        let map = read_map(&maps.join(format!("{}.npy", c.case_id))).unwrap();
        let direct = evaluate_case(&map, case, &MetricParams::default()).unwrap();
        assert_eq!(c.scores.as_ref().unwrap().indicators, direct.indicators);
        assert!(c.scores.as_ref().unwrap().timings.is_some());
    }
    // aggregate recomputed from the rows equals the emitted one exactly
    let rows: Vec<_> = report.cases.iter().filter_map(|c| c.scores.clone()).collect();
    assert_eq!(
        selo_core::metrics::aggregate(&rows).unwrap(),
        report.aggregate.clone().unwrap()
    );

    let text = std::fs::read_to_string(maps.join("report.json")).unwrap();
    assert_eq!(RunReport::from_json(&text).unwrap(), report);
    let csv = std::fs::read_to_string(maps.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 + 1);
    assert!(csv.starts_with("Case,R_su,R_da,R_as,R_mi\na-1,"));
}

#[test]
fn evaluate_empty_directory_reports_missing_maps() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let report = cmd_evaluate(&empty, &manifest, &MetricParams::default(), &empty, 0).unwrap();
    assert_eq!(report.failures, 3);
    assert!(report.aggregate.is_none());
    assert!(report
        .cases
        .iter()
        .all(|c| c.error.as_ref().unwrap().kind == "missing-map"));
}

#[test]
fn evaluate_rejects_wrong_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    let maps = dir.path().join("maps");
    std::fs::create_dir(&maps).unwrap();
    let small = selo_core::ProbabilityMap::zeros(10, 10).unwrap();
    for id in ["a-1", "a-2", "b-1"] {
        selo_core::io::write_npy(&small, &maps.join(format!("{id}.npy"))).unwrap();
    }
    let report = cmd_evaluate(&maps, &manifest, &MetricParams::default(), &maps, 0).unwrap();
    assert!(report
        .cases
        .iter()
        .all(|c| c.error.as_ref().unwrap().kind == "dim-mismatch"));
}

#[test]
fn reruns_are_identical_modulo_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    let spec = ScorerSpec::SeededRandom { seed: None };
    let mut cfg = config(manifest, dir.path().join("one"), spec);
    let first = cmd_run(&cfg).unwrap();
    cfg.out_dir = dir.path().join("two");
    cfg.workers = 1;
    let second = cmd_run(&cfg).unwrap();
    assert_eq!(
        strip_volatile(&first.to_json()).unwrap(),
        strip_volatile(&second.to_json()).unwrap()
    );
    for id in ["a-1", "a-2", "b-1"] {
        let a = std::fs::read(dir.path().join("one").join(format!("{id}.npy"))).unwrap();
        let b = std::fs::read(dir.path().join("two").join(format!("{id}.npy"))).unwrap();
        assert_eq!(a, b);
    }
    cfg.seed = 12;
    cfg.out_dir = dir.path().join("three");
    let third = cmd_run(&cfg).unwrap();
    assert_ne!(third.aggregate, first.aggregate);
}

#[test]
fn render_flag_writes_overlays() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    let mut cfg = config(manifest, dir.path().join("out"), ScorerSpec::GtOracle);
    cfg.render = true;
    cmd_generate(&cfg).unwrap();
    let overlay = image::open(dir.path().join("out/a-1.overlay.png")).unwrap().to_rgb8();
    assert_eq!(overlay.dimensions(), (240, 200));
    assert_eq!(overlay.get_pixel(20, 45).0, [0, 255, 0]);
}

#[test]
fn stats_command() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    let s = cmd_stats(&manifest).unwrap();
    assert_eq!((s.sample_number, s.image_number), (3, 2));
    assert!((s.ave_region_number - 4.0 / 3.0).abs() < 1e-12);
}
