mod common;

use selo_core::report::{strip_volatile, RunReport};

use common::{fixture, p, selo, write_image, STUB};

fn stdout(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_prints_table_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    let out = dir.path().join("out");
    let o = selo(&[
        "run",
        "--manifest",
        p(&manifest),
        "--scorer",
        "gt-oracle",
        "--scales",
        "32,64",
        "--out",
        p(&out),
        "--workers",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "Case,R_su,R_da,R_as,R_mi");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("mean,"));
    assert_eq!(std::fs::read_to_string(out.join("report.csv")).unwrap(), text);
    let report = RunReport::from_json(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.tool, "selo");
    assert_eq!(report.cases.len(), 3);
    assert_eq!(report.config.pipeline.as_ref().unwrap().scales, [32, 64]);
}

#[test]
fn partial_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    std::fs::remove_file(dir.path().join("b.png")).unwrap();
    let out = dir.path().join("out");
    let o = selo(&[
        "run",
        "--manifest",
        p(&manifest),
        "--scorer",
        "gt-oracle",
        "--scales",
        "32,64",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("b-1,NA,NA,NA,NA"));
}

#[test]
fn fatal_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = dir.path().join("out");
    let o = selo(&[
        "run",
        "--manifest",
        p(&missing),
        "--scorer",
        "gt-oracle",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:"), "{}", stderr(&o));

    let manifest = fixture(dir.path());
    let o = selo(&[
        "run",
        "--manifest",
        p(&manifest),
        "--scorer",
        "gt-oracle",
        "--out",
        p(&out),
        "--median-kernel",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = selo(&[
        "run",
        "--manifest",
        p(&manifest),
        "--scorer",
        "gt-oracle",
        "--out",
        p(&out),
        "--alpha",
        "-1",
    ]);
    assert_eq!(o.status.code(), Some(2));

    // clap's own usage errors also use exit code 2
    let o = selo(&[
        "run",
        "--manifest",
        p(&manifest),
        "--scorer",
        "no-such-scorer",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn generate_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    let maps = dir.path().join("maps");
    let o = selo(&[
        "generate",
        "--manifest",
        p(&manifest),
        "--scorer",
        "seeded-random:3",
        "--scales",
        "32,64",
        "--out",
        p(&maps),
        "--render",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);
    for id in ["a-1", "a-2", "b-1"] {
        for ext in ["npy", "png", "timing.json", "overlay.png"] {
            assert!(maps.join(format!("{id}.{ext}")).is_file(), "{id}.{ext}");
        }
    }
    assert!(maps.join("generate.json").is_file());

    let reports = dir.path().join("reports");
    let o = selo(&[
        "evaluate",
        "--maps",
        p(&maps),
        "--manifest",
        p(&manifest),
        "--out",
        p(&reports),
        "--rho",
        "0.4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = RunReport::from_json(&std::fs::read_to_string(reports.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.config.params.rho, 0.4);
    assert!(report
        .cases
        .iter()
        .all(|c| c.scores.as_ref().unwrap().timings.is_some()));

    // a missing map fails only that case
    std::fs::remove_file(maps.join("a-2.npy")).unwrap();
    std::fs::remove_file(maps.join("a-2.png")).unwrap();
    let o = selo(&["evaluate", "--maps", p(&maps), "--manifest", p(&manifest)]);
    assert_eq!(o.status.code(), Some(1));
    let report = RunReport::from_json(&std::fs::read_to_string(maps.join("report.json")).unwrap()).unwrap();
    let failed = report.cases.iter().find(|c| c.case_id == "a-2").unwrap();
    assert_eq!(failed.error.as_ref().unwrap().kind, "missing-map");
}

#[test]
fn params_file_and_override() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    let params = dir.path().join("params.json");
    std::fs::write(&params, r#"{"alpha": 0.5, "nms_window": 3}"#).unwrap();
    let out = dir.path().join("out");
    let o = selo(&[
        "run",
        "--manifest",
        p(&manifest),
        "--scorer",
        "gt-oracle",
        "--scales",
        "32,64",
        "--out",
        p(&out),
        "--params",
        p(&params),
        "--nms-window",
        "7",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = RunReport::from_json(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.config.params.alpha, 0.5);
    assert_eq!(report.config.params.nms_window, 7);

    std::fs::write(&params, r#"{"alpah": 0.5}"#).unwrap();
    let o = selo(&[
        "run",
        "--manifest",
        p(&manifest),
        "--scorer",
        "gt-oracle",
        "--out",
        p(&out),
        "--params",
        p(&params),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn external_scorer_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    let scorer = format!("external:{STUB} --mode hash");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = selo(&[
            "run",
            "--manifest",
            p(&manifest),
            "--scorer",
            &scorer,
            "--scales",
            "32,64",
            "--out",
            p(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read_to_string(out.join("report.json")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(strip_volatile(&a).unwrap(), strip_volatile(&b).unwrap());
}

#[test]
fn render_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path());
    let maps = dir.path().join("maps");
    let o = selo(&[
        "generate",
        "--manifest",
        p(&manifest),
        "--scorer",
        "gt-oracle",
        "--scales",
        "32,64",
        "--out",
        p(&maps),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let overlay = dir.path().join("overlay.png");
    let o = selo(&[
        "render",
        "--map",
        p(&maps.join("b-1.npy")),
        "--manifest",
        p(&manifest),
        "--case",
        "b-1",
        "--out",
        p(&overlay),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let img = image::open(&overlay).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (160, 160));

    let o = selo(&[
        "render",
        "--map",
        p(&maps.join("b-1.npy")),
        "--manifest",
        p(&manifest),
        "--case",
        "zz",
        "--out",
        p(&overlay),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = selo(&["stats", "--manifest", p(&manifest)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("Sample Number\t3"));
    assert!(text.contains("Image Number\t2"));
    assert!(text.contains("Ave Region Number\t1.33"));
    let o = selo(&["stats", "--manifest", p(&manifest), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["sample_number"], 3);
}

#[test]
fn ablation_writes_six_sub_runs() {
    let dir = tempfile::tempdir().unwrap();
    write_image(&dir.path().join("big.png"), 800, 800);
    let manifest = dir.path().join("manifest.json");
    std::fs::write(
        &manifest,
        r#"{"version": 1, "images": [{"file": "big.png", "height": 800, "width": 800, "cases": [
            {"id": "big-1", "query": "the stadium", "regions": [[[300, 300], [420, 300], [420, 380], [300, 380]]]}
        ]}]}"#,
    )
    .unwrap();
    let out = dir.path().join("abl");
    let o = selo(&[
        "run",
        "--ablation",
        "--manifest",
        p(&manifest),
        "--scorer",
        "gt-oracle",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "Scales,R_su,R_da,R_as,R_mi,Total_s");
    let names: Vec<_> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["s1", "s2", "s3", "s4", "s5", "s6"]);
    for name in names {
        assert!(out.join(name).join("report.json").is_file());
    }
    assert!(out.join("ablation.json").is_file());
    assert!(out.join("ablation.csv").is_file());
}
