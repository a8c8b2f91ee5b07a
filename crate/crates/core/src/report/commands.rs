use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    case_file_stem, indicator_table, unix_now, CaseError, CaseReport, ConfigEcho, RunReport, TOOL_NAME, TOOL_VERSION,
};
use crate::annotations::{
    load_manifest, manifest_stats, rasterize_region, region_center, ImageEntry, Manifest, ManifestStats, TestCase,
};
use crate::error::{Error, Result};
use crate::io::{read_map, write_npy, write_png16, RasterRef};
use crate::map::Mask;
use crate::metrics::{evaluate_case, AggregateSummary, MetricParams};
use crate::pipeline::{generate_selo_map, PipelineConfig, SeloOutput, StageTimings};
use crate::render::render_to_file;
use crate::scorer::{CaseContext, ScorerFactory, ScorerSpec};

/// Scale sets replayed by the ablation mode, named `s1` to `s6`.
pub const ABLATION_SCALE_SETS: [(&str, &[u32]); 6] = [
    ("s1", &[128, 256]),
    ("s2", &[256, 512]),
    ("s3", &[512, 768]),
    ("s4", &[128, 256, 512]),
    ("s5", &[256, 512, 768]),
    ("s6", &[128, 256, 512, 768]),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub scorer: ScorerSpec,
    pub pipeline: PipelineConfig,
    pub params: MetricParams,
    pub out_dir: PathBuf,
    /// Also write an overlay PNG per case.
    pub render: bool,
    pub seed: u64,
    /// Cases processed concurrently; 0 picks the number of CPUs.
    pub workers: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.manifest.is_file() {
            return Err(Error::FileMissing(self.manifest.clone()));
        }
        self.scorer.validate()?;
        self.pipeline.validate()?;
        self.params.validate()
    }

    fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            manifest: self.manifest.display().to_string(),
            maps_dir: None,
            scorer: Some(self.scorer.clone()),
            pipeline: Some(self.pipeline.clone()),
            params: self.params.clone(),
            seed: Some(self.seed),
        }
    }
}

/// Result of generating one case's map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<StageTimings>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tile_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub median_kernel: Option<usize>,
    #[serde(default)]
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub skipped_scales: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<CaseError>,
}

impl CaseOutcome {
    fn failed(case_id: &str, e: &Error) -> Self {
        Self {
            case_id: case_id.to_string(),
            timings: None,
            tile_count: None,
            median_kernel: None,
            degenerate: false,
            skipped_scales: Vec::new(),
            error: Some(e.into()),
        }
    }

    fn generated(case_id: &str, out: &SeloOutput) -> Self {
        Self {
            case_id: case_id.to_string(),
            timings: Some(out.timings),
            tile_count: Some(out.tile_count),
            median_kernel: Some(out.median_kernel),
            degenerate: out.degenerate,
            skipped_scales: out.skipped_scales.clone(),
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateReport {
    pub tool: String,
    pub version: String,
    pub generated_at: u64,
    pub config: ConfigEcho,
    pub cases: Vec<CaseOutcome>,
    pub failures: usize,
}

impl GenerateReport {
    pub fn is_success(&self) -> bool {
        self.failures == 0
    }
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs the generation pipeline for one case and writes its outputs.
fn generate_case(
    cfg: &RunConfig,
    base: &Path,
    factory: &ScorerFactory,
    entry: &ImageEntry,
    case: &TestCase,
) -> Result<SeloOutput> {
    let image = RasterRef::probe_expecting(entry.resolve(base), entry.height, entry.width)?;
    let masks = case
        .regions
        .iter()
        .map(|p| rasterize_region(p, entry.height, entry.width))
        .collect::<Result<Vec<_>>>()?;
    let union = Mask::union(&masks)?;
    let centers: Vec<_> = case.regions.iter().map(region_center).collect();
    let mut scorer = factory.instantiate(&CaseContext {
        case_id: &case.case_id,
        height: entry.height,
        width: entry.width,
        gt_mask: union.as_ref(),
        gt_centers: &centers,
        seed: cfg.seed,
    })?;
    let out = generate_selo_map(&image, &case.query, scorer.as_mut(), &cfg.pipeline)?;
    if out.degenerate {
        warn!("case {}: SeLo map is constant, written as all zeros", case.case_id);
    }

    let stem = case_file_stem(&case.case_id);
    write_npy(&out.map, &cfg.out_dir.join(format!("{stem}.npy")))?;
    write_png16(&out.map, &cfg.out_dir.join(format!("{stem}.png")))?;
    write_text(&cfg.out_dir.join(format!("{stem}.timing.json")), &out.timings.to_json())?;
    if cfg.render {
        render_to_file(
            &image.path,
            &out.map,
            &case.regions,
            &cfg.out_dir.join(format!("{stem}.overlay.png")),
        )?;
    }
    Ok(out)
}

fn run_cases<T: Send>(
    manifest: &Manifest,
    workers: usize,
    f: impl Fn(&ImageEntry, &TestCase) -> T + Sync + Send,
) -> Result<Vec<T>> {
    let jobs: Vec<_> = manifest.cases().collect();
    with_workers(workers, || jobs.par_iter().map(|(e, c)| f(e, c)).collect())
}

/// Generates and saves a SeLo map, its 16-bit PNG and its timing file for
/// every case. Failures are recorded per case; the run continues.
pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateReport> {
    cfg.validate()?;
    let manifest = load_manifest(&cfg.manifest)?;
    ensure_dir(&cfg.out_dir)?;
    let base = base_dir(&cfg.manifest);
    let factory = ScorerFactory::new(cfg.scorer.clone())?;

    let mut cases = run_cases(&manifest, cfg.workers, |entry, case| {
        match generate_case(cfg, &base, &factory, entry, case) {
            Ok(out) => CaseOutcome::generated(&case.case_id, &out),
            Err(e) => {
                warn!("case {} failed: {e}", case.case_id);
                CaseOutcome::failed(&case.case_id, &e)
            }
        }
    })?;
    cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    let failures = cases.iter().filter(|c| c.error.is_some()).count();
    let report = GenerateReport {
        tool: TOOL_NAME.to_string(),
        version: TOOL_VERSION.to_string(),
        generated_at: unix_now(),
        config: cfg.echo(),
        cases,
        failures,
    };
    write_text(
        &cfg.out_dir.join("generate.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    info!("generated {} maps, {failures} failures", report.cases.len() - failures);
    Ok(report)
}

fn find_map(maps_dir: &Path, case_id: &str) -> Result<PathBuf> {
    let stem = case_file_stem(case_id);
    ["npy", "png"]
        .iter()
        .map(|ext| maps_dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::MissingMap {
            case_id: case_id.to_string(),
            dir: maps_dir.to_path_buf(),
        })
}

fn evaluate_from_dir(
    maps_dir: &Path,
    entry: &ImageEntry,
    case: &TestCase,
    params: &MetricParams,
) -> Result<CaseReport> {
    let map = read_map(&find_map(maps_dir, &case.case_id)?)?;
    if map.dims() != (entry.height, entry.width) {
        return Err(Error::DimMismatch {
            expected_h: entry.height,
            expected_w: entry.width,
            actual_h: map.height(),
            actual_w: map.width(),
        });
    }
    let mut scores = evaluate_case(&map, case, params)?;
    let timing = maps_dir.join(format!("{}.timing.json", case_file_stem(&case.case_id)));
    if timing.is_file() {
        let text = std::fs::read_to_string(&timing).map_err(|e| Error::io(&timing, e))?;
        scores.timings = Some(serde_json::from_str(&text)?);
    }
    Ok(CaseReport {
        case_id: case.case_id.clone(),
        scores: Some(scores),
        error: None,
    })
}

fn failed_case(case: &TestCase, e: &Error) -> CaseReport {
    warn!("case {} failed: {e}", case.case_id);
    CaseReport {
        case_id: case.case_id.clone(),
        scores: None,
        error: Some(e.into()),
    }
}

/// Scores the maps found in `maps_dir` (`<case>.npy` or `<case>.png`) and
/// writes `report.json` and `report.csv` into `out_dir`.
pub fn cmd_evaluate(
    maps_dir: &Path,
    manifest_path: &Path,
    params: &MetricParams,
    out_dir: &Path,
    workers: usize,
) -> Result<RunReport> {
    params.validate()?;
    if !maps_dir.is_dir() {
        return Err(Error::FileMissing(maps_dir.to_path_buf()));
    }
    let manifest = load_manifest(manifest_path)?;
    let cases = run_cases(&manifest, workers, |entry, case| {
        evaluate_from_dir(maps_dir, entry, case, params).unwrap_or_else(|e| failed_case(case, &e))
    })?;
    let echo = ConfigEcho {
        manifest: manifest_path.display().to_string(),
        maps_dir: Some(maps_dir.display().to_string()),
        scorer: None,
        pipeline: None,
        params: params.clone(),
        seed: None,
    };
    let report = RunReport::assemble(echo, cases);
    ensure_dir(out_dir)?;
    report.write_to(out_dir)?;
    Ok(report)
}

/// Generation followed by evaluation of the in-memory maps.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let manifest = load_manifest(&cfg.manifest)?;
    ensure_dir(&cfg.out_dir)?;
    let base = base_dir(&cfg.manifest);
    let factory = ScorerFactory::new(cfg.scorer.clone())?;

    let cases = run_cases(&manifest, cfg.workers, |entry, case| {
        let scored = generate_case(cfg, &base, &factory, entry, case).and_then(|out| {
            let mut scores = evaluate_case(&out.map, case, &cfg.params)?;
            scores.timings = Some(out.timings);
            Ok(scores)
        });
        match scored {
            Ok(scores) => CaseReport {
                case_id: case.case_id.clone(),
                scores: Some(scores),
                error: None,
            },
            Err(e) => failed_case(case, &e),
        }
    })?;
    let report = RunReport::assemble(cfg.echo(), cases);
    report.write_to(&cfg.out_dir)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub scales: Vec<u32>,
    pub aggregate: Option<AggregateSummary>,
    pub failures: usize,
    /// Wall time of the whole sub-run, in seconds.
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub tool: String,
    pub version: String,
    pub generated_at: u64,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn is_success(&self) -> bool {
        self.rows.iter().all(|r| r.failures == 0)
    }

    /// Table with columns `Scales, R_su, R_da, R_as, R_mi, Total_s`.
    pub fn to_csv(&self) -> String {
        indicator_table(
            "Scales",
            self.rows
                .iter()
                .map(|r| (r.name.as_str(), r.aggregate.as_ref().map(|a| &a.mean), Some(r.total_s))),
        )
    }
}

/// Replays the six scale sets as sub-runs in `out_dir/s1` … `out_dir/s6`.
pub fn cmd_run_ablation(cfg: &RunConfig) -> Result<AblationReport> {
    let mut rows = Vec::new();
    for (name, scales) in ABLATION_SCALE_SETS {
        let sub = RunConfig {
            pipeline: PipelineConfig {
                scales: scales.to_vec(),
                ..cfg.pipeline.clone()
            },
            out_dir: cfg.out_dir.join(name),
            ..cfg.clone()
        };
        let started = Instant::now();
        let report = cmd_run(&sub)?;
        rows.push(AblationRow {
            name: name.to_string(),
            scales: scales.to_vec(),
            aggregate: report.aggregate,
            failures: report.failures,
            total_s: started.elapsed().as_secs_f64(),
        });
    }
    let report = AblationReport {
        tool: TOOL_NAME.to_string(),
        version: TOOL_VERSION.to_string(),
        generated_at: unix_now(),
        rows,
    };
    write_text(
        &cfg.out_dir.join("ablation.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    write_text(&cfg.out_dir.join("ablation.csv"), &report.to_csv())?;
    Ok(report)
}

/// Renders the overlay of one case's map on its source image.
pub fn cmd_render(
    map_path: &Path,
    manifest_path: &Path,
    case_id: &str,
    image: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let (entry, case) = manifest
        .find_case(case_id)
        .ok_or_else(|| Error::UnknownCase(case_id.to_string()))?;
    let image = match image {
        Some(p) => p.to_path_buf(),
        None => entry.resolve(&base_dir(manifest_path)),
    };
    let map = read_map(map_path)?;
    render_to_file(&image, &map, &case.regions, out)
}

pub fn cmd_stats(manifest_path: &Path) -> Result<ManifestStats> {
    manifest_stats(&load_manifest(manifest_path)?)
}
