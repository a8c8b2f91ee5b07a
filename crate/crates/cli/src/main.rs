use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use selo_core::metrics::MetricParams;
use selo_core::pipeline::{MedianKernel, PipelineConfig};
use selo_core::report::{self, RunConfig};
use selo_core::ScorerSpec;

/// Semantic localization maps for large remote-sensing images.
///
/// Set SELO_LOG (error, warn, info, debug, trace) to control log output.
#[derive(Parser)]
#[command(name = "selo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a SeLo map for every case in a manifest.
    Generate(RunArgs),
    /// Score existing maps against a manifest.
    Evaluate(EvaluateArgs),
    /// Generate and evaluate in one go.
    Run {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        metrics: MetricArgs,
        /// Replay the scale sets s1..s6 as separate sub-runs.
        #[arg(long)]
        ablation: bool,
    },
    /// Overlay a map on its source image with ground-truth outlines.
    Render {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        case: String,
        /// Source image; defaults to the one named in the manifest.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print testset statistics of a manifest.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// constant:V, seeded-random[:SEED], gt-oracle, gaussian-target:SIGMA,
    /// gaussian-target:X,Y,SIGMA, external:COMMAND ARGS..., or a JSON object.
    #[arg(long)]
    scorer: ScorerSpec,
    #[arg(long, value_delimiter = ',', default_values_t = [256u32, 512, 768])]
    scales: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0f64, 0.5])]
    offsets: Vec<f64>,
    /// Odd kernel size or "auto".
    #[arg(long, default_value = "auto")]
    median_kernel: MedianKernel,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cases processed in parallel; 0 uses every CPU.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Also write an overlay PNG per case.
    #[arg(long)]
    render: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory holding <case>.npy or <case>.png maps.
    #[arg(long)]
    maps: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Where report.json and report.csv go; defaults to the maps directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    metrics: MetricArgs,
}

/// Metric parameters: a JSON file, then individual overrides.
#[derive(Args)]
struct MetricArgs {
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    expansion: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    nms_window: Option<usize>,
}

impl MetricArgs {
    fn resolve(&self) -> Result<MetricParams> {
        let mut p = match &self.params {
            Some(path) => MetricParams::from_json_file(path)?,
            None => MetricParams::default(),
        };
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut p.alpha, self.alpha);
        set(&mut p.eps, self.eps);
        set(&mut p.expansion, self.expansion);
        set(&mut p.beta, self.beta);
        set(&mut p.eta, self.eta);
        set(&mut p.rho, self.rho);
        if let Some(w) = self.nms_window {
            p.nms_window = w;
        }
        p.validate()?;
        Ok(p)
    }
}

impl RunArgs {
    fn config(self, params: MetricParams) -> RunConfig {
        RunConfig {
            manifest: self.manifest,
            scorer: self.scorer,
            pipeline: PipelineConfig {
                scales: self.scales,
                offsets: self.offsets,
                median_kernel: self.median_kernel,
            },
            params,
            out_dir: self.out,
            render: self.render,
            seed: self.seed,
            workers: self.workers,
        }
    }
}

fn exit_for(success: bool) -> ExitCode {
    if success {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate(args) => {
            let cfg = args.config(MetricParams::default());
            let report = report::cmd_generate(&cfg)?;
            for c in &report.cases {
                match (&c.error, &c.timings) {
                    (Some(e), _) => println!("{}\tfailed\t{}: {}", c.case_id, e.kind, e.message),
                    (None, Some(t)) => println!("{}\tok\t{:.3}s", c.case_id, t.total),
                    (None, None) => println!("{}\tok", c.case_id),
                }
            }
            Ok(exit_for(report.is_success()))
        }
        Command::Evaluate(args) => {
            let params = args.metrics.resolve()?;
            let out = args.out.unwrap_or_else(|| args.maps.clone());
            let report = report::cmd_evaluate(&args.maps, &args.manifest, &params, &out, args.workers)?;
            print!("{}", report.to_csv());
            Ok(exit_for(report.is_success()))
        }
        Command::Run { run, metrics, ablation } => {
            let cfg = run.config(metrics.resolve()?);
            if ablation {
                let report = report::cmd_run_ablation(&cfg)?;
                print!("{}", report.to_csv());
                Ok(exit_for(report.is_success()))
            } else {
                let report = report::cmd_run(&cfg)?;
                print!("{}", report.to_csv());
                Ok(exit_for(report.is_success()))
            }
        }
        Command::Render {
            map,
            manifest,
            case,
            image,
            out,
        } => {
            report::cmd_render(&map, &manifest, &case, image.as_deref(), &out)
                .with_context(|| format!("rendering case {case}"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Stats { manifest, json } => {
            let s = report::cmd_stats(&manifest)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&s)?);
            } else {
                println!("Word Number\t{}", s.word_number);
                println!("Sample Number\t{}", s.sample_number);
                // inputs are 8-bit RGB by contract
                println!("Channel Number\t3");
                println!("Image Number\t{}", s.image_number);
                println!("Caption Ave Length\t{:.2}", s.caption_ave_length);
                println!("Ave Region Number\t{:.2}", s.ave_region_number);
                println!("Ave Attention Ratio\t{:.3}", s.ave_attention_ratio);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SELO_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
