use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use maskfuse::clicks::{parse_clicks, ClickFormat};
use maskfuse::config::RunConfig;
use maskfuse::contrastive::ClassPrompts;
use maskfuse::eval::{load_manifest, per_class_csv, write_report, ManifestRecord, Task};
use maskfuse::io::{read_label_map, read_mask, read_rgb, write_rgb};
use maskfuse::pipeline::{cmd_clickgen, cmd_eval, cmd_ovss, cmd_refer, RunOutcome};
use maskfuse::providers::oracle::{write_corpus, SceneSpec};
use maskfuse::{viz, Error};

#[derive(Parser)]
#[command(name = "maskfuse", version, about = "Training-free segmentation orchestration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Open-vocabulary semantic segmentation over a manifest.
    Ovss(RunArgs),
    /// Click-prompted referring / reasoning segmentation over a manifest.
    Refer(RunArgs),
    /// Export click supervision generated from ground-truth masks.
    Clickgen {
        #[command(flatten)]
        run: RunArgs,
        /// Output JSONL (default: <output_dir>/clicks.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score saved predictions against a manifest.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Directory of `<image stem>.png` predictions.
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Render PNG overlays.
    Viz {
        #[command(subcommand)]
        what: VizCommand,
    },
    /// Write a synthetic scene corpus with a manifest.
    Scene {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 96)]
        width: u32,
        #[arg(long, default_value_t = 64)]
        height: u32,
        /// Classes including background.
        #[arg(long, default_value_t = 4)]
        classes: u32,
        #[arg(long, default_value_t = 4)]
        shapes: usize,
        /// ovss, refer or reason.
        #[arg(long, default_value = "ovss")]
        task: String,
    },
}

#[derive(Subcommand)]
enum VizCommand {
    /// One overlay per step of every record in a click export.
    Trace {
        #[arg(long)]
        clicks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prediction overlays for every record of a manifest.
    Labels {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// A single image with an optional mask and clicks.
    Mask {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Click text, e.g. "Positive: [(3, 4)], Negative: []".
        #[arg(long)]
        clicks: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON-lines manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Dataset name for records without one.
    #[arg(long, default_value = "default")]
    dataset: String,
    /// Report path (default: <output_dir>/report.json).
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigFlags,
}

/// Command-line overrides, applied over the config file and `MF_*` variables.
#[derive(Args)]
struct ConfigFlags {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    probability_backend: Option<String>,
    #[arg(long)]
    probability_endpoint: Option<String>,
    #[arg(long)]
    proposals_backend: Option<String>,
    #[arg(long)]
    proposals_endpoint: Option<String>,
    #[arg(long)]
    segment_backend: Option<String>,
    #[arg(long)]
    segment_endpoint: Option<String>,
    #[arg(long)]
    clicks_backend: Option<String>,
    #[arg(long)]
    clicks_endpoint: Option<String>,
    #[arg(long)]
    provider_timeout_s: Option<f64>,
    #[arg(long)]
    provider_concurrency: Option<usize>,
    #[arg(long, env = "MF_BEARER_TOKEN", hide_env_values = true)]
    bearer_token: Option<String>,
    #[arg(long)]
    grid_n: Option<u32>,
    #[arg(long)]
    window: Option<u32>,
    #[arg(long)]
    stride: Option<u32>,
    #[arg(long)]
    tile_cap: Option<u32>,
    #[arg(long)]
    clip_long_side: Option<u32>,
    #[arg(long)]
    debias_scale: Option<f32>,
    /// background or pixel-argmax.
    #[arg(long)]
    uncovered: Option<String>,
    #[arg(long)]
    max_clicks: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// sample or argmax.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    clicks_max: Option<usize>,
    #[arg(long)]
    strict_clicks: Option<bool>,
    /// text, json or auto.
    #[arg(long)]
    click_format: Option<String>,
    #[arg(long)]
    vote_ties_foreground: Option<bool>,
    /// ideal or erode1.
    #[arg(long)]
    oracle_behavior: Option<String>,
    #[arg(long)]
    oracle_noise: Option<f32>,
    #[arg(long)]
    oracle_exact_proposals: Option<bool>,
    #[arg(long)]
    oracle_distractors: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    fail_fast: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl ConfigFlags {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut add = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        fn s<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(T::to_string)
        }
        add("probability_backend", s(&self.probability_backend));
        add("probability_endpoint", s(&self.probability_endpoint));
        add("proposals_backend", s(&self.proposals_backend));
        add("proposals_endpoint", s(&self.proposals_endpoint));
        add("segment_backend", s(&self.segment_backend));
        add("segment_endpoint", s(&self.segment_endpoint));
        add("clicks_backend", s(&self.clicks_backend));
        add("clicks_endpoint", s(&self.clicks_endpoint));
        add("provider_timeout_s", s(&self.provider_timeout_s));
        add("provider_concurrency", s(&self.provider_concurrency));
        add("bearer_token", s(&self.bearer_token));
        add("grid_n", s(&self.grid_n));
        add("window", s(&self.window));
        add("stride", s(&self.stride));
        add("tile_cap", s(&self.tile_cap));
        add("clip_long_side", s(&self.clip_long_side));
        add("debias_scale", s(&self.debias_scale));
        add("uncovered", s(&self.uncovered));
        add("max_clicks", s(&self.max_clicks));
        add("tau", s(&self.tau));
        add("mode", s(&self.mode));
        add("clicks_max", s(&self.clicks_max));
        add("strict_clicks", s(&self.strict_clicks));
        add("click_format", s(&self.click_format));
        add("vote_ties_foreground", s(&self.vote_ties_foreground));
        add("oracle_behavior", s(&self.oracle_behavior));
        add("oracle_noise", s(&self.oracle_noise));
        add("oracle_exact_proposals", s(&self.oracle_exact_proposals));
        add("oracle_distractors", s(&self.oracle_distractors));
        add("seed", s(&self.seed));
        add("workers", s(&self.workers));
        add("fail_fast", self.fail_fast.then(|| "true".to_string()));
        add("output_dir", self.output_dir.as_ref().map(|p| p.display().to_string()));
        out
    }

    fn load(&self) -> maskfuse::Result<RunConfig> {
        RunConfig::load_with(self.config.as_deref(), self.overrides())
    }
}

/// Failure class for exit codes: bad configuration or input is 2, anything
/// else 1.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Manifest { .. } => 2,
            _ => 1,
        };
        Failure(code, e.to_string())
    }
}

fn setup(run: &RunArgs) -> Result<(RunConfig, Vec<ManifestRecord>), Failure> {
    let config = run.config.load().map_err(|e| Failure(2, e.to_string()))?;
    let records = load_manifest(&run.manifest).map_err(|e| Failure(2, e.to_string()))?;
    Ok((config, records))
}

fn emit(outcome: &RunOutcome, config: &RunConfig, report: Option<&Path>) -> Result<u8, Failure> {
    let path = report.map(Path::to_path_buf).unwrap_or_else(|| config.output_dir.join("report.json"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure(1, format!("{}: {e}", dir.display())))?;
    }
    write_report(&path, &outcome.report)?;
    let csv = path.with_extension("csv");
    std::fs::write(&csv, per_class_csv(&outcome.report)).map_err(|e| Failure(1, format!("{}: {e}", csv.display())))?;
    for d in &outcome.report.datasets {
        let miou = d.miou.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        match d.fg_iou {
            Some(fg) => println!("{}: {} items, mIoU {miou}, fg IoU {fg:.4}", d.name, d.items),
            None => println!("{}: {} items, mIoU {miou}", d.name, d.items),
        }
    }
    let skipped = outcome.report.skipped.len() + outcome.report.failed.len();
    if skipped > 0 {
        eprintln!("{skipped} item(s) did not complete; see {}", path.display());
    }
    for (cap, count, example) in &outcome.provider_failures {
        eprintln!("provider {cap}: {count} failure(s), e.g. {example}");
    }
    println!("report: {}", path.display());
    Ok(outcome.exit_code as u8)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Ovss(run) => {
            let (config, records) = setup(&run)?;
            let outcome = cmd_ovss(&config, &records, &run.dataset)?;
            emit(&outcome, &config, run.report.as_deref())
        }
        Command::Refer(run) => {
            let (config, records) = setup(&run)?;
            let outcome = cmd_refer(&config, &records, &run.dataset)?;
            emit(&outcome, &config, run.report.as_deref())
        }
        Command::Eval { run, predictions } => {
            let (config, records) = setup(&run)?;
            let outcome = cmd_eval(&config, &records, &predictions, &run.dataset)?;
            emit(&outcome, &config, run.report.as_deref())
        }
        Command::Clickgen { run, out } => {
            let (config, records) = setup(&run)?;
            let out = out.unwrap_or_else(|| config.output_dir.join("clicks.jsonl"));
            let (summary, code) = cmd_clickgen(&config, &records, &out)?;
            let summary_path = out.with_extension("summary.json");
            let text = serde_json::to_string_pretty(&summary).map_err(Error::from)?;
            std::fs::write(&summary_path, text).map_err(|e| Failure(1, format!("{}: {e}", summary_path.display())))?;
            println!(
                "{} records, mean clicks {}, mean final IoU {}",
                summary.records,
                summary.mean_clicks.map_or("n/a".into(), |v| format!("{v:.4}")),
                summary.mean_final_iou.map_or("n/a".into(), |v| format!("{v:.4}")),
            );
            for issue in &summary.skipped {
                eprintln!("skipped {}: {}", issue.image, issue.reason);
            }
            println!("clicks: {}", out.display());
            Ok(code as u8)
        }
        Command::Viz { what } => run_viz(what),
        Command::Scene { out, count, seed, width, height, classes, shapes, task } => {
            let task: Task = serde_json::from_value(serde_json::Value::String(task.clone()))
                .map_err(|_| Failure(2, format!("unknown task {task:?}")))?;
            if classes < 2 {
                return Err(Failure(2, "--classes must be at least 2".into()));
            }
            let specs: Vec<_> = (0..count)
                .map(|i| SceneSpec::random(seed.wrapping_add(i as u64), width, height, classes, shapes))
                .collect();
            let manifest = write_corpus(&out, &specs, task)?;
            println!("manifest: {}", manifest.display());
            Ok(0)
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn run_viz(what: VizCommand) -> Result<u8, Failure> {
    match what {
        VizCommand::Trace { clicks, out } => {
            let written = viz::render_trace_file(&clicks, &out)?;
            println!("{} overlay(s) in {}", written.len(), out.display());
        }
        VizCommand::Labels { manifest, predictions, out } => {
            let records = load_manifest(&manifest).map_err(|e| Failure(2, e.to_string()))?;
            std::fs::create_dir_all(&out).map_err(|e| Failure(1, format!("{}: {e}", out.display())))?;
            for rec in &records {
                let image = read_rgb(&rec.image)?;
                let pred = predictions.join(format!("{}.png", stem(&rec.image)));
                let overlay = match &rec.classes {
                    Some(classes) => {
                        let prompts = ClassPrompts::load(classes)?;
                        let labels = read_label_map(&pred, prompts.len() as u32, prompts.background())?;
                        viz::render_labels(&image, &labels)?
                    }
                    None => viz::render_overlay(&image, Some(&read_mask(&pred)?), &[])?,
                };
                write_rgb(out.join(format!("{}_overlay.png", stem(&rec.image))), &overlay)?;
            }
            println!("{} overlay(s) in {}", records.len(), out.display());
        }
        VizCommand::Mask { image, mask, clicks, out } => {
            let img = read_rgb(&image)?;
            let mask = mask.map(read_mask).transpose()?;
            let clicks = match clicks {
                Some(text) => parse_clicks(&text, ClickFormat::Auto).map_err(|e| Failure(2, e.to_string()))?,
                None => Default::default(),
            };
            let list: Vec<_> = clicks.iter().copied().collect();
            write_rgb(&out, &viz::render_overlay(&img, mask.as_ref(), &list)?)?;
            println!("overlay: {}", out.display());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
