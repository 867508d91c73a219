//! Command-line front end: filter clouds, synthesize labeled scenes,
//! score rejections, benchmark latency, and export intensity histograms.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or I/O error.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use desmoke::cloud::PointCloud;
use desmoke::error::Error;
use desmoke::eval::{
    benchmark, benchmark_csv, generate_scene, score, EvalMetrics, SceneSpec,
};
use desmoke::intensity::{clip_low_fraction, fit_weibull, intensity_histogram, weibull_pdf, LocationPolicy};
use desmoke::io::{
    load_config, read_cloud_auto, read_labels, write_cloud, write_labels, CloudFormat,
};
use desmoke::pipeline::{process_frame, run_stream, FilterReport, PipelineConfig, PipelineState};

#[derive(Parser)]
#[command(
    name = "desmoke",
    about = "Smoke and dust rejection for LiDAR point clouds",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a cloud file, or a directory of frames as a stream.
    Filter(FilterArgs),
    /// Generate a synthetic labeled scene.
    Synth(SynthArgs),
    /// Score a rejected cloud against ground-truth labels.
    Eval(EvalArgs),
    /// Measure per-frame latency across frame sizes.
    Bench(BenchArgs),
    /// Export an intensity histogram with a fitted model curve.
    Hist(HistArgs),
}

#[derive(Args)]
struct FilterArgs {
    /// Cloud file, or a directory whose files are processed in name order.
    #[arg(long)]
    input: PathBuf,
    /// JSON config; omitted means documented defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write kept points (a directory when input is a directory).
    #[arg(long)]
    kept: Option<PathBuf>,
    /// Where to write rejected points (same convention as --kept).
    #[arg(long)]
    rejected: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Frame rate assumed for directory streams, Hz.
    #[arg(long, default_value_t = 10.0)]
    rate: f64,
}

#[derive(Args)]
struct SynthArgs {
    /// Output cloud path (.csv or .pcd).
    #[arg(long)]
    out: PathBuf,
    /// Optional label sidecar path.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Approximate total point count; omitted means the reference scene.
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// The original (unfiltered) cloud.
    #[arg(long)]
    cloud: PathBuf,
    /// Ground-truth label sidecar for that cloud.
    #[arg(long)]
    labels: PathBuf,
    /// The rejected cloud produced by `filter`.
    #[arg(long)]
    rejected: PathBuf,
    /// Metrics CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated frame sizes.
    #[arg(long, default_value = "1000,5000,30000", value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Latency CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HistArgs {
    /// Cloud whose intensities are histogrammed.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 51)]
    bins: usize,
    /// Keep only the lowest fraction of the intensity range before
    /// fitting, mirroring the pipeline's refit policy. 1 keeps everything.
    #[arg(long, default_value_t = 1.0)]
    clip: f64,
    /// Histogram CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind;
            let code: u8 = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Filter(args) => cmd_filter(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Hist(args) => cmd_hist(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Report envelope for one invocation; `config_source` records whether
/// defaults were in force.
#[derive(Serialize)]
struct ReportDocument {
    config_source: String,
    config: PipelineConfig,
    frames: Vec<FilterReport>,
}

fn load_config_or_default(path: &Option<PathBuf>) -> Result<(PipelineConfig, String), Error> {
    match path {
        Some(p) => Ok((load_config(p)?, p.display().to_string())),
        None => Ok((PipelineConfig::default(), "defaults".to_string())),
    }
}

fn format_for(path: &Path) -> CloudFormat {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        CloudFormat::Csv
    } else {
        CloudFormat::PcdAscii
    }
}

fn write_optional(cloud: &PointCloud, target: &Option<PathBuf>) -> Result<(), Error> {
    if let Some(path) = target {
        write_cloud(cloud, path, format_for(path))?;
    }
    Ok(())
}

fn cmd_filter(args: FilterArgs) -> Result<(), Error> {
    let (cfg, config_source) = load_config_or_default(&args.config)?;
    if args.input.is_dir() {
        return filter_stream(&args, cfg, config_source);
    }

    let cloud = read_cloud_auto(&args.input)?;
    let mut state = PipelineState::new(&cfg)?;
    let result = process_frame(&cloud, &cfg, &mut state)?;
    write_optional(&result.filtered, &args.kept)?;
    write_optional(&result.rejected, &args.rejected)?;
    let doc = ReportDocument {
        config_source,
        config: cfg,
        frames: vec![result.report.clone()],
    };
    emit_report(&doc, &args.report)?;
    eprintln!(
        "{}: kept {} of {} points ({} rejected)",
        cloud.frame_id,
        result.filtered.len(),
        cloud.len(),
        result.rejected.len()
    );
    Ok(())
}

fn filter_stream(args: &FilterArgs, cfg: PipelineConfig, config_source: String) -> Result<(), Error> {
    if !(args.rate.is_finite() && args.rate > 0.0) {
        return Err(Error::Stream(format!(
            "frame rate must be positive, got {}",
            args.rate
        )));
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&args.input)
        .map_err(|e| Error::Io {
            path: args.input.clone(),
            source: e,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("csv") || e.eq_ignore_ascii_case("pcd"))
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Error::Stream(format!(
            "{} holds no .pcd or .csv frames",
            args.input.display()
        )));
    }
    let mut frames = Vec::with_capacity(entries.len());
    for (i, path) in entries.iter().enumerate() {
        let mut cloud = read_cloud_auto(path)?;
        cloud.timestamp = Some(i as f64 / args.rate);
        frames.push(cloud);
    }
    let results = run_stream(&frames, &cfg)?;

    for target in [&args.kept, &args.rejected].into_iter().flatten() {
        std::fs::create_dir_all(target).map_err(|e| Error::Io {
            path: target.clone(),
            source: e,
        })?;
    }
    let mut reports = Vec::with_capacity(results.len());
    for (path, result) in entries.iter().zip(&results) {
        let name = path.file_name().expect("directory entries have names");
        if let Some(dir) = &args.kept {
            let out = dir.join(name);
            write_cloud(&result.filtered, &out, format_for(&out))?;
        }
        if let Some(dir) = &args.rejected {
            let out = dir.join(name);
            write_cloud(&result.rejected, &out, format_for(&out))?;
        }
        reports.push(result.report.clone());
    }
    let updates = reports.iter().filter(|r| r.adaptive.updated).count();
    let doc = ReportDocument {
        config_source,
        config: cfg,
        frames: reports,
    };
    emit_report(&doc, &args.report)?;
    eprintln!(
        "stream of {} frames processed, {updates} adaptive updates",
        results.len()
    );
    Ok(())
}

fn emit_report(doc: &ReportDocument, target: &Option<PathBuf>) -> Result<(), Error> {
    let Some(path) = target else { return Ok(()) };
    let text = serde_json::to_string_pretty(doc)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let spec = match args.size {
        Some(total) => SceneSpec::sized(total, args.seed),
        None => SceneSpec::desk_default(args.seed),
    };
    let scene = generate_scene(&spec)?;
    write_cloud(&scene.cloud, &args.out, format_for(&args.out))?;
    if let Some(labels) = &args.labels {
        write_labels(&scene.labels, labels)?;
    }
    eprintln!(
        "wrote {} points ({} aerosol) to {}",
        scene.cloud.len(),
        scene.count(desmoke::eval::PointLabel::Aerosol),
        args.out.display()
    );
    Ok(())
}

/// Maps each rejected point back to its index in the original cloud by
/// exact bit pattern, consuming duplicates in order.
fn rejected_indices(original: &PointCloud, rejected: &PointCloud) -> Result<Vec<usize>, Error> {
    let key = |p: &desmoke::Point| -> [u64; 4] {
        [
            p.x.to_bits(),
            p.y.to_bits(),
            p.z.to_bits(),
            p.intensity.to_bits(),
        ]
    };
    let mut by_value: HashMap<[u64; 4], VecDeque<usize>> = HashMap::new();
    for (i, p) in original.points.iter().enumerate() {
        by_value.entry(key(p)).or_default().push_back(i);
    }
    let mut out = Vec::with_capacity(rejected.len());
    for (row, p) in rejected.points.iter().enumerate() {
        let slot = by_value.get_mut(&key(p)).and_then(|q| q.pop_front());
        match slot {
            Some(i) => out.push(i),
            None => {
                return Err(Error::Eval(format!(
                    "rejected point {row} does not occur in the original cloud \
                     (or occurs fewer times): {p:?}"
                )))
            }
        }
    }
    Ok(out)
}

fn metrics_csv(m: &EvalMetrics) -> String {
    format!(
        "tp,fp,fn,tn,precision,recall,f1,false_positive_rate\n\
         {},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
        m.true_positives,
        m.false_positives,
        m.false_negatives,
        m.true_negatives,
        m.precision,
        m.recall,
        m.f1,
        m.false_positive_rate
    )
}

fn emit_text(text: &str, target: &Option<PathBuf>) -> Result<(), Error> {
    match target {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let cloud = read_cloud_auto(&args.cloud)?;
    let labels = read_labels(&args.labels)?;
    if labels.len() != cloud.len() {
        return Err(Error::Eval(format!(
            "{} labels for {} points",
            labels.len(),
            cloud.len()
        )));
    }
    let rejected_cloud = read_cloud_auto(&args.rejected)?;
    let truth = desmoke::eval::LabeledCloud { cloud, labels };
    let indices = rejected_indices(&truth.cloud, &rejected_cloud)?;
    let metrics = score(&indices, &truth)?;
    emit_text(&metrics_csv(&metrics), &args.out)?;
    eprintln!(
        "f1 {:.4}, precision {:.4}, recall {:.4}",
        metrics.f1, metrics.precision, metrics.recall
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Error> {
    let (cfg, _) = load_config_or_default(&args.config)?;
    let rows = benchmark(&args.sizes, &cfg, args.reps)?;
    emit_text(&benchmark_csv(&rows), &args.out)
}

fn cmd_hist(args: HistArgs) -> Result<(), Error> {
    let cloud = read_cloud_auto(&args.input)?;
    let intensities: Vec<f64> = cloud.points.iter().map(|p| p.intensity).collect();
    if intensities.is_empty() {
        return Err(Error::Eval("cloud holds no points to histogram".into()));
    }
    if !(args.clip > 0.0 && args.clip <= 1.0) {
        return Err(Error::Parameter {
            name: "clip",
            reason: format!("{} outside permitted interval (0, 1]", args.clip),
        });
    }
    let sample = clip_low_fraction(&intensities, args.clip);
    let hist = intensity_histogram(&sample, args.bins)?;
    let fit = fit_weibull(&sample, LocationPolicy::Zero);
    if let Err(e) = &fit {
        eprintln!("model fit unavailable: {e}");
    }

    let mut out = String::from("bin_start,bin_end,count,model_density\n");
    for (i, &count) in hist.counts.iter().enumerate() {
        let lo = hist.edges[i];
        let hi = hist.edges[i + 1];
        let model = match &fit {
            Ok(params) => format!("{:.9}", weibull_pdf(0.5 * (lo + hi), params)),
            Err(_) => String::new(),
        };
        use std::fmt::Write as _;
        let _ = writeln!(out, "{lo},{hi},{count},{model}");
    }
    emit_text(&out, &args.out)
}
