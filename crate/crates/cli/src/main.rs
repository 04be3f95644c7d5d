use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use mtevent_core::evaluate::{evaluate, EvalReport};
use mtevent_core::ingest::{
    load_events_jsonl, load_labels, load_power_csv, write_events_jsonl, write_labels, write_power_csv, CsvSchema,
    EventRecord, LabelRecord,
};
use mtevent_core::pipeline::run_detect;
use mtevent_core::synth::{synth_generate, SynthSpec};
use mtevent_core::{DetectionConfig, Event, Execution, PowerSeries};

#[derive(Parser)]
#[command(name = "mtevent", version, about = "Multi-timescale load event detection")]
struct Cli {
    /// Run every stage on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Detect events in a power CSV and write them as JSON lines.
    Detect {
        #[arg(long)]
        input: PathBuf,
        /// Flat TOML file of detection parameters; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth labels; prints an evaluation report to stdout.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Write intermediate results as JSON for plotting.
        #[arg(long)]
        dump_debug: Option<PathBuf>,
    },
    /// Score detected events against labels.
    Eval {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a labelled synthetic series: `<prefix>.csv` and `<prefix>.labels.csv`.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_prefix: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<DetectionConfig> {
    match path {
        Some(p) => DetectionConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(DetectionConfig::default()),
    }
}

fn load_series(path: &Path) -> Result<Vec<PowerSeries>> {
    load_power_csv(path, &CsvSchema::default()).with_context(|| format!("reading series {}", path.display()))
}

/// Index of the segment holding `[a, b]` entirely.
fn segment_of(series: &[PowerSeries], a: i64, b: i64) -> Option<usize> {
    series
        .iter()
        .position(|s| s.index_of(a).is_some() && s.index_of(b).is_some())
}

/// Evaluate over every segment of a series that gaps split apart. Segments
/// share no samples, so pooling their counts is exact.
fn eval_segments(
    series: &[PowerSeries],
    records: &[EventRecord],
    labels: &[LabelRecord],
    cfg: &DetectionConfig,
    exec: Execution,
) -> Result<EvalReport> {
    let mut dets: Vec<Vec<Event>> = vec![Vec::new(); series.len()];
    let mut gts: Vec<Vec<Event>> = vec![Vec::new(); series.len()];
    for r in records {
        let Some(k) = segment_of(series, r.start_epoch, r.end_epoch) else {
            bail!("event [{}, {}] is not covered by the series", r.start_epoch, r.end_epoch);
        };
        dets[k].push(r.to_event(&series[k]).expect("segment covers the event"));
    }
    for l in labels {
        let Some(k) = segment_of(series, l.start_epoch, l.end_epoch) else {
            bail!(
                "label `{}` [{}, {}] is not covered by the series",
                l.appliance,
                l.start_epoch,
                l.end_epoch
            );
        };
        gts[k].push(l.to_event(&series[k]).expect("segment covers the label"));
    }

    let mut total = EvalReport {
        n_d: 0,
        n_t: 0,
        tp: 0.0,
        precision: 0.0,
        recall: 0.0,
        f1_mod: 0.0,
        matches: Vec::new(),
    };
    for (k, s) in series.iter().enumerate() {
        let r = evaluate(&dets[k], &gts[k], s, cfg, exec);
        let offset = total.n_d;
        let gt_offset = total.n_t;
        total.matches.extend(r.matches.into_iter().map(|mut m| {
            m.det += offset;
            m.gt = m.gt.map(|g| g + gt_offset);
            m
        }));
        total.n_d += r.n_d;
        total.n_t += r.n_t;
        total.tp += r.tp;
    }
    if total.n_d > 0 && total.n_t > 0 {
        total.precision = total.tp / total.n_d as f64;
        total.recall = total.tp / total.n_t as f64;
        let sum = total.precision + total.recall;
        total.f1_mod = if sum > 0.0 { 2.0 * total.precision * total.recall / sum } else { 0.0 };
    }
    Ok(total)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn detect(
    input: &Path,
    config: Option<&Path>,
    out: &Path,
    labels: Option<&Path>,
    dump_debug: Option<&Path>,
    exec: Execution,
) -> Result<()> {
    let cfg = load_config(config)?;
    let series = load_series(input)?;
    log::info!("{} segment(s), {} samples", series.len(), series.iter().map(|s| s.len()).sum::<usize>());

    let mut records = Vec::new();
    let mut debug = Vec::new();
    for s in &series {
        let det = run_detect(s, &cfg, exec)?;
        for e in &det.events {
            records.push(EventRecord::from_event(e, s)?);
        }
        if dump_debug.is_some() {
            debug.push(json!({
                "start_epoch": s.start_epoch(),
                "active": s.active(),
                "events": det.events,
                "debug": det.debug,
            }));
        }
    }
    log::info!("{} events", records.len());

    let mut w = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    write_events_jsonl(&mut w, &records)?;
    w.flush()?;

    if let Some(path) = dump_debug {
        let w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        serde_json::to_writer(w, &debug)?;
    }
    if let Some(path) = labels {
        let labels = load_labels(path)?;
        print_json(&eval_segments(&series, &records, &labels, &cfg, exec)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.cmd {
        Cmd::Detect {
            input,
            config,
            out,
            labels,
            dump_debug,
        } => detect(&input, config.as_deref(), &out, labels.as_deref(), dump_debug.as_deref(), exec),
        Cmd::Eval {
            events,
            labels,
            series,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let series = load_series(&series)?;
            let records = load_events_jsonl(&events)?;
            let labels = load_labels(&labels)?;
            print_json(&eval_segments(&series, &records, &labels, &cfg, exec)?)
        }
        Cmd::Synth { spec, out_prefix } => {
            let spec = SynthSpec::load(&spec).with_context(|| format!("reading spec {}", spec.display()))?;
            let out = synth_generate(&spec)?;
            let csv = with_suffix(&out_prefix, ".csv");
            let lab = with_suffix(&out_prefix, ".labels.csv");
            write_power_csv(&csv, &out.series)?;
            write_labels(&lab, &out.labels)?;
            log::info!("wrote {} and {} ({} labels)", csv.display(), lab.display(), out.labels.len());
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
