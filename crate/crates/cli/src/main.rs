use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use trajverb::eval::EvalReport;
use trajverb::export::{energy_csv, export_traces};
use trajverb::io::{load_clips, load_jsonl, read_sessions, save_clips, save_jsonl, write_atomic};
use trajverb::label::{
    cooccurrence, import_table, label_stats, majority_labels, AnnotationResponse, IngestConfig, LabelRecord, Verb,
    VerbLabels,
};
use trajverb::model::TrainConfig;
use trajverb::pipeline::{
    run_pipeline, PipelineConfig, RunManifest, Stage, CLIPS_FILE, LABELS_FILE, REPORT_CSV_FILE, REPORT_FILE,
    RESPONSES_FILE, SESSIONS_FILE,
};
use trajverb::segment::segment_session;

/// Simulated object trajectories, motion segmentation, verb labels and
/// trajectory representation learning.
///
/// Every subcommand reads its settings from the config file (TOML; see
/// `pipeline --print-config` for all keys and defaults) and the flags
/// below. Stage subcommands read and write fixed file names inside the
/// output directory and record digests in its manifest.json.
#[derive(Debug, Parser)]
#[command(name = "trajverb", version, max_term_width = 100)]
struct Cli {
    /// Config file (TOML); unknown keys are rejected [default: built-in defaults]
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Global seed, overrides `seed` from the config [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, overrides `workers` from the config [default: 1]
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output (run) directory, overrides `out` from the config [default: run]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the labeled-corpus sessions (sessions.jsonl)
    Gen {
        /// Number of sessions [default: generation.labeled_sessions = 100]
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Cut sessions into 90-frame clips by motion energy (clips.jsonl)
    Segment(SegmentArgs),
    /// Label clips with the verb oracle, optionally through simulated annotators,
    /// and split sessions into train/val/test (labels.jsonl, split.json)
    Label {
        /// Simulated workers per clip, 0 uses oracle labels [default: annotators.workers = 0]
        #[arg(long)]
        annotators: Option<usize>,
        /// Per-response flip probability of simulated workers [default: annotators.flip_rate = 0.1]
        #[arg(long)]
        flip_rate: Option<f64>,
    },
    /// Print per-verb base rates, and agreement when responses exist
    Stats {
        /// Label file [default: <out>/labels.jsonl]
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Annotation responses [default: <out>/responses.jsonl if present]
        #[arg(long)]
        responses: Option<PathBuf>,
        /// Print JSON instead of a table
        #[arg(long)]
        json: bool,
    },
    /// Pretrain the forecasting encoder on freshly generated sessions (encoder.json)
    Pretrain(PretrainArgs),
    /// Train the raw-feature perceptron and the linear probe on the frozen encoder
    /// (perceptron.json, probe.json)
    Probe,
    /// Train encoder and classifier from scratch on the labels (supervised.json)
    Supervised,
    /// Finetune the probe model end to end (finetune.json)
    Finetune,
    /// Score all models on the test split (report.json, report.csv)
    Eval {
        /// Also write the JSON report here
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
        /// Also write the CSV report here
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Write per-clip CSV and SVG traces, and optionally motion-energy curves
    Export {
        /// Clip file [default: <out>/clips.jsonl]
        #[arg(long)]
        clips: Option<PathBuf>,
        /// Destination directory [default: <out>/traces]
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Export at most this many clips (0 = all)
        #[arg(long, default_value_t = 0)]
        limit: usize,
        /// Also write one motion-energy CSV per session in this sessions file
        #[arg(long, value_name = "SESSIONS")]
        energy: Option<PathBuf>,
    },
    /// Import annotation responses (JSONL or a delimited table) and report
    /// majority labels, agreement and co-occurrence
    IngestAnnotations(IngestArgs),
    /// Run several stages in dependency order, skipping those that are up to date
    Pipeline {
        /// Stages to run, comma separated [default: all]
        #[arg(long, value_delimiter = ',', value_enum)]
        stages: Vec<StageArg>,
        /// Print the effective config as TOML and exit
        #[arg(long)]
        print_config: bool,
    },
}

#[derive(Debug, Args)]
struct SegmentArgs {
    /// Sessions to segment outside a run directory; requires --clips
    #[arg(long = "in", value_name = "PATH", requires = "clips")]
    input: Option<PathBuf>,
    /// Output clip file for --in
    #[arg(long, value_name = "PATH")]
    clips: Option<PathBuf>,
    /// k-means clusters [default: segmentation.k = 24]
    #[arg(long)]
    k: Option<usize>,
    /// Motion-energy window in frames [default: segmentation.window = 45]
    #[arg(long)]
    window: Option<usize>,
    /// Gaussian smoothing sigma in frames [default: segmentation.sigma = 15]
    #[arg(long)]
    sigma: Option<f64>,
    /// Peak threshold on smoothed energy [default: segmentation.threshold = 0.1]
    #[arg(long)]
    threshold: Option<f64>,
    /// Directory for per-session motion-energy CSVs
    #[arg(long, value_name = "DIR")]
    energy_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PretrainArgs {
    /// Unlabeled sessions to pretrain on [default: generation.pretrain_sessions = 1000]
    #[arg(long)]
    sessions: Option<usize>,
    /// Epochs [default: training.epochs = 12]
    #[arg(long)]
    epochs: Option<usize>,
    /// LSTM width [default: training.hidden = 64]
    #[arg(long)]
    hidden: Option<usize>,
    /// Use the large settings (hidden 128, embed 128, batch 1024)
    #[arg(long)]
    paper_mode: bool,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Annotation file: .jsonl with clip_id/verb/worker/response keys, or a table
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Where to write the normalized responses [default: <out>/ingested_responses.jsonl]
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Also write majority labels here
    #[arg(long, value_name = "PATH")]
    labels: Option<PathBuf>,
    /// Clip id column of a table
    #[arg(long, default_value = "clip_id")]
    clip_column: String,
    /// Verb column of a table
    #[arg(long, default_value = "verb")]
    verb_column: String,
    /// Worker column of a table
    #[arg(long, default_value = "worker")]
    worker_column: String,
    /// Response column of a table
    #[arg(long, default_value = "response")]
    response_column: String,
    /// Field delimiter of a table
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StageArg {
    Gen,
    Segment,
    Label,
    Pretrain,
    Probe,
    Supervised,
    Finetune,
    Eval,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        match s {
            StageArg::Gen => Stage::Gen,
            StageArg::Segment => Stage::Segment,
            StageArg::Label => Stage::Label,
            StageArg::Pretrain => Stage::Pretrain,
            StageArg::Probe => Stage::Probe,
            StageArg::Supervised => Stage::Supervised,
            StageArg::Finetune => Stage::Finetune,
            StageArg::Eval => Stage::Eval,
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn stage(cfg: &PipelineConfig, s: Stage) -> Result<RunManifest> {
    cfg.validate()?;
    let m = run_pipeline(cfg, &[s])?;
    report_stages(&m, &[s]);
    Ok(m)
}

fn report_stages(m: &RunManifest, stages: &[Stage]) {
    for s in stages {
        if m.skipped.contains(s) {
            println!("{s}: up to date");
        } else if let Some(r) = m.stages.get(s) {
            let outs: Vec<&str> = r.outputs.keys().map(String::as_str).collect();
            println!("{s}: wrote {} in {:.1} s", outs.join(", "), r.wall_seconds);
        }
    }
}

fn print_report(r: &EvalReport) {
    for res in &r.results {
        match res.map {
            Some(m) => println!("{:<18} mAP {:.3}", res.approach.name(), m),
            None => println!("{:<18} mAP -", res.approach.name()),
        }
    }
    for n in &r.notes {
        println!("note: {n}");
    }
}

fn segment_standalone(cfg: &PipelineConfig, input: &Path, clips_path: &Path, energy_dir: Option<&Path>) -> Result<()> {
    let mut clips = Vec::new();
    for s in read_sessions(input)? {
        let s = s?;
        let seg = segment_session(&s, &cfg.segmentation, cfg.seed)?;
        if let Some(dir) = energy_dir {
            write_energy(dir, &s.id, &seg.energy, &seg.smoothed)?;
        }
        clips.extend(seg.clips);
    }
    save_clips(clips_path, &clips)?;
    println!("segment: {} clips to {}", clips.len(), clips_path.display());
    Ok(())
}

fn write_energy(dir: &Path, session_id: &str, energy: &[f64], smoothed: &[f64]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_atomic(
        &dir.join(format!("{session_id}.energy.csv")),
        &energy_csv(energy, smoothed)?,
    )?;
    Ok(())
}

fn load_responses(path: &Path, args: &IngestArgs) -> Result<Vec<AnnotationResponse>> {
    let is_jsonl = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("json"));
    if is_jsonl {
        return Ok(load_jsonl(path)?);
    }
    let icfg = IngestConfig {
        clip_column: args.clip_column.clone(),
        verb_column: args.verb_column.clone(),
        worker_column: args.worker_column.clone(),
        response_column: args.response_column.clone(),
        delimiter: args.delimiter,
    };
    Ok(import_table(path, &icfg)?)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Gen { sessions } => {
            if let Some(n) = sessions {
                cfg.generation.labeled_sessions = n;
            }
            stage(&cfg, Stage::Gen)?;
        }
        Command::Segment(a) => {
            let seg = &mut cfg.segmentation;
            if let Some(k) = a.k {
                seg.k = k;
            }
            if let Some(w) = a.window {
                seg.window = w;
            }
            if let Some(s) = a.sigma {
                seg.sigma = s;
            }
            if let Some(t) = a.threshold {
                seg.threshold = t;
            }
            cfg.validate()?;
            match (&a.input, &a.clips) {
                (Some(input), Some(clips)) => segment_standalone(&cfg, input, clips, a.energy_csv.as_deref())?,
                (None, Some(_)) => bail!("--clips is only used together with --in"),
                _ => {
                    stage(&cfg, Stage::Segment)?;
                    if let Some(dir) = &a.energy_csv {
                        for s in read_sessions(&cfg.out.join(SESSIONS_FILE))? {
                            let s = s?;
                            let seg = segment_session(&s, &cfg.segmentation, cfg.seed)?;
                            write_energy(dir, &s.id, &seg.energy, &seg.smoothed)?;
                        }
                    }
                }
            }
        }
        Command::Label { annotators, flip_rate } => {
            if let Some(n) = annotators {
                cfg.annotators.workers = n;
            }
            if let Some(f) = flip_rate {
                cfg.annotators.flip_rate = f;
            }
            stage(&cfg, Stage::Label)?;
        }
        Command::Stats {
            labels,
            responses,
            json,
        } => {
            let labels_path = labels.unwrap_or_else(|| cfg.out.join(LABELS_FILE));
            let records: Vec<LabelRecord> =
                load_jsonl(&labels_path).context("reading labels; run `trajverb label` first")?;
            let default_resp = cfg.out.join(RESPONSES_FILE);
            let resp_path = responses.or_else(|| default_resp.exists().then_some(default_resp));
            let resp: Option<Vec<AnnotationResponse>> = resp_path.map(|p| load_jsonl(&p)).transpose()?;
            let labels: Vec<VerbLabels> = records.iter().map(|r| r.labels).collect();
            let stats = label_stats(&labels, resp.as_deref());
            if json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                print!("{}", stats.to_table());
            }
        }
        Command::Pretrain(a) => {
            if a.paper_mode {
                let TrainConfig {
                    hidden,
                    embed_width,
                    batch_size,
                    ..
                } = TrainConfig::paper_mode();
                cfg.training.hidden = hidden;
                cfg.training.embed_width = embed_width;
                cfg.training.batch_size = batch_size;
            }
            if let Some(n) = a.sessions {
                cfg.generation.pretrain_sessions = n;
            }
            if let Some(e) = a.epochs {
                cfg.training.epochs = e;
            }
            if let Some(h) = a.hidden {
                cfg.training.hidden = h;
                cfg.training.embed_width = h;
            }
            stage(&cfg, Stage::Pretrain)?;
        }
        Command::Probe => {
            stage(&cfg, Stage::Probe)?;
        }
        Command::Supervised => {
            stage(&cfg, Stage::Supervised)?;
        }
        Command::Finetune => {
            stage(&cfg, Stage::Finetune)?;
        }
        Command::Eval { report, csv } => {
            stage(&cfg, Stage::Eval)?;
            let text = std::fs::read_to_string(cfg.out.join(REPORT_FILE))?;
            let r: EvalReport = serde_json::from_str(&text)?;
            print_report(&r);
            if let Some(p) = report {
                write_atomic(&p, &text)?;
            }
            if let Some(p) = csv {
                write_atomic(&p, &std::fs::read_to_string(cfg.out.join(REPORT_CSV_FILE))?)?;
            }
        }
        Command::Export {
            clips,
            dir,
            limit,
            energy,
        } => {
            let clips_path = clips.unwrap_or_else(|| cfg.out.join(CLIPS_FILE));
            let dir = dir.unwrap_or_else(|| cfg.out.join("traces"));
            let mut all = load_clips(&clips_path).with_context(|| "reading clips; run `trajverb segment` first")?;
            if limit > 0 {
                all.truncate(limit);
            }
            let written = export_traces(&all, &dir)?;
            println!("export: {} files in {}", written.len(), dir.display());
            if let Some(sessions) = energy {
                for s in read_sessions(&sessions)? {
                    let s = s?;
                    let seg = segment_session(&s, &cfg.segmentation, cfg.seed)?;
                    write_energy(&dir, &s.id, &seg.energy, &seg.smoothed)?;
                }
            }
        }
        Command::IngestAnnotations(a) => {
            let responses = load_responses(&a.input, &a)?;
            let out = a
                .output
                .clone()
                .unwrap_or_else(|| cfg.out.join("ingested_responses.jsonl"));
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            save_jsonl(&out, &responses)?;
            let majority = majority_labels(&responses);
            if let Some(p) = &a.labels {
                let recs: Vec<LabelRecord> = majority
                    .iter()
                    .map(|(id, l)| LabelRecord {
                        clip_id: id.clone(),
                        labels: *l,
                    })
                    .collect();
                save_jsonl(p, &recs)?;
            }
            let labels: Vec<VerbLabels> = majority.values().copied().collect();
            let stats = label_stats(&labels, Some(&responses));
            println!(
                "{} responses over {} clips written to {}",
                responses.len(),
                labels.len(),
                out.display()
            );
            print!("{}", stats.to_table());
            let co = cooccurrence(&responses);
            let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
            println!(
                "p(toss|throw) = {}  p(throw|toss) = {}",
                fmt(co.get(Verb::Throw, Verb::Toss)),
                fmt(co.get(Verb::Toss, Verb::Throw))
            );
        }
        Command::Pipeline { stages, print_config } => {
            if print_config {
                print!("{}", cfg.to_toml_string()?);
                return Ok(());
            }
            let stages: Vec<Stage> = if stages.is_empty() {
                Stage::ALL.to_vec()
            } else {
                stages.into_iter().map(Stage::from).collect()
            };
            let m = run_pipeline(&cfg, &stages)?;
            report_stages(&m, &Stage::ALL);
            if stages.contains(&Stage::Eval) {
                let text = std::fs::read_to_string(cfg.out.join(REPORT_FILE))?;
                print_report(&serde_json::from_str(&text)?);
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
