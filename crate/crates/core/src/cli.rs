//! Command-line pipeline: synth, preprocess, train, eval, protocol, probe, report.
//!
//! Every command reads one [`PipelineConfig`]. Commands that produce results
//! write into a staging directory first and move files into place only after
//! every file has been written and read back, so a failed command leaves no
//! partial outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::dataset::{
    build_protocol, clip_to_tensor, preprocess_to_dir_with_progress, synth_generate, ClipDir,
    FlowDir, Manifest, Protocol, SplitAudit,
};
use crate::error::{Error, Result, StageExt};
use crate::metrics::MetricsRow;
use crate::model::{checkpoint, Tiny3d};
use crate::protocols::{
    csv_tables, evaluate_plan, labels_for, render_markdown, run_experiment, run_protocol, score,
    Experiment, ExperimentReport, ExperimentSpec, InputCache,
};
use crate::tensor_file;

#[derive(Debug, Parser)]
#[command(
    name = "pitchflow",
    version,
    about = "Optical-flow injury detection pipeline"
)]
pub struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, short)]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus: manifest plus one clip file per pitch.
    Synth,
    /// Compute one flow file per pitch from the stored clips.
    Preprocess,
    /// Train one model on a single-protocol experiment and save the checkpoint.
    Train {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Evaluate the checkpoint saved by `train` for the same experiment.
    Eval {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Run a detection experiment and write its report and tables.
    Protocol {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Run a game or order bias probe.
    Probe {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Collect every report into one markdown document.
    Report,
}

/// Corpus summary printed by `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub pitchers: usize,
    pub pitches: usize,
    pub injury_events: usize,
    pub k: u32,
    pub injured_at_k: usize,
    pub manifest_sha256: String,
}

/// Output of `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub spec: ExperimentSpec,
    pub corpus_fingerprint: String,
    pub audit: SplitAudit,
    pub row: MetricsRow,
}

/// Files written by one command, staged until [`Outputs::commit`].
struct Outputs {
    staging: PathBuf,
    files: Vec<(PathBuf, PathBuf)>,
    committed: bool,
}

impl Outputs {
    fn new(root: &Path, label: &str) -> Result<Self> {
        let staging = root.join(format!(".staging-{label}"));
        if staging.exists() {
            fs::remove_dir_all(&staging)
                .map_err(|e| Error::io(format!("clearing {}", staging.display()), e))?;
        }
        fs::create_dir_all(&staging)
            .map_err(|e| Error::io(format!("creating {}", staging.display()), e))?;
        Ok(Outputs {
            staging,
            files: Vec::new(),
            committed: false,
        })
    }

    fn staged_path(&self) -> PathBuf {
        self.staging.join(format!("{:06}", self.files.len()))
    }

    /// Stages `bytes` for `target`, verifying the staged copy byte for byte.
    fn put(&mut self, target: PathBuf, bytes: &[u8]) -> Result<()> {
        let staged = self.staged_path();
        tensor_file::write_bytes_atomic(&staged, bytes)?;
        let back =
            fs::read(&staged).map_err(|e| Error::io(format!("reading {}", staged.display()), e))?;
        if back != bytes {
            return Err(Error::Format {
                path: target,
                reason: "read-back differs from written bytes".into(),
            });
        }
        self.files.push((staged, target));
        Ok(())
    }

    fn put_text(&mut self, target: PathBuf, text: &str) -> Result<()> {
        self.put(target, text.as_bytes())
    }

    /// Stages a tensor file; the staged copy must decode to the same tensor.
    fn put_tensor(&mut self, target: PathBuf, t: &tensor_file::TensorData) -> Result<()> {
        let staged = self.staged_path();
        tensor_file::write(&staged, t)?;
        self.files.push((staged, target));
        Ok(())
    }

    fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut moved = Vec::with_capacity(self.files.len());
        for (staged, target) in &self.files {
            if let Err(e) = move_file(staged, target) {
                for t in &moved {
                    let _ = fs::remove_file(t);
                }
                return Err(e);
            }
            moved.push(target.clone());
        }
        self.committed = true;
        let _ = fs::remove_dir_all(&self.staging);
        Ok(moved)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

fn move_file(from: &Path, to: &Path) -> Result<()> {
    if let Some(parent) = to.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    if fs::rename(from, to).is_err() {
        fs::copy(from, to).map_err(|e| Error::io(format!("writing {}", to.display()), e))?;
        let _ = fs::remove_file(from);
    }
    Ok(())
}

/// Short content hash naming an experiment's outputs.
pub fn spec_hash(spec: &ExperimentSpec) -> String {
    let digest = Sha256::digest(serde_json::to_vec(spec).expect("spec serializes"));
    hex::encode(&digest[..6])
}

fn kind_name(e: &Experiment) -> &'static str {
    match e {
        Experiment::Single { .. } => "single",
        Experiment::PerPitcher { .. } => "per_pitcher",
        Experiment::KSweep { .. } => "k_sweep",
        Experiment::PerInjury { .. } => "per_injury",
        Experiment::GameProbe { .. } => "game_probe",
        Experiment::OrderProbe { .. } => "order_probe",
    }
}

fn stem(spec: &ExperimentSpec) -> String {
    format!("{}-{}", kind_name(&spec.experiment), spec_hash(spec))
}

fn read_spec(cfg: &PipelineConfig, path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading spec {}", path.display()), e))?;
    let experiment: Experiment = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidParams(format!("spec {}: {e}", path.display())))?;
    let spec = cfg.experiment_spec(experiment);
    spec.validate()
        .map_err(|e| Error::InvalidParams(format!("spec {}: {e}", path.display())))?;
    Ok(spec)
}

fn single_protocol(spec: &ExperimentSpec) -> Result<&Protocol> {
    match &spec.experiment {
        Experiment::Single { protocol } => Ok(protocol),
        other => Err(Error::InvalidParams(format!(
            "train and eval take a `single` experiment, got `{}`",
            kind_name(other)
        ))),
    }
}

fn load_manifest(cfg: &PipelineConfig) -> Result<Manifest> {
    Manifest::read(&cfg.resolve(&cfg.corpus.manifest)).stage("load manifest")
}

fn flows(cfg: &PipelineConfig) -> FlowDir {
    FlowDir {
        dir: cfg.resolve(&cfg.corpus.flows_dir),
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

fn cmd_synth(cfg: &PipelineConfig, config_text: &str) -> Result<String> {
    let root = cfg.output_root();
    let corpus = synth_generate(&cfg.synth).stage("synth")?;
    let manifest = corpus.manifest();
    let clips = ClipDir {
        dir: cfg.resolve(&cfg.corpus.clips_dir),
        fps: cfg.corpus.fps,
    };
    let mut out = Outputs::new(&root, "synth")?;
    for r in manifest.records() {
        let clip = corpus.render(r).stage("render")?;
        out.put_tensor(clips.path(&r.clip_ref), &clip_to_tensor(&clip))?;
    }
    let labels = labels_for(manifest, cfg.k).stage("label")?;
    let summary = SynthSummary {
        pitchers: manifest.pitchers().len(),
        pitches: manifest.len(),
        injury_events: manifest
            .records()
            .iter()
            .filter_map(|r| r.injury_event_id.as_deref())
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        k: cfg.k,
        injured_at_k: labels.values().filter(|l| l.is_injured()).count(),
        manifest_sha256: manifest.fingerprint(),
    };
    out.put_text(cfg.resolve(&cfg.corpus.manifest), &manifest.to_jsonl())?;
    out.put_text(root.join("synth_summary.json"), &pretty(&summary))?;
    out.put_text(root.join("synth.config.json"), config_text)?;
    out.commit()?;
    Ok(pretty(&summary))
}

fn cmd_preprocess(cfg: &PipelineConfig) -> Result<String> {
    let manifest = load_manifest(cfg)?;
    let clips = ClipDir {
        dir: cfg.resolve(&cfg.corpus.clips_dir),
        fps: cfg.corpus.fps,
    };
    let missing: Vec<String> = manifest
        .records()
        .iter()
        .map(|r| clips.path(&r.clip_ref))
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} clip file(s) missing:\n  {}",
            missing.len(),
            missing.join("\n  ")
        )));
    }
    let dir = cfg.resolve(&cfg.corpus.flows_dir);
    let step = (manifest.len() / 10).max(1);
    let summary = preprocess_to_dir_with_progress(
        &manifest,
        &clips,
        &cfg.preprocess,
        &dir,
        &mut |done, total| {
            if done % step == 0 || done == total {
                eprintln!("preprocess: {done}/{total}");
            }
        },
    )
    .stage("preprocess")?;
    Ok(pretty(&summary))
}

fn cmd_train(cfg: &PipelineConfig, config_text: &str, spec: &ExperimentSpec) -> Result<String> {
    let protocol = single_protocol(spec)?;
    let manifest = load_manifest(cfg)?;
    let flows = flows(cfg);
    let mut inputs = InputCache::new(&manifest, &flows);
    let outcome = run_protocol(spec, protocol, spec.k, &mut inputs)?;
    let root = cfg.output_root();
    let dir = root.join("runs").join(stem(spec));
    let mut out = Outputs::new(&root, "train")?;
    let bytes = checkpoint::encode(&outcome.net);
    checkpoint::decode::<f32>(&bytes, &spec.model, &dir.join("model.pgc"))?;
    out.put(dir.join("model.pgc"), &bytes)?;
    out.put_text(dir.join("history.csv"), &outcome.history.to_csv())?;
    out.put_text(dir.join("split.json"), &pretty(&outcome.plan))?;
    out.put_text(dir.join("spec.json"), &pretty(spec))?;
    out.put_text(dir.join("config.json"), config_text)?;
    out.commit()?;
    Ok(format!("{}\n", dir.display()))
}

fn cmd_eval(cfg: &PipelineConfig, config_text: &str, spec: &ExperimentSpec) -> Result<String> {
    let protocol = single_protocol(spec)?;
    let root = cfg.output_root();
    let dir = root.join("runs").join(stem(spec));
    let ckpt = dir.join("model.pgc");
    if !ckpt.exists() {
        return Err(Error::InvalidInput(format!(
            "no checkpoint at {}; run `train` with the same config and spec first",
            ckpt.display()
        )));
    }
    let net: Tiny3d<f32> = checkpoint::load(&spec.model, &ckpt).stage("load checkpoint")?;
    let manifest = load_manifest(cfg)?;
    let plan = build_protocol(&manifest, protocol, spec.k, spec.seed).stage("split")?;
    let labels = labels_for(&manifest, spec.k).stage("label")?;
    let flows = flows(cfg);
    let mut inputs = InputCache::new(&manifest, &flows);
    let predictions = evaluate_plan(&mut inputs, &plan, &net, spec.threshold).stage("predict")?;
    let mut row = score(&predictions, &labels).stage("metrics")?;
    row.k = Some(spec.k);
    let eval = Evaluation {
        spec: spec.clone(),
        corpus_fingerprint: manifest.fingerprint(),
        audit: plan.audit(&manifest),
        row,
    };
    let mut csv = String::from("pitch_id,p,label_hat,label\n");
    for p in &predictions {
        writeln!(
            csv,
            "{},{},{},{}",
            p.pitch_id,
            p.p,
            p.label_hat.as_target(),
            labels[&p.pitch_id].as_target()
        )
        .unwrap();
    }
    let mut out = Outputs::new(&root, "eval")?;
    out.put_text(dir.join("eval.json"), &pretty(&eval))?;
    out.put_text(dir.join("predictions.csv"), &csv)?;
    out.put_text(dir.join("eval.config.json"), config_text)?;
    out.commit()?;
    Ok(pretty(&eval.row))
}

fn is_probe(e: &Experiment) -> bool {
    matches!(
        e,
        Experiment::GameProbe { .. } | Experiment::OrderProbe { .. }
    )
}

fn cmd_experiment(
    cfg: &PipelineConfig,
    config_text: &str,
    spec: &ExperimentSpec,
    probe: bool,
) -> Result<String> {
    if is_probe(&spec.experiment) != probe {
        return Err(Error::InvalidParams(format!(
            "`{}` experiments run under `{}`",
            kind_name(&spec.experiment),
            if probe { "protocol" } else { "probe" }
        )));
    }
    let manifest = load_manifest(cfg)?;
    let report = run_experiment(spec, &manifest, &flows(cfg))?;
    let root = cfg.output_root();
    let dir = root.join("reports");
    let stem = stem(spec);
    let mut out = Outputs::new(&root, &stem)?;
    out.put_text(dir.join(format!("{stem}.json")), &(report.to_json() + "\n"))?;
    for (name, csv) in csv_tables(&report)? {
        out.put_text(dir.join(format!("{stem}-{name}.csv")), &csv)?;
    }
    out.put_text(dir.join(format!("{stem}.config.json")), config_text)?;
    let written = out.commit()?;
    let mut msg = String::new();
    for p in written {
        writeln!(msg, "{}", p.display()).unwrap();
    }
    Ok(msg)
}

/// Reports under `<root>/reports`, ordered by file name.
pub fn collect_reports(dir: &Path) -> Result<Vec<ExperimentReport>> {
    let entries =
        fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut paths: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
            .path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        if name.ends_with(".json") && !name.ends_with(".config.json") {
            paths.insert(name, path);
        }
    }
    if paths.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no reports in {}",
            dir.display()
        )));
    }
    paths
        .values()
        .map(|p| {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::io(format!("reading {}", p.display()), e))?;
            Ok(serde_json::from_str(&text)?)
        })
        .collect()
}

fn cmd_report(cfg: &PipelineConfig) -> Result<String> {
    let root = cfg.output_root();
    let reports = collect_reports(&root.join("reports"))?;
    let md = render_markdown(&reports);
    let mut out = Outputs::new(&root, "report")?;
    out.put_text(root.join("report.md"), &md)?;
    out.commit()?;
    Ok(md)
}

/// Runs one command and returns what it prints to standard output.
pub fn run(cli: &Cli) -> Result<String> {
    let (cfg, text) = PipelineConfig::read(&cli.config)?;
    match &cli.command {
        Command::Synth => cmd_synth(&cfg, &text),
        Command::Preprocess => cmd_preprocess(&cfg),
        Command::Train { spec } => cmd_train(&cfg, &text, &read_spec(&cfg, spec)?),
        Command::Eval { spec } => cmd_eval(&cfg, &text, &read_spec(&cfg, spec)?),
        Command::Protocol { spec } => cmd_experiment(&cfg, &text, &read_spec(&cfg, spec)?, false),
        Command::Probe { spec } => cmd_experiment(&cfg, &text, &read_spec(&cfg, spec)?, true),
        Command::Report => cmd_report(&cfg),
    }
}
