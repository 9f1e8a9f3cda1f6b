//! Command-line front end.
//!
//! Every command reads an optional TOML [`RunConfig`], applies flag
//! overrides, and writes a run directory:
//!
//! ```text
//! <out>/config.json    resolved config plus the command line
//! <out>/metrics.json   results; no timestamps, so reruns are byte-identical
//! <out>/log.txt        progress lines
//! <out>/checkpoint.json   training commands only
//! <out>/error.json     only when the command failed
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::{Baseline, BaselineKind, BaselineSpec};
use crate::data::{load_manifest, write_manifest, Sample, SelectorSample, VideoRecord, ViewKind, WindowConfig};
use crate::detector::{build_samples, build_vocab, train_detector_samples};
use crate::error::{Error, Result};
use crate::eval::{
    balanced_report, filter_instances, parse_threshold, significance, AnnotationInstance, ApMode, EvalInstance,
    EvalReport, Significance,
};
use crate::model::{load_checkpoint, save_checkpoint, Component, InputMask, ModelConfig, ModelInput, Prediction, Role, SwitchModel};
use crate::pseudo_label::{load_pseudo_labels, pseudo_label_corpus, save_pseudo_labels, PseudoLabelMode, ShotConfig};
use crate::selector::{finetune_selector, init_from_detector, selector_from_scratch, JointFinetuneConfig, LabelLine, LimitedLabelSet};
use crate::synth::{generate_corpus, votes_for, OracleClassifier, SwitchGrammar};
use crate::train::{TrainConfig, TrainHistory};

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PseudoLabelSection {
    pub mode: PseudoLabelMode,
    pub shots: ShotConfig,
}

impl Default for PseudoLabelSection {
    fn default() -> Self {
        Self {
            mode: PseudoLabelMode::ShotLevel,
            shots: ShotConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectorSection {
    /// Subsample the limited-label set to this many instances.
    pub labels_n: Option<usize>,
    pub from_scratch: bool,
    pub joint: JointFinetuneConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub ap_mode: ApMode,
    pub n_resamples: usize,
    /// Such as "7/9"; applied when a votes file is given.
    pub agreement_threshold: Option<String>,
    pub by_scenario: bool,
    /// Trailing share of manifest videos held out for validation when no validation manifest is given.
    pub val_fraction: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            ap_mode: ApMode::Macro,
            n_resamples: 1000,
            agreement_threshold: None,
            by_scenario: false,
            val_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    /// deterministic_cue, pure_hazard, split_cues or mixed.
    pub preset: String,
    pub n_videos: usize,
    pub multi_view: bool,
    pub hazard: Option<f64>,
    pub boundary_noise: Option<f64>,
    /// Full grammar; replaces the preset when given.
    pub grammar: Option<SwitchGrammar>,
    pub n_annotators: usize,
    pub max_difficulty: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            preset: "mixed".into(),
            n_videos: 100,
            multi_view: false,
            hazard: None,
            boundary_noise: None,
            grammar: None,
            n_annotators: 9,
            max_difficulty: 0.5,
        }
    }
}

impl SynthSection {
    pub fn grammar(&self) -> Result<SwitchGrammar> {
        let mut g = match &self.grammar {
            Some(g) => g.clone(),
            None => match self.preset.as_str() {
                "deterministic_cue" => SwitchGrammar::deterministic_cue(),
                "pure_hazard" => SwitchGrammar::pure_hazard(self.hazard.unwrap_or(0.5)),
                "split_cues" => SwitchGrammar::split_cues(),
                "mixed" => SwitchGrammar::mixed(),
                other => return Err(Error::Config(format!("unknown grammar preset {other:?}"))),
            },
        };
        if let Some(h) = self.hazard {
            g.hazard = h;
        }
        if let Some(b) = self.boundary_noise {
            g.boundary_noise = b;
        }
        g.multi_view |= self.multi_view;
        g.validate()?;
        Ok(g)
    }
}

/// Everything a command may read. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// The one seed; copied into `model.seed` and `train.seed` on resolution.
    pub seed: u64,
    pub window: WindowConfig,
    /// Spacing of prediction times.
    pub stride_s: f64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub pseudo_label: PseudoLabelSection,
    pub selector: SelectorSection,
    pub eval: EvalSection,
    pub synth: SynthSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            window: WindowConfig::default(),
            stride_s: 2.0,
            model: ModelConfig::desk(16),
            train: TrainConfig::default(),
            pseudo_label: PseudoLabelSection::default(),
            selector: SelectorSection::default(),
            eval: EvalSection::default(),
            synth: SynthSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    fn resolve(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.model.seed = self.seed;
        self.train.seed = self.seed;
        self
    }
}

// ---------------------------------------------------------------- arguments

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    /// Run directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML run config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Training manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Pseudo-labels replacing the manifest's view tracks for training.
    #[arg(long)]
    pub pseudo_labels: Option<PathBuf>,
    /// Validation manifest; otherwise the trailing videos of the training manifest.
    #[arg(long)]
    pub val_manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthGenArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub n_videos: Option<usize>,
    /// Emit ego/exo candidate streams, limited labels and annotator votes.
    #[arg(long)]
    pub multi_view: bool,
    #[arg(long)]
    pub boundary_noise: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PseudoLabelArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Clip classifier written by `synth-gen` (oracle.json).
    #[arg(long)]
    pub classifier: PathBuf,
    /// shot or clip.
    #[arg(long)]
    pub mode: Option<PseudoLabelMode>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainDetectorArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("init").required(true).args(["detector", "from_scratch"])))]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Multi-view manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Limited-label JSONL used for fine-tuning.
    #[arg(long)]
    pub labels: PathBuf,
    /// Held-out labels scored after fine-tuning.
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    /// Pretrained detector checkpoint.
    #[arg(long)]
    pub detector: Option<PathBuf>,
    #[arg(long)]
    pub from_scratch: bool,
    #[arg(long)]
    pub labels_n: Option<usize>,
    /// Weight of the narration-label loss.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub manifest: PathBuf,
    /// `model` or `baseline:<name>`.
    #[arg(long)]
    pub system: String,
    /// Model to score, or the encoder for retrieval baselines.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Score best-view labels instead of the manifest's view tracks.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Annotator votes keyed by `<video_id>@<t>`.
    #[arg(long)]
    pub votes: Option<PathBuf>,
    #[arg(long, requires = "votes")]
    pub agreement_threshold: Option<String>,
    #[arg(long)]
    pub by_scenario: bool,
    /// Corpus indexed by retrieval baselines.
    #[arg(long)]
    pub train_manifest: Option<PathBuf>,
    /// Second system for a paired significance test.
    #[arg(long)]
    pub compare: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Drop {
    #[value(name = "F")]
    F,
    #[value(name = "N")]
    N,
    #[value(name = "Nprime")]
    Nprime,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Input group to omit; repeatable.
    #[arg(long, value_enum)]
    pub drop: Vec<Drop>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Past-frame window lengths in seconds.
    #[arg(long, value_delimiter = ',', conflicts_with = "labels_n")]
    pub tf: Vec<f64>,
    /// Past-narration window lengths in seconds.
    #[arg(long, value_delimiter = ',', conflicts_with = "labels_n")]
    pub tn: Vec<f64>,
    /// Limited-label counts; fine-tunes from `--detector` and from scratch at each.
    #[arg(long, value_delimiter = ',', requires_all = ["labels", "test_labels", "detector"])]
    pub labels_n: Vec<usize>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    #[arg(long)]
    pub detector: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
pub enum Command {
    /// Generate a synthetic corpus with known switch rules.
    SynthGen(SynthGenArgs),
    /// Pseudo-label the view tracks of a manifest.
    PseudoLabel(PseudoLabelArgs),
    /// Train the view-switch detector.
    TrainDetector(TrainDetectorArgs),
    /// Fine-tune the view selector on limited labels.
    FinetuneSelector(FinetuneArgs),
    /// Score a model or baseline with balanced metrics.
    Eval(EvalArgs),
    /// Train and score with input groups dropped.
    Ablate(AblateArgs),
    /// Window-length or label-count sweeps.
    Sweep(SweepArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SynthGen(_) => "synth-gen",
            Command::PseudoLabel(_) => "pseudo-label",
            Command::TrainDetector(_) => "train-detector",
            Command::FinetuneSelector(_) => "finetune-selector",
            Command::Eval(_) => "eval",
            Command::Ablate(_) => "ablate",
            Command::Sweep(_) => "sweep",
        }
    }

    pub fn run_args(&self) -> &RunArgs {
        match self {
            Command::SynthGen(a) => &a.run,
            Command::PseudoLabel(a) => &a.run,
            Command::TrainDetector(a) => &a.run,
            Command::FinetuneSelector(a) => &a.run,
            Command::Eval(a) => &a.run,
            Command::Ablate(a) => &a.run,
            Command::Sweep(a) => &a.run,
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "swav", version, about = "Ego/exo view-switch detection and view selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

// ---------------------------------------------------------------- run directory

struct RunDir {
    dir: PathBuf,
    log: File,
}

impl RunDir {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("log.txt");
        let log = File::create(&p).map_err(|e| Error::io(&p, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            log,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn log(&mut self, msg: impl AsRef<str>) {
        let msg = msg.as_ref();
        eprintln!("{msg}");
        // A failing log write should not fail the run.
        let _ = writeln!(self.log, "{msg}");
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        write_json(&self.path(name), value)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for x in items {
        text.push_str(&serde_json::to_string(x)?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    command: &'a str,
    args: &'a Command,
    config: &'a RunConfig,
}

/// Machine-readable failure record.
#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub command: String,
    pub error: String,
    pub message: String,
}

/// Key used to join annotator votes with instances.
pub fn instance_key(video_id: &str, t: f64) -> String {
    format!("{video_id}@{t:.3}")
}

// ---------------------------------------------------------------- shared steps

fn split_records(records: Vec<VideoRecord>, val_fraction: f64) -> (Vec<VideoRecord>, Vec<VideoRecord>) {
    let n_val = ((records.len() as f64) * val_fraction.clamp(0.0, 1.0)).round() as usize;
    let n_val = n_val.min(records.len().saturating_sub(1));
    let mut train = records;
    let val = train.split_off(train.len() - n_val);
    (train, val)
}

fn apply_pseudo_labels(records: &[VideoRecord], path: &Path) -> Result<Vec<VideoRecord>> {
    let mut files: HashMap<String, _> = load_pseudo_labels(path)?.into_iter().map(|f| (f.video_id.clone(), f)).collect();
    records
        .iter()
        .map(|r| {
            let f = files.remove(&r.video_id).ok_or_else(|| Error::Validation {
                video_id: r.video_id.clone(),
                message: "no pseudo-labels for this video".into(),
            })?;
            Ok(f.into_set(r)?.apply(r))
        })
        .collect()
}

/// Training records (pseudo-labeled when asked) and validation records with their own tracks.
fn training_records(data: &DataArgs, cfg: &RunConfig) -> Result<(Vec<VideoRecord>, Vec<VideoRecord>)> {
    let records = load_manifest(&data.manifest)?;
    let (train, val) = match &data.val_manifest {
        Some(v) => (records, load_manifest(v)?),
        None => split_records(records, cfg.eval.val_fraction),
    };
    let train = match &data.pseudo_labels {
        Some(p) => apply_pseudo_labels(&train, p)?,
        None => train,
    };
    Ok((train, val))
}

fn detector_config(cfg: &RunConfig, records: &[VideoRecord]) -> ModelConfig {
    let mut m = cfg.model.clone();
    if let Some(r) = records.first() {
        m.encoder.feat_dim = r.feat_dim();
    }
    m.aggregator.max_candidate_tokens = 0;
    m
}

fn report_of(preds: &[Prediction], inst: &[EvalInstance], ap_mode: ApMode) -> Result<Option<EvalReport>> {
    if inst.is_empty() {
        return Ok(None);
    }
    balanced_report(preds, inst, ap_mode).map(Some)
}

fn score_detector(model: &SwitchModel, samples: &[Sample], mask: InputMask, ap_mode: ApMode) -> Result<Option<EvalReport>> {
    let preds = samples.iter().map(|s| model.forward(s, mask)).collect::<Result<Vec<_>>>()?;
    let inst: Vec<EvalInstance> = samples.iter().map(EvalInstance::of).collect();
    report_of(&preds, &inst, ap_mode)
}

fn score_selector(model: &SwitchModel, set: &LimitedLabelSet, ap_mode: ApMode) -> Result<Option<EvalReport>> {
    let preds = set
        .samples
        .iter()
        .map(|s| model.predict(ModelInput::Selector(s), InputMask::ALL))
        .collect::<Result<Vec<_>>>()?;
    let inst: Vec<EvalInstance> = set.samples.iter().map(|s| EvalInstance::of(&s.base)).collect();
    report_of(&preds, &inst, ap_mode)
}

struct Trained {
    model: SwitchModel,
    history: TrainHistory,
    n_train: usize,
    val: Vec<Sample>,
}

fn train_on(train: &[VideoRecord], val: &[VideoRecord], cfg: &RunConfig, window: &WindowConfig, mask: InputMask) -> Result<Trained> {
    let ts = build_samples(train, window, cfg.stride_s)?;
    let vs = build_samples(val, window, cfg.stride_s)?;
    let mut model = SwitchModel::new_detector(detector_config(cfg, train), build_vocab(train))?;
    let tcfg = TrainConfig { mask, ..cfg.train.clone() };
    let history = train_detector_samples(&mut model, &ts, &vs, &tcfg)?;
    Ok(Trained {
        model,
        history,
        n_train: ts.len(),
        val: vs,
    })
}

fn log_history(run: &mut RunDir, h: &TrainHistory) {
    for e in &h.epochs {
        let val = match (e.val_loss, e.val_balanced_accuracy) {
            (Some(l), Some(a)) => format!("  val loss {l:.4}  val bal-acc {a:.4}"),
            _ => String::new(),
        };
        run.log(format!("epoch {:3}  train loss {:.4}{val}", e.epoch, e.train_loss));
    }
}

// ---------------------------------------------------------------- commands

#[derive(Serialize)]
struct SynthMetrics {
    seed: u64,
    n_videos: usize,
    n_frames: usize,
    duration_s: f64,
    n_samples: usize,
    switch_rate: f64,
    n_cue_events: usize,
    n_labels: usize,
}

fn synth_gen(a: &SynthGenArgs, cfg: &mut RunConfig, run: &mut RunDir) -> Result<()> {
    if let Some(p) = &a.preset {
        cfg.synth.preset = p.clone();
    }
    if let Some(n) = a.n_videos {
        cfg.synth.n_videos = n;
    }
    cfg.synth.multi_view |= a.multi_view;
    if a.boundary_noise.is_some() {
        cfg.synth.boundary_noise = a.boundary_noise;
    }
    let grammar = cfg.synth.grammar()?;
    let corpus = generate_corpus(&grammar, cfg.synth.n_videos, cfg.seed)?;
    run.log(format!("generated {} videos", corpus.records.len()));
    write_manifest(&run.path("manifest.jsonl"), &corpus.records)?;
    run.write_json("oracle.json", &corpus.oracle)?;

    let samples = build_samples(&corpus.records, &cfg.window, cfg.stride_s)?;
    let n_switch = samples.iter().filter(|s| s.is_switch()).count();
    let mut n_labels = 0;
    if grammar.multi_view {
        let lines: Vec<LabelLine> = samples
            .iter()
            .map(|s| LabelLine {
                video_id: s.video_id.clone(),
                t: s.t,
                target_kind: s.target.kind,
            })
            .collect();
        let truths: Vec<(String, ViewKind)> = lines.iter().map(|l| (instance_key(&l.video_id, l.t), l.target_kind)).collect();
        let votes = votes_for(&truths, cfg.synth.n_annotators, cfg.synth.max_difficulty, cfg.seed);
        // Videos are split the same way as the training commands split manifests.
        let ids: Vec<&str> = corpus.records.iter().map(|r| r.video_id.as_str()).collect();
        let n_test = split_records(corpus.records.clone(), cfg.eval.val_fraction).1.len();
        let test_ids: BTreeSet<&str> = ids[ids.len() - n_test..].iter().copied().collect();
        let (test, train): (Vec<LabelLine>, Vec<LabelLine>) =
            lines.iter().cloned().partition(|l| test_ids.contains(l.video_id.as_str()));
        write_jsonl(&run.path("labels_train.jsonl"), &train)?;
        write_jsonl(&run.path("labels_test.jsonl"), &test)?;
        write_jsonl(&run.path("votes.jsonl"), &votes)?;
        n_labels = lines.len();
        run.log(format!("wrote {} training and {} test best-view labels with votes", train.len(), test.len()));
    }
    run.write_json(
        "metrics.json",
        &SynthMetrics {
            seed: cfg.seed,
            n_videos: corpus.records.len(),
            n_frames: corpus.records.iter().map(|r| r.num_frames()).sum(),
            duration_s: corpus.records.iter().map(|r| r.duration_s).sum(),
            n_samples: samples.len(),
            switch_rate: n_switch as f64 / samples.len().max(1) as f64,
            n_cue_events: corpus.cue_events.len(),
            n_labels,
        },
    )
}

#[derive(Serialize)]
struct PseudoLabelMetrics {
    seed: u64,
    mode: PseudoLabelMode,
    n_videos: usize,
    n_shots: usize,
    /// Mean frame accuracy against the manifest's own tracks, when it has them.
    frame_accuracy: Option<f64>,
}

fn pseudo_label(a: &PseudoLabelArgs, cfg: &mut RunConfig, run: &mut RunDir) -> Result<()> {
    if let Some(m) = a.mode {
        cfg.pseudo_label.mode = m;
    }
    let records = load_manifest(&a.manifest)?;
    let text = std::fs::read_to_string(&a.classifier).map_err(|e| Error::io(&a.classifier, e))?;
    let clf: OracleClassifier = serde_json::from_str(&text)?;
    let sets = pseudo_label_corpus(&records, &clf, cfg.pseudo_label.mode, &cfg.pseudo_label.shots)?;
    save_pseudo_labels(&run.path("pseudo_labels.jsonl"), &sets)?;
    let accs: Vec<f64> = sets.iter().zip(&records).filter_map(|(s, r)| s.frame_accuracy(r)).collect();
    let frame_accuracy = (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64);
    if let Some(acc) = frame_accuracy {
        run.log(format!("frame accuracy {acc:.4}"));
    }
    run.write_json(
        "metrics.json",
        &PseudoLabelMetrics {
            seed: cfg.seed,
            mode: cfg.pseudo_label.mode,
            n_videos: records.len(),
            n_shots: sets.iter().map(|s| s.shots.len()).sum(),
            frame_accuracy,
        },
    )
}

#[derive(Serialize)]
struct TrainMetrics {
    seed: u64,
    n_train_samples: usize,
    n_val_samples: usize,
    history: TrainHistory,
    val: Option<EvalReport>,
}

fn train_detector_cmd(a: &TrainDetectorArgs, cfg: &mut RunConfig, run: &mut RunDir) -> Result<()> {
    let (train, val) = training_records(&a.data, cfg)?;
    run.log(format!("{} training videos, {} validation videos", train.len(), val.len()));
    let t = train_on(&train, &val, cfg, &cfg.window, cfg.train.mask)?;
    log_history(run, &t.history);
    save_checkpoint(&run.path("checkpoint.json"), &t.model, Some(t.history.clone()))?;
    let report = score_detector(&t.model, &t.val, cfg.train.mask, cfg.eval.ap_mode)?;
    run.write_json(
        "metrics.json",
        &TrainMetrics {
            seed: cfg.seed,
            n_train_samples: t.n_train,
            n_val_samples: t.val.len(),
            history: t.history,
            val: report,
        },
    )
}

#[derive(Serialize)]
struct FinetuneMetrics {
    seed: u64,
    init: &'static str,
    n_labels: usize,
    alpha: f64,
    history: TrainHistory,
    test: Option<EvalReport>,
}

fn selector_model(records: &[VideoRecord], cfg: &RunConfig, detector: Option<&Path>) -> Result<SwitchModel> {
    let per_stream = cfg.window.frames_per_delta().max(1);
    match detector {
        Some(p) => {
            let (det, _) = load_checkpoint(p, None)?;
            if det.component != Component::Detector {
                return Err(Error::ConfigMismatch(format!("{} is not a detector checkpoint", p.display())));
            }
            let sel_cfg = det.cfg.clone().with_candidates(per_stream);
            init_from_detector(&det, sel_cfg)
        }
        None => selector_from_scratch(detector_config(cfg, records).with_candidates(per_stream), build_vocab(records)),
    }
}

fn finetune_cmd(a: &FinetuneArgs, cfg: &mut RunConfig, run: &mut RunDir) -> Result<()> {
    if a.detector.is_some() && cfg.selector.from_scratch {
        return Err(Error::Config("--detector conflicts with selector.from_scratch in the config".into()));
    }
    cfg.selector.from_scratch |= a.from_scratch;
    if a.labels_n.is_some() {
        cfg.selector.labels_n = a.labels_n;
    }
    if let Some(al) = a.alpha {
        cfg.selector.joint.alpha = al;
    }
    let records = load_manifest(&a.manifest)?;
    let all = LimitedLabelSet::load_jsonl(&a.labels, &records, &cfg.window)?;
    let labels = match cfg.selector.labels_n {
        Some(n) => all.subsample(n, cfg.seed),
        None => all,
    };
    let test = a
        .test_labels
        .as_ref()
        .map(|p| LimitedLabelSet::load_jsonl(p, &records, &cfg.window))
        .transpose()?;
    if let Some(t) = &test {
        labels.check_disjoint(t)?;
    }
    let detector = if cfg.selector.from_scratch { None } else { a.detector.as_deref() };
    let mut model = selector_model(&records, cfg, detector)?;
    run.log(format!("fine-tuning on {} labels", labels.len()));
    let history = finetune_selector(&mut model, &labels, None, &cfg.train, Some(&cfg.selector.joint))?;
    log_history(run, &history);
    save_checkpoint(&run.path("checkpoint.json"), &model, Some(history.clone()))?;
    let test = test.map(|t| score_selector(&model, &t, cfg.eval.ap_mode)).transpose()?.flatten();
    run.write_json(
        "metrics.json",
        &FinetuneMetrics {
            seed: cfg.seed,
            init: if detector.is_some() { "detector" } else { "scratch" },
            n_labels: labels.len(),
            alpha: cfg.selector.joint.alpha,
            history,
            test,
        },
    )
}

/// Instances to score: best-view labels when given, else the manifest's grid.
enum Instances {
    Detector(Vec<Sample>),
    Selector(Vec<SelectorSample>),
}

impl Instances {
    fn bases(&self) -> Vec<&Sample> {
        match self {
            Instances::Detector(v) => v.iter().collect(),
            Instances::Selector(v) => v.iter().map(|s| &s.base).collect(),
        }
    }

    fn inputs(&self) -> Vec<ModelInput<'_>> {
        match self {
            Instances::Detector(v) => v.iter().map(ModelInput::Detector).collect(),
            Instances::Selector(v) => v.iter().map(ModelInput::Selector).collect(),
        }
    }

    /// Keep accepted instances and relabel them with the majority vote.
    fn filter(self, accepted: &BTreeMap<String, ViewKind>) -> Self {
        let keep = |s: &Sample| accepted.get(&instance_key(&s.video_id, s.t)).copied();
        let relabel = |s: Sample, k: ViewKind| s.with_target(crate::data::ViewLabel::certain(k));
        match self {
            Instances::Detector(v) => Instances::Detector(
                v.into_iter()
                    .filter_map(|s| keep(&s).map(|k| relabel(s, k)))
                    .collect(),
            ),
            Instances::Selector(v) => Instances::Selector(
                v.into_iter()
                    .filter_map(|mut s| {
                        let k = keep(&s.base)?;
                        s.base = relabel(s.base, k);
                        Some(s)
                    })
                    .collect(),
            ),
        }
    }
}

enum System {
    Model,
    Baseline(BaselineKind),
}

fn parse_system(s: &str) -> Result<System> {
    match s.split_once(':') {
        None if s == "model" => Ok(System::Model),
        Some(("baseline", name)) => Ok(System::Baseline(name.parse()?)),
        _ => Err(Error::Config(format!("--system must be model or baseline:<name>, got {s:?}"))),
    }
}

struct EvalContext<'a> {
    a: &'a EvalArgs,
    cfg: &'a RunConfig,
    model: Option<SwitchModel>,
    index_samples: Vec<Sample>,
}

impl EvalContext<'_> {
    fn predict(&self, system: &str, inst: &Instances) -> Result<Vec<Prediction>> {
        match parse_system(system)? {
            System::Model => {
                let m = self
                    .model
                    .as_ref()
                    .ok_or_else(|| Error::Config("--system model needs --checkpoint".into()))?;
                if m.component == Component::Selector && matches!(inst, Instances::Detector(_)) {
                    return Err(Error::MissingInput("a selector checkpoint needs --labels with candidate streams".into()));
                }
                match inst {
                    Instances::Detector(v) => v.iter().map(|s| m.forward(s, self.cfg.train.mask)).collect(),
                    Instances::Selector(v) => v
                        .iter()
                        .map(|s| match m.component {
                            Component::Detector => m.forward(&s.base, self.cfg.train.mask),
                            Component::Selector => m.predict(ModelInput::Selector(s), self.cfg.train.mask),
                        })
                        .collect(),
                }
            }
            System::Baseline(kind) => {
                let spec = BaselineSpec {
                    rng_seed: self.cfg.seed,
                    ..BaselineSpec::new(kind)
                };
                let index: Vec<&Sample> = self.index_samples.iter().collect();
                if kind.is_retrieval() && index.is_empty() {
                    return Err(Error::Config(format!("baseline {kind} needs --train-manifest")));
                }
                let b = Baseline::build(spec, self.model.as_ref(), &index)?;
                inst.inputs().into_iter().map(|x| b.predict(x)).collect()
            }
        }
    }
}

#[derive(Serialize)]
struct EvalMetrics<'a> {
    seed: u64,
    system: &'a str,
    n_votes: Option<usize>,
    agreement_threshold: Option<f64>,
    #[serde(flatten)]
    report: EvalReport,
    config: &'a RunConfig,
}

fn eval_cmd(a: &EvalArgs, cfg: &mut RunConfig, run: &mut RunDir) -> Result<()> {
    if a.agreement_threshold.is_some() {
        cfg.eval.agreement_threshold = a.agreement_threshold.clone();
    }
    cfg.eval.by_scenario |= a.by_scenario;
    let cfg = &*cfg;
    let records = load_manifest(&a.manifest)?;
    let mut inst = match &a.labels {
        Some(p) => Instances::Selector(LimitedLabelSet::load_jsonl(p, &records, &cfg.window)?.samples),
        None => Instances::Detector(build_samples(&records, &cfg.window, cfg.stride_s)?),
    };
    let mut n_votes = None;
    let mut threshold = None;
    if let Some(v) = &a.votes {
        let votes: Vec<AnnotationInstance> = read_jsonl(v)?;
        let th = parse_threshold(cfg.eval.agreement_threshold.as_deref().unwrap_or("7/9"))?;
        let accepted: BTreeMap<String, ViewKind> = filter_instances(&votes, th)
            .into_iter()
            .filter_map(|x| Some((x.instance_id, x.accepted_label?)))
            .collect();
        run.log(format!("{} of {} voted instances pass agreement {th:.3}", accepted.len(), votes.len()));
        inst = inst.filter(&accepted);
        n_votes = Some(votes.len());
        threshold = Some(th);
    }
    let model = a.checkpoint.as_ref().map(|p| load_checkpoint(p, None)).transpose()?.map(|(m, _)| m);
    let index_samples = match &a.train_manifest {
        Some(p) => build_samples(&load_manifest(p)?, &cfg.window, cfg.stride_s)?,
        None => Vec::new(),
    };
    let ctx = EvalContext {
        a,
        cfg,
        model,
        index_samples,
    };
    let preds = ctx.predict(&a.system, &inst)?;
    let ei: Vec<EvalInstance> = inst.bases().into_iter().map(EvalInstance::of).collect();
    let mut report = balanced_report(&preds, &ei, cfg.eval.ap_mode)?;
    if let Some(other) = &ctx.a.compare {
        let pb = ctx.predict(other, &inst)?;
        let ka: Vec<ViewKind> = preds.iter().map(|p| p.kind()).collect();
        let kb: Vec<ViewKind> = pb.iter().map(|p| p.kind()).collect();
        report.significance = Some(Significance {
            test_name: "paired_bootstrap_balanced_accuracy".into(),
            reference: other.clone(),
            p_value: significance(&ka, &kb, &ei, cfg.eval.n_resamples, cfg.seed)?,
        });
    }
    if cfg.eval.by_scenario {
        let csv = report.scenario_csv();
        let p = run.path("scenarios.csv");
        std::fs::write(&p, csv).map_err(|e| Error::io(&p, e))?;
    } else {
        report.by_scenario.clear();
    }
    if let Some(b) = &report.balanced {
        run.log(format!("{}: balanced accuracy {:.4}", a.system, b.accuracy));
    }
    run.write_json(
        "metrics.json",
        &EvalMetrics {
            seed: cfg.seed,
            system: &a.system,
            n_votes,
            agreement_threshold: threshold,
            report,
            config: cfg,
        },
    )
}

/// Mask with the given groups omitted.
pub fn mask_without(drops: &[Drop]) -> Result<InputMask> {
    let mut m = InputMask::ALL;
    for d in drops {
        match d {
            Drop::F => m.frames = false,
            Drop::N => m.past_narrations = false,
            Drop::Nprime => m.next_narration = false,
        }
    }
    if !(m.frames || m.past_narrations || m.next_narration) {
        return Err(Error::Config("cannot drop every input group".into()));
    }
    Ok(m)
}

#[derive(Serialize)]
struct AblateMetrics {
    seed: u64,
    inputs: String,
    dropped: Vec<Drop>,
    /// Token roles seen in the assembled validation sequences.
    roles: Vec<Role>,
    history: TrainHistory,
    val: Option<EvalReport>,
}

fn ablate_cmd(a: &AblateArgs, cfg: &mut RunConfig, run: &mut RunDir) -> Result<()> {
    let mask = mask_without(&a.drop)?;
    cfg.train.mask = mask;
    let (train, val) = training_records(&a.data, cfg)?;
    run.log(format!("training the {} variant", mask.label()));
    let t = train_on(&train, &val, cfg, &cfg.window, mask)?;
    log_history(run, &t.history);
    save_checkpoint(&run.path("checkpoint.json"), &t.model, Some(t.history.clone()))?;
    let mut roles = BTreeSet::new();
    for s in &t.val {
        let seq = t.model.assemble_tokens(ModelInput::Detector(s), mask)?;
        roles.extend(seq.roles.iter().map(|r| *r as u8));
    }
    let all = [Role::Frame, Role::PastNarr, Role::NextNarr, Role::CandEgo, Role::CandExo, Role::Cls];
    let roles = all.into_iter().filter(|r| roles.contains(&(*r as u8))).collect();
    let report = score_detector(&t.model, &t.val, mask, cfg.eval.ap_mode)?;
    run.write_json(
        "metrics.json",
        &AblateMetrics {
            seed: cfg.seed,
            inputs: mask.label(),
            dropped: a.drop.clone(),
            roles,
            history: t.history,
            val: report,
        },
    )
}

#[derive(Serialize)]
struct WindowRow {
    past_frames_s: f64,
    past_narrations_s: f64,
    n_train_samples: usize,
    best_epoch: usize,
    val_balanced_accuracy: Option<f64>,
    val_balanced_ap: Option<f64>,
}

#[derive(Serialize)]
struct LabelRow {
    labels_n: usize,
    init: &'static str,
    test_balanced_accuracy: Option<f64>,
    test_balanced_ap: Option<f64>,
}

#[derive(Serialize)]
struct SweepMetrics {
    seed: u64,
    windows: Vec<WindowRow>,
    labels: Vec<LabelRow>,
}

fn sweep_cmd(a: &SweepArgs, cfg: &mut RunConfig, run: &mut RunDir) -> Result<()> {
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    if a.labels_n.is_empty() {
        let (train, val) = training_records(&a.data, cfg)?;
        let tfs = if a.tf.is_empty() { vec![cfg.window.past_frames_s] } else { a.tf.clone() };
        let tns = if a.tn.is_empty() { vec![cfg.window.past_narrations_s] } else { a.tn.clone() };
        for &tf in &tfs {
            for &tn in &tns {
                let w = WindowConfig {
                    past_frames_s: tf,
                    past_narrations_s: tn,
                    ..cfg.window.clone()
                };
                let t = train_on(&train, &val, cfg, &w, cfg.train.mask)?;
                let r = score_detector(&t.model, &t.val, cfg.train.mask, cfg.eval.ap_mode)?;
                let bal = r.and_then(|r| r.balanced);
                run.log(format!(
                    "T^F {tf} s, T^N {tn} s: val balanced accuracy {}",
                    bal.as_ref().map_or("n/a".into(), |b| format!("{:.4}", b.accuracy))
                ));
                windows.push(WindowRow {
                    past_frames_s: tf,
                    past_narrations_s: tn,
                    n_train_samples: t.n_train,
                    best_epoch: t.history.best_epoch,
                    val_balanced_accuracy: bal.as_ref().map(|b| b.accuracy),
                    val_balanced_ap: bal.and_then(|b| b.ap),
                });
            }
        }
    } else {
        // clap enforces these.
        let (lp, tp, dp) = (a.labels.as_ref().unwrap(), a.test_labels.as_ref().unwrap(), a.detector.as_ref().unwrap());
        let records = load_manifest(&a.data.manifest)?;
        let all = LimitedLabelSet::load_jsonl(lp, &records, &cfg.window)?;
        let test = LimitedLabelSet::load_jsonl(tp, &records, &cfg.window)?;
        all.check_disjoint(&test)?;
        for &n in &a.labels_n {
            let sub = all.subsample(n, cfg.seed);
            for (init, det) in [("detector", Some(dp.as_path())), ("scratch", None)] {
                let mut m = selector_model(&records, cfg, det)?;
                finetune_selector(&mut m, &sub, None, &cfg.train, Some(&cfg.selector.joint))?;
                let bal = score_selector(&m, &test, cfg.eval.ap_mode)?.and_then(|r| r.balanced);
                run.log(format!(
                    "{n} labels from {init}: test balanced accuracy {}",
                    bal.as_ref().map_or("n/a".into(), |b| format!("{:.4}", b.accuracy))
                ));
                labels.push(LabelRow {
                    labels_n: sub.len(),
                    init,
                    test_balanced_accuracy: bal.as_ref().map(|b| b.accuracy),
                    test_balanced_ap: bal.and_then(|b| b.ap),
                });
            }
        }
    }
    run.write_json(
        "metrics.json",
        &SweepMetrics {
            seed: cfg.seed,
            windows,
            labels,
        },
    )
}

// ---------------------------------------------------------------- entry points

/// Run one parsed command, writing its run directory.
pub fn execute(cli: &Cli) -> Result<()> {
    let ra = cli.command.run_args();
    let mut run = RunDir::create(&ra.out)?;
    let base = match &ra.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = base.resolve(ra.seed);
    run.log(format!("swav {} (seed {})", cli.command.name(), cfg.seed));
    let result = match &cli.command {
        Command::SynthGen(a) => synth_gen(a, &mut cfg, &mut run),
        Command::PseudoLabel(a) => pseudo_label(a, &mut cfg, &mut run),
        Command::TrainDetector(a) => train_detector_cmd(a, &mut cfg, &mut run),
        Command::FinetuneSelector(a) => finetune_cmd(a, &mut cfg, &mut run),
        Command::Eval(a) => eval_cmd(a, &mut cfg, &mut run),
        Command::Ablate(a) => ablate_cmd(a, &mut cfg, &mut run),
        Command::Sweep(a) => sweep_cmd(a, &mut cfg, &mut run),
    };
    // The echo reflects flag overrides, so it is written last.
    run.write_json(
        "config.json",
        &ConfigEcho {
            command: cli.command.name(),
            args: &cli.command,
            config: &cfg,
        },
    )?;
    result
}

/// Write `error.json` into the run directory, if there is one.
pub fn record_failure(cli: &Cli, err: &Error) -> ErrorRecord {
    let rec = ErrorRecord {
        command: cli.command.name().to_string(),
        error: err.kind().to_string(),
        message: err.to_string(),
    };
    let out = &cli.command.run_args().out;
    if std::fs::create_dir_all(out).is_ok() {
        let _ = write_json(&out.join("error.json"), &rec);
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::sample_times;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("swav").chain(args.iter().copied()))
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(RunConfig::from_toml("seed = 3\n[window]\ndelta_s = 2.0\n").is_ok());
        assert!(matches!(RunConfig::from_toml("sed = 3\n"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("[train]\nepochz = 3\n").is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn seed_is_copied_everywhere() {
        let c = RunConfig::default().resolve(Some(9));
        assert_eq!((c.seed, c.model.seed, c.train.seed), (9, 9, 9));
    }

    #[test]
    fn conflicting_flags_are_usage_errors() {
        let base = ["finetune-selector", "--out", "o", "--manifest", "m", "--labels", "l"];
        let mut both = base.to_vec();
        both.extend(["--detector", "d", "--from-scratch"]);
        assert!(parse(&both).is_err());
        assert!(parse(&base).is_err());
        let mut ok = base.to_vec();
        ok.push("--from-scratch");
        assert!(parse(&ok).is_ok());

        assert!(parse(&["eval", "--out", "o", "--manifest", "m", "--system", "model", "--agreement-threshold", "8/9"]).is_err());
        assert!(parse(&["sweep", "--out", "o", "--manifest", "m", "--tf", "2", "--labels-n", "250", "--labels", "l", "--test-labels", "t", "--detector", "d"]).is_err());
        assert!(parse(&["sweep", "--out", "o", "--manifest", "m", "--labels-n", "250"]).is_err());
    }

    #[test]
    fn drop_flags_build_masks() {
        let cli = parse(&["ablate", "--out", "o", "--manifest", "m", "--drop", "F", "--drop", "N"]).unwrap();
        let Command::Ablate(a) = cli.command else { panic!() };
        assert_eq!(mask_without(&a.drop).unwrap(), InputMask::only_next_narration());
        assert!(mask_without(&[Drop::F, Drop::N, Drop::Nprime]).is_err());
        assert!(parse(&["ablate", "--out", "o", "--manifest", "m", "--drop", "X"]).is_err());
    }

    #[test]
    fn systems_parse() {
        assert!(matches!(parse_system("model"), Ok(System::Model)));
        assert!(matches!(parse_system("baseline:all_exo"), Ok(System::Baseline(BaselineKind::AllExo))));
        assert!(parse_system("baseline:nope").is_err());
        assert!(parse_system("oracle").is_err());
    }

    #[test]
    fn validation_split_keeps_a_training_video() {
        let recs: Vec<VideoRecord> = (0..5).map(|i| crate::testutil::toy_record(4, i)).collect();
        let (t, v) = split_records(recs.clone(), 0.2);
        assert_eq!((t.len(), v.len()), (4, 1));
        assert_eq!(v[0], recs[4]);
        let (t, v) = split_records(recs[..1].to_vec(), 0.5);
        assert_eq!((t.len(), v.len()), (1, 0));
    }

    #[test]
    fn sample_times_used_for_labels_match_keys() {
        let r = crate::testutil::toy_record(4, 0);
        let w = crate::testutil::small_window();
        let keys: Vec<String> = sample_times(&r, &w, 2.0).iter().map(|&t| instance_key(&r.video_id, t)).collect();
        assert!(keys[0].ends_with("@2.000"));
    }
}
