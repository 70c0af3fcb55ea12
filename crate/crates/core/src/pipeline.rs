//! Declarative experiment runner. Every step records content hashes of what
//! it read and wrote in a ledger; a rerun skips a step whose inputs and
//! parameters hash the same and whose outputs are still on disk unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{self, distance_similarity_profile, select_graphs, SimilarityProfile};
use crate::baselines::{baseline_notes, Baseline, BaselineConfig, BaselineKind};
use crate::dag::{build_all, make_split, sample_walks, DataSplit, OntologyDag, WalkBatch, WalkConfig};
use crate::downstream::{
    link_prediction_eval, make_link_split, train_shallow, LinkResult, NodeVectors, Scorer, ShallowConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{score_run, write_generations, DecodeMode, MetricOptions, MetricReport, MODEL_ORDER};
use crate::models::transformer::TransformerConfig;
use crate::models::{generate_records, make_examples, train, Checkpoint, TrainConfig};
use crate::obo::{ingest_dir, read_jsonl, write_jsonl, GraphManifest, RawTerm};
use crate::stage1::{
    bootstrap_test_definitions, train_definition_side, train_terminology_side, BootstrapDefinition,
    NodeEmbeddingSet, SideEmbeddings, Stage1Config,
};
use crate::stage2::{LocalProvider, LocalTable, Stage2Config, Stage2Model, Stage2Shape};
use crate::synthetic::{synthetic_terms, SyntheticConfig};
use crate::text::Vocabulary;

/// Overrides `out_dir` when set.
pub const OUT_ENV: &str = "GRAPHEX_OUT";
pub const LEDGER_FILE: &str = "ledger.json";
const LEDGER_FORMAT: &str = "graphex-ledger/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSource {
    /// Generated tree corpus.
    Synthetic(SyntheticConfig),
    /// `.obo` files; subdirectories name their database.
    OboDir { path: PathBuf },
    /// Term records as JSON lines.
    Corpus { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub enabled: bool,
    pub threshold: f64,
    pub pair_budget: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: analysis::DEFAULT_THRESHOLD,
            pair_budget: analysis::DEFAULT_PAIR_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkSection {
    pub walks_per_node: usize,
    pub walk_length: usize,
}

impl Default for WalkSection {
    fn default() -> Self {
        let w = WalkConfig::default();
        Self {
            walks_per_node: w.walks_per_node,
            walk_length: w.walk_length,
        }
    }
}

/// Sizes of the recurrent baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RnnSection {
    pub word_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub kl_anneal_epochs: usize,
}

impl Default for RnnSection {
    fn default() -> Self {
        let c = BaselineConfig::new(BaselineKind::Cvae);
        Self {
            word_dim: c.word_dim,
            hidden_dim: c.hidden_dim,
            latent_dim: c.latent_dim.unwrap_or(64),
            kl_anneal_epochs: c.kl_anneal_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Section {
    pub decode: DecodeMode,
    /// Precomputed local vectors; the trainable provider when absent.
    pub local_lookup: Option<PathBuf>,
}

impl Default for Stage2Section {
    fn default() -> Self {
        Self {
            decode: DecodeMode::Greedy,
            local_lookup: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsSection {
    pub synonyms: Option<PathBuf>,
    pub nist_order: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let m = MetricOptions::default();
        Self {
            synonyms: m.synonyms,
            nist_order: m.nist_order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DownstreamSection {
    pub linkpred: bool,
    pub shallow: ShallowConfig,
}

impl Default for DownstreamSection {
    fn default() -> Self {
        Self {
            linkpred: true,
            shallow: ShallowConfig::default(),
        }
    }
}

/// Model, metric and downstream settings. Seeds are supplied per run; the
/// `seed` fields inside sections are overwritten with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub min_count: usize,
    pub selection: SelectionConfig,
    pub walk: WalkSection,
    pub stage1: Stage1Config,
    /// Shared by the plain Transformer, the bootstrap model and stage 2.
    pub transformer: TransformerConfig,
    /// Shared by every generative model.
    pub train: TrainConfig,
    pub rnn: RnnSection,
    pub baselines: Vec<BaselineKind>,
    pub stage2: Stage2Section,
    pub metrics: MetricsSection,
    pub downstream: DownstreamSection,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            min_count: 1,
            selection: SelectionConfig::default(),
            walk: WalkSection::default(),
            stage1: Stage1Config::default(),
            transformer: TransformerConfig::default(),
            train: TrainConfig::default(),
            rnn: RnnSection::default(),
            baselines: vec![BaselineKind::Seq2seq, BaselineKind::Cvae, BaselineKind::Transformer],
            stage2: Stage2Section::default(),
            metrics: MetricsSection::default(),
            downstream: DownstreamSection::default(),
        }
    }
}

impl ModelSettings {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a settings file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut s = Self::parse(&text)?;
        s.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        s.validate()?;
        Ok(s)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.stage2.local_lookup, &mut self.metrics.synonyms].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.min_count == 0 {
            return bad("min_count must be at least 1".into());
        }
        for p in self.stage2.local_lookup.iter().chain(&self.metrics.synonyms) {
            if !p.exists() {
                return bad(format!("{} does not exist", p.display()));
            }
        }
        if !self.baselines.contains(&BaselineKind::Transformer) {
            return bad("baselines must include transformer; it also produces the bootstrap definitions".into());
        }
        self.walk_config(0).validate()?;
        self.transformer.validate()?;
        for kind in &self.baselines {
            self.baseline_config(*kind, 0).validate()?;
        }
        if self.stage1.word_dim == 0 || self.stage1.hidden_dim == 0 || self.stage1.batch_size == 0 {
            return bad("stage1 dimensions and batch size must be positive".into());
        }
        if self.train.batch_size == 0 || self.train.epochs == 0 {
            return bad("train needs positive epochs and batch size".into());
        }
        Ok(())
    }

    pub fn walk_config(&self, seed: u64) -> WalkConfig {
        WalkConfig {
            walks_per_node: self.walk.walks_per_node,
            walk_length: self.walk.walk_length,
            seed,
        }
    }

    pub fn stage1_config(&self, seed: u64) -> Stage1Config {
        Stage1Config {
            seed,
            ..self.stage1.clone()
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }

    pub fn baseline_config(&self, kind: BaselineKind, seed: u64) -> BaselineConfig {
        BaselineConfig {
            kind,
            word_dim: self.rnn.word_dim,
            hidden_dim: self.rnn.hidden_dim,
            latent_dim: (kind == BaselineKind::Cvae).then_some(self.rnn.latent_dim),
            kl_anneal_epochs: self.rnn.kl_anneal_epochs,
            transformer: self.transformer.clone(),
            train: self.train_config(seed),
            decode: self.stage2.decode,
            seed,
        }
    }

    pub fn stage2_config(&self, use_tg: bool, use_dg: bool, seed: u64) -> Stage2Config {
        Stage2Config {
            transformer: self.transformer.clone(),
            use_tg,
            use_dg,
            train: self.train_config(seed),
            decode: self.stage2.decode,
            seed,
        }
    }

    pub fn metric_options(&self) -> MetricOptions {
        MetricOptions {
            synonyms: self.metrics.synonyms.clone(),
            nist_order: self.metrics.nist_order,
        }
    }
}

/// One experiment: where the terms come from, which seeds to run and where
/// to write, plus the model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub input: InputSource,
    #[serde(flatten)]
    pub settings: ModelSettings,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads, resolves relative paths against the file's directory, applies
    /// the [`OUT_ENV`] override and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        if let Some(out) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
            cfg.out_dir = PathBuf::from(out);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        match &mut self.input {
            InputSource::OboDir { path } | InputSource::Corpus { path } => fix(path),
            InputSource::Synthetic(_) => {}
        }
        self.settings.resolve_paths(base);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must list at least one seed".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        match &self.input {
            InputSource::OboDir { path } | InputSource::Corpus { path } if !path.exists() => {
                return bad(format!("{} does not exist", path.display()));
            }
            InputSource::Synthetic(s) if s.nodes < crate::dag::MIN_SPLIT_NODES => {
                return bad(format!("synthetic corpus needs at least {} nodes", crate::dag::MIN_SPLIT_NODES));
            }
            _ => {}
        }
        self.settings.validate()
    }
}

/// The three graph-conditioned rows of the results table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    WithoutTg,
    WithoutDg,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::WithoutTg, Variant::WithoutDg, Variant::Full];

    pub fn flags(self) -> (bool, bool) {
        match self {
            Variant::Full => (true, true),
            Variant::WithoutTg => (false, true),
            Variant::WithoutDg => (true, false),
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Variant::Full => "ours",
            Variant::WithoutTg => "ours-wo-tg",
            Variant::WithoutDg => "ours-wo-dg",
        }
    }
}

/// File stem used for a table row's artifacts.
pub fn model_slug(label: &str) -> Option<&'static str> {
    Some(match label {
        "Seq2Seq" => "seq2seq",
        "CVAE" => "cvae",
        "Transformer" => "transformer",
        "Our Model w/o TG" => "ours-wo-tg",
        "Our Model w/o DG" => "ours-wo-dg",
        "Our Model" => "ours",
        _ => return None,
    })
}

/// Which definitions a step could see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefinitionAccess {
    /// Never touches definition text.
    None,
    /// Data preparation before any split exists.
    Unsplit,
    Train,
    /// Training definitions plus validation definitions for model selection.
    TrainValid,
    /// Scoring against test references.
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: String,
    pub dag: Option<String>,
    pub seed: Option<u64>,
    /// Hash of the step name, its parameters and its input hashes.
    pub key: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub definitions: DefinitionAccess,
    pub seconds: f64,
    /// Taken from an earlier run rather than recomputed.
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub format: String,
    pub steps: Vec<StepRecord>,
}

impl Default for RunLedger {
    fn default() -> Self {
        Self {
            format: LEDGER_FORMAT.into(),
            steps: Vec::new(),
        }
    }
}

impl RunLedger {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let l: Self = serde_json::from_str(&text)?;
        if l.format != LEDGER_FORMAT {
            return Err(Error::format("ledger", format!("unknown format {}", l.format)));
        }
        Ok(l)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn find(&self, step: &str, dag: Option<&str>, seed: Option<u64>) -> Option<&StepRecord> {
        self.steps
            .iter()
            .find(|r| r.step == step && r.dag.as_deref() == dag && r.seed == seed)
    }

    pub fn recomputed(&self) -> Vec<&StepRecord> {
        self.steps.iter().filter(|r| !r.reused).collect()
    }

    /// Checks that each step's recorded input hashes match the current files
    /// under `root`. Inputs later rewritten by a rerun legitimately change, so
    /// this is meaningful right after a run.
    pub fn verify(&self, root: &Path) -> Result<()> {
        for r in &self.steps {
            for (p, h) in r.inputs.iter().chain(&r.outputs) {
                let got = hash_file(&resolve(root, p))?;
                if &got != h {
                    return Err(Error::Invalid(format!("{}: {p} changed since it was recorded", r.step)));
                }
            }
        }
        Ok(())
    }
}

fn resolve(root: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hash_bytes(&bytes))
}

/// Executes steps against the previous ledger.
struct Runner<'a> {
    root: &'a Path,
    prev: &'a RunLedger,
}

struct Step<'a> {
    name: String,
    dag: Option<&'a str>,
    seed: Option<u64>,
    params: serde_json::Value,
    inputs: Vec<PathBuf>,
    definitions: DefinitionAccess,
}

impl Runner<'_> {
    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(self.root).unwrap_or(p).to_string_lossy().into_owned()
    }

    /// Runs `body` unless an identical earlier execution is still valid.
    /// `body` returns the files it wrote.
    fn run(&self, step: Step<'_>, body: impl FnOnce() -> Result<Vec<PathBuf>>) -> Result<StepRecord> {
        let wrap = |e: Error| Error::Step {
            step: match step.dag {
                Some(d) => format!("{} [{d} seed {}]", step.name, step.seed.unwrap_or_default()),
                None => step.name.clone(),
            },
            source: Box::new(e),
        };
        let mut inputs = BTreeMap::new();
        for p in &step.inputs {
            inputs.insert(self.rel(p), hash_file(p).map_err(wrap)?);
        }
        let mut h = Sha256::new();
        h.update(step.name.as_bytes());
        h.update([0]);
        h.update(step.params.to_string().as_bytes());
        for (p, d) in &inputs {
            h.update([0]);
            h.update(p.as_bytes());
            h.update([0]);
            h.update(d.as_bytes());
        }
        let key = hex::encode(h.finalize());

        if let Some(old) = self.prev.find(&step.name, step.dag, step.seed) {
            let intact = old.key == key
                && old
                    .outputs
                    .iter()
                    .all(|(p, d)| hash_file(&resolve(self.root, p)).is_ok_and(|got| &got == d));
            if intact {
                log::info!("{}: inputs unchanged, reusing outputs", step.name);
                return Ok(StepRecord {
                    reused: true,
                    ..old.clone()
                });
            }
        }
        log::info!("{}: running", step.name);
        let t = Instant::now();
        let written = body().map_err(wrap)?;
        let seconds = t.elapsed().as_secs_f64();
        let mut outputs = BTreeMap::new();
        for p in &written {
            outputs.insert(self.rel(p), hash_file(p).map_err(wrap)?);
        }
        Ok(StepRecord {
            step: step.name,
            dag: step.dag.map(str::to_string),
            seed: step.seed,
            key,
            inputs,
            outputs,
            definitions: step.definitions,
            seconds,
            reused: false,
        })
    }
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config types serialize")
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Directory holding one DAG/seed experiment.
pub fn unit_dir(root: &Path, dag: &str, seed: u64) -> PathBuf {
    root.join(sanitize(dag)).join(format!("seed-{seed}"))
}

/// File-system safe form of a graph name.
pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn dag_path(root: &Path, dag: &str) -> PathBuf {
    root.join("dags").join(format!("{}.json", sanitize(dag)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub enabled: bool,
    pub threshold: f64,
    pub profiles: Vec<SimilarityProfile>,
    pub selected: Vec<String>,
    /// Graphs too small to split.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BootstrapRecord {
    term_id: String,
    tokens: Vec<String>,
    substituted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPredReport {
    pub stage1_terminology: LinkResult,
    pub shallow: LinkResult,
    pub scorer: Scorer,
    pub notes: Vec<String>,
}

/// Runs every step, saving the ledger after each phase so a failed run can
/// resume. Returns the ledger of this run.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunLedger> {
    cfg.validate()?;
    let root = cfg.out_dir.as_path();
    mkdir(root)?;
    let ledger_path = root.join(LEDGER_FILE);
    let prev = if ledger_path.exists() {
        RunLedger::load(&ledger_path)?
    } else {
        RunLedger::default()
    };
    let runner = Runner { root, prev: &prev };
    let mut ledger = RunLedger::default();

    let global = global_steps(cfg, &runner, &mut ledger);
    ledger.save(&ledger_path)?;
    let selected = global?;

    let units: Vec<(String, u64)> = selected
        .iter()
        .flat_map(|d| cfg.seeds.iter().map(move |&s| (d.clone(), s)))
        .collect();
    let results: Vec<(Vec<StepRecord>, Result<()>)> = units
        .par_iter()
        .map(|(dag, seed)| {
            let mut records = Vec::new();
            let r = unit_steps(cfg, &runner, dag, *seed, &mut records);
            (records, r)
        })
        .collect();
    let mut first_err = None;
    for (records, r) in results {
        ledger.steps.extend(records);
        if let (Err(e), None) = (r, &first_err) {
            first_err = Some(e);
        }
    }
    ledger.save(&ledger_path)?;
    for (dag, seed) in &units {
        let dir = unit_dir(root, dag, *seed);
        for (fmt, file) in [(TableFormat::Markdown, "table.md"), (TableFormat::Csv, "table.csv")] {
            let t = report_table(&ledger, root, dag, *seed, fmt)?;
            let p = dir.join(file);
            std::fs::write(&p, t).map_err(|e| Error::io(&p, e))?;
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(ledger),
    }
}

fn global_steps(cfg: &ExperimentConfig, runner: &Runner<'_>, ledger: &mut RunLedger) -> Result<Vec<String>> {
    let root = runner.root;
    let corpus = root.join("corpus");
    let terms_path = corpus.join("terms.jsonl");
    let manifests_path = corpus.join("manifests.json");

    let input_files: Vec<PathBuf> = match &cfg.input {
        InputSource::Synthetic(_) => Vec::new(),
        InputSource::Corpus { path } => vec![path.clone()],
        InputSource::OboDir { path } => {
            let mut v = Vec::new();
            collect_files(path, "obo", &mut v)?;
            v.sort();
            v
        }
    };
    let rec = runner.run(
        Step {
            name: "ingest".into(),
            dag: None,
            seed: None,
            params: json(&cfg.input),
            inputs: input_files,
            definitions: DefinitionAccess::Unsplit,
        },
        || {
            mkdir(&corpus)?;
            let (manifests, terms): (Vec<GraphManifest>, Vec<RawTerm>) = match &cfg.input {
                InputSource::Synthetic(s) => {
                    let terms = synthetic_terms(s)?;
                    (vec![GraphManifest::from_terms(&s.graph, Vec::new(), &terms)], terms)
                }
                InputSource::Corpus { path } => {
                    let terms: Vec<RawTerm> = read_jsonl(path)?;
                    let mut by_graph: BTreeMap<&str, Vec<RawTerm>> = BTreeMap::new();
                    for t in &terms {
                        by_graph.entry(&t.graph).or_default().push(t.clone());
                    }
                    let m = by_graph
                        .iter()
                        .map(|(g, ts)| GraphManifest::from_terms(g, vec![path.clone()], ts))
                        .collect();
                    (m, terms)
                }
                InputSource::OboDir { path } => {
                    let (merged, rejects) = ingest_dir(path)?;
                    write_jsonl(&corpus.join("rejects.jsonl"), &rejects)?;
                    write_json(&corpus.join("conflicts.json"), &merged.conflicts)?;
                    let mut manifests = Vec::new();
                    let mut terms = Vec::new();
                    for (m, ts) in merged.graphs {
                        manifests.push(m);
                        terms.extend(ts);
                    }
                    (manifests, terms)
                }
            };
            write_jsonl(&terms_path, &terms)?;
            write_json(&manifests_path, &manifests)?;
            let mut out = vec![terms_path.clone(), manifests_path.clone()];
            if matches!(cfg.input, InputSource::OboDir { .. }) {
                out.push(corpus.join("rejects.jsonl"));
                out.push(corpus.join("conflicts.json"));
            }
            Ok(out)
        },
    )?;
    ledger.steps.push(rec);

    let index_path = root.join("dags").join("index.json");
    let rec = runner.run(
        Step {
            name: "build".into(),
            dag: None,
            seed: None,
            params: serde_json::Value::Null,
            inputs: vec![terms_path.clone()],
            definitions: DefinitionAccess::Unsplit,
        },
        || {
            let terms: Vec<RawTerm> = read_jsonl(&terms_path)?;
            mkdir(&root.join("dags"))?;
            let mut names = Vec::new();
            let mut out = Vec::new();
            for (g, report) in build_all(&terms)? {
                if !report.dropped_back_edges.is_empty() {
                    log::warn!("{}: dropped {} cycle-closing edges", g.name, report.dropped_back_edges.len());
                }
                let p = dag_path(root, &g.name);
                g.save(&p)?;
                names.push(g.name.clone());
                out.push(p);
            }
            write_json(&index_path, &names)?;
            out.push(index_path.clone());
            Ok(out)
        },
    )?;
    ledger.steps.push(rec);
    let names: Vec<String> = read_json(&index_path)?;

    // Splits for every DAG and seed; selection reads the first seed's.
    let mut skipped = Vec::new();
    let mut splittable = Vec::new();
    for name in &names {
        let g = OntologyDag::load(&dag_path(root, name))?;
        if g.nodes().iter().filter(|n| n.has_definition()).count() < crate::dag::MIN_SPLIT_NODES {
            log::warn!("{name}: too few defined nodes to split; skipped");
            skipped.push(name.clone());
            continue;
        }
        for &seed in &cfg.seeds {
            let dir = unit_dir(root, name, seed);
            let split_path = dir.join("split.json");
            let rec = runner.run(
                Step {
                    name: "split".into(),
                    dag: Some(name),
                    seed: Some(seed),
                    params: json(&seed),
                    inputs: vec![dag_path(root, name)],
                    definitions: DefinitionAccess::None,
                },
                || {
                    mkdir(&dir)?;
                    make_split(&g, seed)?.save(&split_path)?;
                    Ok(vec![split_path.clone()])
                },
            )?;
            ledger.steps.push(rec);
        }
        splittable.push(name.clone());
    }

    let selection_path = root.join("selection.json");
    let first = cfg.seeds[0];
    let mut inputs = Vec::new();
    for name in &splittable {
        inputs.push(dag_path(root, name));
        inputs.push(unit_dir(root, name, first).join("split.json"));
    }
    let rec = runner.run(
        Step {
            name: "select".into(),
            dag: None,
            seed: Some(first),
            params: json(&cfg.settings.selection),
            inputs,
            definitions: DefinitionAccess::Train,
        },
        || {
            let profiles: Vec<SimilarityProfile> = splittable
                .iter()
                .map(|name| {
                    let g = OntologyDag::load(&dag_path(root, name))?;
                    let split = DataSplit::load(&unit_dir(root, name, first).join("split.json"))?;
                    let train_only = g.with_visible_definitions(&split.train_set());
                    Ok(distance_similarity_profile(&train_only, &split, cfg.settings.selection.pair_budget, first))
                })
                .collect::<Result<_>>()?;
            let selected = if cfg.settings.selection.enabled {
                select_graphs(&profiles, cfg.settings.selection.threshold)
            } else {
                splittable.clone()
            };
            write_json(
                &selection_path,
                &SelectionReport {
                    enabled: cfg.settings.selection.enabled,
                    threshold: cfg.settings.selection.threshold,
                    profiles,
                    selected,
                    skipped: skipped.clone(),
                },
            )?;
            Ok(vec![selection_path.clone()])
        },
    )?;
    ledger.steps.push(rec);
    let sel: SelectionReport = read_json(&selection_path)?;
    if sel.selected.is_empty() {
        log::warn!("no graph passed selection");
    }
    Ok(sel.selected)
}

fn collect_files(dir: &Path, ext: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            collect_files(&p, ext, out)?;
        } else if p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)) {
            out.push(p);
        }
    }
    Ok(())
}

/// Vocabulary over all terminologies and the training definitions.
pub fn build_vocab(g: &OntologyDag, split: &DataSplit, min_count: usize) -> Result<Vocabulary> {
    let mut seqs: Vec<&[String]> = g.nodes().iter().map(|n| n.terminology.as_slice()).collect();
    for &i in &split.train {
        if let Some(d) = &g.node(i).definition_tokens {
            seqs.push(d);
        }
    }
    Vocabulary::build(seqs, min_count)
}

fn load_bootstrap(path: &Path, g: &OntologyDag, vocab: &Vocabulary) -> Result<BTreeMap<usize, BootstrapDefinition>> {
    let recs: Vec<BootstrapRecord> = read_jsonl(path)?;
    recs.into_iter()
        .map(|r| {
            let i = g
                .index_of(&r.term_id)
                .ok_or_else(|| Error::Invalid(format!("bootstrap names unknown node {}", r.term_id)))?;
            Ok((
                i,
                BootstrapDefinition {
                    tokens: vocab.numericalize(&r.tokens),
                    substituted: r.substituted,
                },
            ))
        })
        .collect()
}

fn unit_steps(
    cfg: &ExperimentConfig,
    runner: &Runner<'_>,
    dag: &str,
    seed: u64,
    records: &mut Vec<StepRecord>,
) -> Result<()> {
    let root = runner.root;
    let dir = unit_dir(root, dag, seed);
    let models_dir = dir.join("models");
    let reports_dir = dir.join("reports");
    let gen_dir = dir.join("generations");
    for d in [&models_dir, &reports_dir, &gen_dir] {
        mkdir(d)?;
    }
    let dag_file = dag_path(root, dag);
    let split_path = dir.join("split.json");
    let vocab_path = dir.join("vocab.txt");
    let walks_path = dir.join("walks.txt");
    let term_side_path = dir.join("stage1_terminology.side");
    let emb_path = dir.join("embeddings.emb");
    let bootstrap_path = dir.join("bootstrap.jsonl");
    let step = |name: &str, params: serde_json::Value, inputs: Vec<PathBuf>, definitions| Step {
        name: name.to_string(),
        dag: Some(dag),
        seed: Some(seed),
        params,
        inputs,
        definitions,
    };

    let g = OntologyDag::load(&dag_file)?;
    let split = DataSplit::load(&split_path)?;
    let train_only = g.with_visible_definitions(&split.train_set());
    let train_valid = g.with_visible_definitions(&split.train.iter().chain(&split.valid).copied().collect());

    records.push(runner.run(
        step(
            "vocab",
            json(&cfg.settings.min_count),
            vec![dag_file.clone(), split_path.clone()],
            DefinitionAccess::Train,
        ),
        || {
            build_vocab(&train_only, &split, cfg.settings.min_count)?.save(&vocab_path)?;
            Ok(vec![vocab_path.clone()])
        },
    )?);
    let vocab = Vocabulary::load(&vocab_path)?;

    let walk_cfg = cfg.settings.walk_config(seed);
    records.push(runner.run(
        step("walks", json(&walk_cfg), vec![dag_file.clone()], DefinitionAccess::None),
        || {
            let w = sample_walks(&g, &walk_cfg)?;
            std::fs::write(&walks_path, w.to_text()).map_err(|e| Error::io(&walks_path, e))?;
            Ok(vec![walks_path.clone()])
        },
    )?);
    let load_walks = || -> Result<WalkBatch> {
        let text = std::fs::read_to_string(&walks_path).map_err(|e| Error::io(&walks_path, e))?;
        WalkBatch::from_text(&text, g.len())
    };

    let s1 = cfg.settings.stage1_config(seed);
    records.push(runner.run(
        step(
            "stage1-terminology",
            json(&s1),
            vec![dag_file.clone(), vocab_path.clone(), walks_path.clone()],
            DefinitionAccess::None,
        ),
        || {
            let (side, report) = train_terminology_side(&g, &vocab, &load_walks()?, &s1)?;
            side.save(&term_side_path)?;
            let rp = dir.join("stage1_terminology.json");
            write_json(&rp, &report)?;
            Ok(vec![term_side_path.clone(), rp])
        },
    )?);

    let metrics = cfg.settings.metric_options();
    let mut eval_extra: Vec<PathBuf> = metrics.synonyms.iter().cloned().collect();
    let base_inputs = vec![dag_file.clone(), split_path.clone(), vocab_path.clone()];

    // Baselines; the plain Transformer is also the bootstrap model.
    let mut order = cfg.settings.baselines.clone();
    order.sort_by_key(|k| *k != BaselineKind::Transformer);
    for kind in order {
        let slug = model_slug(kind.label()).expect("baseline labels have slugs");
        let bc = cfg.settings.baseline_config(kind, seed);
        let ckpt = models_dir.join(format!("{slug}.ckpt.json"));
        records.push(runner.run(
            step(&format!("train-{slug}"), json(&bc), base_inputs.clone(), DefinitionAccess::TrainValid),
            || {
                let mut m = Baseline::new(&bc, vocab.len())?;
                let tr = make_examples(&train_valid, &vocab, &split.train)?;
                let va = make_examples(&train_valid, &vocab, &split.valid)?;
                let report = m.fit(&tr, &va, &bc.train)?;
                m.checkpoint(&bc)?.save(&ckpt)?;
                let rp = models_dir.join(format!("{slug}.train.json"));
                write_json(&rp, &report)?;
                Ok(vec![ckpt.clone(), rp])
            },
        )?);
        if kind == BaselineKind::Transformer {
            let mut inputs = base_inputs.clone();
            inputs.push(ckpt.clone());
            records.push(runner.run(
                step("bootstrap", serde_json::Value::Null, inputs, DefinitionAccess::None),
                || {
                    let (m, _) = Baseline::load(&ckpt)?;
                    let t = m.as_transformer().ok_or_else(|| Error::Invalid("bootstrap needs the transformer".into()))?;
                    // Only terminologies are read here.
                    let boot = bootstrap_test_definitions(t, &train_only, &split, &vocab)?;
                    let recs: Vec<BootstrapRecord> = boot
                        .iter()
                        .map(|(&i, b)| BootstrapRecord {
                            term_id: g.node(i).term_id.clone(),
                            tokens: vocab.denumericalize(&b.tokens),
                            substituted: b.substituted,
                        })
                        .collect();
                    write_jsonl(&bootstrap_path, &recs)?;
                    Ok(vec![bootstrap_path.clone()])
                },
            )?);
            let mut inputs = base_inputs.clone();
            inputs.extend([walks_path.clone(), bootstrap_path.clone(), term_side_path.clone()]);
            records.push(runner.run(
                step("stage1-definition", json(&s1), inputs, DefinitionAccess::Train),
                || {
                    let boot = load_bootstrap(&bootstrap_path, &g, &vocab)?;
                    let (def, sources, report) = train_definition_side(&train_only, &vocab, &load_walks()?, &boot, &s1)?;
                    let term = SideEmbeddings::load(&term_side_path)?;
                    NodeEmbeddingSet::assemble(term, def, sources)?.save(&emb_path)?;
                    let rp = dir.join("stage1_definition.json");
                    write_json(&rp, &report)?;
                    Ok(vec![emb_path.clone(), rp])
                },
            )?);
        }
        let mut inputs = base_inputs.clone();
        inputs.push(ckpt.clone());
        inputs.extend(eval_extra.iter().cloned());
        let label = kind.label();
        records.push(runner.run(
            step(&format!("evaluate-{slug}"), json(&cfg.settings.metrics), inputs, DefinitionAccess::Evaluation),
            || {
                let (m, bc) = Baseline::load(&ckpt)?;
                let ex = make_examples(&g, &vocab, &split.test)?;
                let recs = m.generate(&g, &vocab, &ex, bc.decode, bc.seed)?;
                let mut report = score_run(label, &recs, &metrics)?;
                report.notes.extend(baseline_notes(kind));
                write_eval(&gen_dir, &reports_dir, slug, &recs, &report)
            },
        )?);
    }

    let local = match &cfg.settings.stage2.local_lookup {
        Some(p) => LocalProvider::LookupFile(LocalTable::load(p)?),
        None => LocalProvider::Trainable,
    };
    eval_extra.extend(cfg.settings.stage2.local_lookup.iter().cloned());
    for variant in Variant::ALL {
        let slug = variant.slug();
        let (use_tg, use_dg) = variant.flags();
        let sc = cfg.settings.stage2_config(use_tg, use_dg, seed);
        let ckpt = models_dir.join(format!("{slug}.ckpt.json"));
        let mut inputs = base_inputs.clone();
        inputs.push(emb_path.clone());
        inputs.extend(cfg.settings.stage2.local_lookup.iter().cloned());
        records.push(runner.run(
            step(&format!("train-{slug}"), json(&sc), inputs, DefinitionAccess::TrainValid),
            || {
                let emb = NodeEmbeddingSet::load(&emb_path)?;
                if sc.use_dg {
                    crate::stage2::require_bootstrap(&emb, &split)?;
                }
                let shape = Stage2Shape {
                    config: sc.clone(),
                    local_dim: local.dim(),
                    graph_dim: emb.hidden_dim() * 2,
                };
                let mut m = Stage2Model::new(shape, vocab.len())?;
                let mut tr = make_examples(&train_valid, &vocab, &split.train)?;
                let mut va = make_examples(&train_valid, &vocab, &split.valid)?;
                m.attach(&mut tr, &g, &emb, &local)?;
                m.attach(&mut va, &g, &emb, &local)?;
                let report = train(&mut m, &tr, &va, &sc.train)?;
                m.checkpoint()?.save(&ckpt)?;
                let rp = models_dir.join(format!("{slug}.train.json"));
                write_json(&rp, &report)?;
                Ok(vec![ckpt.clone(), rp])
            },
        )?);
        let mut inputs = base_inputs.clone();
        inputs.extend([ckpt.clone(), emb_path.clone()]);
        inputs.extend(eval_extra.iter().cloned());
        records.push(runner.run(
            step(&format!("evaluate-{slug}"), json(&cfg.settings.metrics), inputs, DefinitionAccess::Evaluation),
            || {
                let emb = NodeEmbeddingSet::load(&emb_path)?;
                let m = Stage2Model::from_checkpoint(&Checkpoint::load(&ckpt)?)?;
                let mut ex = make_examples(&g, &vocab, &split.test)?;
                m.attach(&mut ex, &g, &emb, &local)?;
                let recs = generate_records(&m, &g, &vocab, &ex, m.shape.config.decode, m.shape.config.seed)?;
                let mut report = score_run(m.label(), &recs, &metrics)?;
                report.notes.push(format!("local provider: {}", local.name()));
                report.notes.push(format!("prefix slots: {}", m.prefix_slots()));
                write_eval(&gen_dir, &reports_dir, slug, &recs, &report)
            },
        )?);
    }

    if cfg.settings.downstream.linkpred {
        let shallow = ShallowConfig {
            seed,
            ..cfg.settings.downstream.shallow.clone()
        };
        let params = serde_json::json!({ "stage1": json(&s1), "walk": json(&walk_cfg), "shallow": json(&shallow) });
        let out = dir.join("linkpred.json");
        records.push(runner.run(
            step("linkpred", params, vec![dag_file.clone(), vocab_path.clone()], DefinitionAccess::None),
            || {
                let report = link_prediction(&g, &vocab, &walk_cfg, &s1, &shallow)?;
                write_json(&out, &report)?;
                Ok(vec![out.clone()])
            },
        )?);
    }
    Ok(())
}

/// Link prediction with embeddings learned on the training edges only: the
/// terminology side of stage 1, retrained on walks over the reduced graph,
/// and the shallow embedder.
pub fn link_prediction(
    g: &OntologyDag,
    vocab: &Vocabulary,
    walk: &WalkConfig,
    s1: &Stage1Config,
    shallow: &ShallowConfig,
) -> Result<LinkPredReport> {
    let split = make_link_split(g, shallow.seed)?;
    let reduced = OntologyDag::new(&g.name, g.nodes().to_vec(), split.train.clone())?;
    let walks = sample_walks(&reduced, walk)?;
    let (side, _) = train_terminology_side(&reduced, vocab, &walks, s1)?;
    let gt = ndarray::concatenate![ndarray::Axis(1), side.w, side.u];
    let stage1 = NodeVectors::new(side.term_ids, gt)?;
    let shallow_vecs = train_shallow(g, &split, shallow)?;
    Ok(LinkPredReport {
        stage1_terminology: link_prediction_eval(g, &stage1, &split, Scorer::Dot)?,
        shallow: link_prediction_eval(g, &shallow_vecs, &split, Scorer::Dot)?,
        scorer: Scorer::Dot,
        notes: vec!["embeddings trained on training edges only".into()],
    })
}

fn write_eval(
    gen_dir: &Path,
    reports_dir: &Path,
    slug: &str,
    recs: &[crate::metrics::GenerationRecord],
    report: &MetricReport,
) -> Result<Vec<PathBuf>> {
    let gp = gen_dir.join(format!("{slug}.jsonl"));
    write_generations(&gp, recs)?;
    let stem = reports_dir.join(slug);
    report.save(&stem)?;
    Ok(vec![gp, stem.with_extension("json"), stem.with_extension("csv")])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

/// One row per model in the fixed order; rows without a finished
/// evaluation are marked pending. Values are the stored report values.
pub fn report_table(ledger: &RunLedger, root: &Path, dag: &str, seed: u64, format: TableFormat) -> Result<String> {
    let mut s = String::new();
    match format {
        TableFormat::Markdown => {
            s.push_str("| Model | TG | DG | BLEU1 | BLEU2 | BLEU3 | BLEU4 | METEOR | NIST |\n");
            s.push_str("|---|---|---|---|---|---|---|---|---|\n");
        }
        TableFormat::Csv => s.push_str("model,tg,dg,bleu1,bleu2,bleu3,bleu4,meteor,nist,status\n"),
    }
    for label in MODEL_ORDER {
        let slug = model_slug(label).expect("every table row has a slug");
        let (tg, dg) = match slug {
            "ours" => Variant::Full.flags(),
            "ours-wo-tg" => Variant::WithoutTg.flags(),
            "ours-wo-dg" => Variant::WithoutDg.flags(),
            _ => (false, false),
        };
        let report = ledger
            .find(&format!("evaluate-{slug}"), Some(dag), Some(seed))
            .map(|_| unit_dir(root, dag, seed).join("reports").join(format!("{slug}.json")))
            .filter(|p| p.exists())
            .map(|p| MetricReport::load(&p))
            .transpose()?;
        match (format, report) {
            (TableFormat::Markdown, Some(r)) => {
                let _ = writeln!(
                    s,
                    "| {label} | {tg} | {dg} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |",
                    r.bleu[0], r.bleu[1], r.bleu[2], r.bleu[3], r.meteor, r.nist
                );
            }
            (TableFormat::Markdown, None) => {
                let _ = writeln!(s, "| {label} | {tg} | {dg} | pending | pending | pending | pending | pending | pending |");
            }
            (TableFormat::Csv, Some(r)) => {
                let _ = writeln!(
                    s,
                    "{label},{tg},{dg},{},{},{},{},{},{},done",
                    r.bleu[0], r.bleu[1], r.bleu[2], r.bleu[3], r.meteor, r.nist
                );
            }
            (TableFormat::Csv, None) => {
                let _ = writeln!(s, "{label},{tg},{dg},,,,,,,pending");
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ExperimentConfig::parse(
            "out_dir = \"runs\"\nseeds = [3]\n[input]\nkind = \"synthetic\"\nnodes = 20\n",
        )
        .unwrap();
        assert_eq!(c.seeds, vec![3]);
        assert_eq!(c.settings.min_count, 1);
        assert!(matches!(c.input, InputSource::Synthetic(ref s) if s.nodes == 20 && s.pool == 24));
        assert_eq!(c.settings.baselines.len(), 3);
        c.validate().unwrap();
    }

    #[test]
    fn seeds_are_required() {
        let e = ExperimentConfig::parse("out_dir = \"runs\"\n[input]\nkind = \"synthetic\"\n").unwrap_err();
        assert!(e.is_config());
        let c = ExperimentConfig::parse("out_dir = \"r\"\nseeds = []\n[input]\nkind = \"synthetic\"\n").unwrap();
        assert!(c.validate().unwrap_err().is_config());
    }

    #[test]
    fn missing_input_path_is_a_config_error() {
        let c = ExperimentConfig::parse("out_dir = \"r\"\nseeds = [0]\n[input]\nkind = \"obo_dir\"\npath = \"/no/such/dir\"\n")
            .unwrap();
        assert!(c.validate().unwrap_err().is_config());
    }

    #[test]
    fn transformer_baseline_is_mandatory() {
        let c = ExperimentConfig::parse(
            "out_dir = \"r\"\nseeds = [0]\nbaselines = [\"seq2seq\"]\n[input]\nkind = \"synthetic\"\n",
        )
        .unwrap();
        assert!(c.validate().unwrap_err().is_config());
    }

    #[test]
    fn slugs_cover_table() {
        for label in MODEL_ORDER {
            assert!(model_slug(label).is_some());
        }
        for v in Variant::ALL {
            let (tg, dg) = v.flags();
            assert_eq!(model_slug(crate::stage2::variant_label(tg, dg)), Some(v.slug()));
        }
    }
}
