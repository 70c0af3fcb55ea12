//! `graphex` command line: one subcommand per pipeline stage plus the
//! declarative `pipeline` runner.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use graphex_core::analysis::{curation_consistency, distance_similarity_profile, select_graphs};
use graphex_core::baselines::{baseline_notes, Baseline, BaselineKind};
use graphex_core::dag::{build_all, make_split, sample_walks, stats, DataSplit, OntologyDag};
use graphex_core::downstream::{
    granularity_benchmark, link_prediction_eval, make_link_split, train_shallow, GranularityTask, MlpConfig,
    NodeVectors, Scorer,
};
use graphex_core::error::Error;
use graphex_core::metrics::{read_generations, score_run, write_generations, MetricOptions};
use graphex_core::models::{make_examples, train, Checkpoint};
use graphex_core::obo::{ingest_dir, read_jsonl, write_jsonl, RawTerm};
use graphex_core::pipeline::{
    build_vocab, link_prediction, report_table, run_pipeline, sanitize, ExperimentConfig, ModelSettings, TableFormat,
};
use graphex_core::stage1::{bootstrap_test_definitions, train_stage1, NodeEmbeddingSet};
use graphex_core::stage2::{self, LocalProvider, LocalTable, Stage2Model, Stage2Shape};
use graphex_core::synthetic::{synthetic_terms, SyntheticConfig};
use graphex_core::text::Vocabulary;

#[derive(Parser)]
#[command(name = "graphex", version, about = "Graph-aware definition generation for ontology terms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Model settings file (the model sections of a pipeline config).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Common {
    fn settings(&self) -> Result<ModelSettings> {
        Ok(match &self.config {
            Some(p) => ModelSettings::load(p)?,
            None => ModelSettings::default(),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse a directory of .obo files into a merged term corpus.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rejects: PathBuf,
        /// Where to write duplicate-definition conflicts.
        #[arg(long)]
        conflicts: Option<PathBuf>,
    },
    /// Write a generated tree corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        nodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 24)]
        pool: usize,
        #[arg(long, default_value_t = 3)]
        max_children: usize,
        #[arg(long, default_value = "synthetic")]
        graph: String,
    },
    /// Build one DAG snapshot per graph in a corpus.
    BuildDag {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print node, edge, depth and word-count statistics.
    Stats {
        #[arg(long)]
        dag: PathBuf,
    },
    /// Seeded 70/10/20 split of the defined nodes.
    Split {
        #[arg(long)]
        dag: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distance/similarity profile and the selection verdict for one graph.
    Analyze {
        #[arg(long)]
        dag: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Term corpus for the cross-graph consistency scores.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        threshold: Option<f64>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train both stage-1 sides and write an embedding snapshot.
    TrainStage1 {
        #[arg(long)]
        dag: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Transformer baseline checkpoint that writes the held-out
        /// definitions. Without it every node uses its curated definition
        /// and the snapshot cannot feed a model using the definition side.
        #[arg(long)]
        bootstrap: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a no-graph baseline.
    TrainBaseline {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        dag: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train the graph-conditioned generator.
    TrainStage2 {
        #[command(flatten)]
        inputs: Stage2Args,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Decode the test nodes with a stage-2 or baseline checkpoint.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        inputs: Stage2Args,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a generations file.
    Evaluate {
        #[arg(long)]
        gen: PathBuf,
        /// Report stem; `.json` and `.csv` are written.
        #[arg(long)]
        out: PathBuf,
        /// Row label; defaults to the generations file stem.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        synonyms: Option<PathBuf>,
        #[arg(long)]
        nist_order: Option<usize>,
    },
    /// Link prediction AUC/AP on a seeded edge split.
    Linkpred {
        #[arg(long)]
        dag: PathBuf,
        /// Stage-1 snapshot whose terminology vectors are scored frozen.
        /// Without it the terminology side is retrained on the training edges.
        #[arg(long)]
        emb: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ScorerArg::Dot)]
        scorer: ScorerArg,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Sentence granularity prediction over aligned graph depths.
    Granularity {
        /// Directory of DAG snapshots.
        #[arg(long)]
        dags: PathBuf,
        /// Lookup file: dimension line, then `term_id<TAB>values`.
        #[arg(long)]
        emb: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full experiment from a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(clap::Args)]
struct Stage2Args {
    #[arg(long)]
    dag: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    emb: Option<PathBuf>,
    /// A lookup file, or `trainable`.
    #[arg(long)]
    local: Option<String>,
    #[arg(long)]
    use_tg: bool,
    #[arg(long)]
    use_dg: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Seq2seq,
    Cvae,
    Transformer,
}

impl From<KindArg> for BaselineKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Seq2seq => BaselineKind::Seq2seq,
            KindArg::Cvae => BaselineKind::Cvae,
            KindArg::Transformer => BaselineKind::Transformer,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerArg {
    Dot,
    Distance,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Rel,
    Abs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for configuration errors, 3 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    let config = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_config));
    if config {
        2
    } else {
        3
    }
}

fn vocab_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".vocab");
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load_pair(dag: &Path, split: &Path) -> Result<(OntologyDag, DataSplit)> {
    let g = OntologyDag::load(dag)?;
    let s = DataSplit::load(split)?;
    if let Some(&bad) = s.train.iter().chain(&s.valid).chain(&s.test).find(|&&i| i >= g.len()) {
        return Err(Error::Config(format!("split names node {bad} but the graph has {} nodes", g.len())).into());
    }
    Ok((g, s))
}

/// The graph with only training and validation definitions visible.
fn train_valid_view(g: &OntologyDag, s: &DataSplit) -> OntologyDag {
    g.with_visible_definitions(&s.train.iter().chain(&s.valid).copied().collect())
}

fn local_provider(arg: Option<&str>) -> Result<LocalProvider> {
    match arg {
        None | Some("trainable") => Ok(LocalProvider::Trainable),
        Some(p) => Ok(LocalProvider::LookupFile(
            LocalTable::load(Path::new(p)).with_context(|| format!("loading local vectors from {p}"))?,
        )),
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest {
            input,
            out,
            rejects,
            conflicts,
        } => {
            if !input.is_dir() {
                return Err(Error::Config(format!("{} is not a directory", input.display())).into());
            }
            let (merged, rej) = ingest_dir(&input)?;
            let terms: Vec<RawTerm> = merged.graphs.iter().flat_map(|(_, t)| t.iter().cloned()).collect();
            write_jsonl(&out, &terms)?;
            write_jsonl(&rejects, &rej)?;
            if let Some(c) = conflicts {
                write_jsonl(&c, &merged.conflicts)?;
            }
            let manifests: Vec<_> = merged.graphs.iter().map(|(m, _)| m).collect();
            print_json(&manifests)?;
            eprintln!(
                "{} terms in {} graphs, {} rejected records, {} conflicts",
                terms.len(),
                manifests.len(),
                rej.len(),
                merged.conflicts.len()
            );
        }
        Command::Synth {
            out,
            nodes,
            seed,
            pool,
            max_children,
            graph,
        } => {
            let terms = synthetic_terms(&SyntheticConfig {
                nodes,
                max_children,
                pool,
                graph,
                seed,
            })?;
            write_jsonl(&out, &terms)?;
        }
        Command::BuildDag { corpus, out } => {
            let terms: Vec<RawTerm> = read_jsonl(&corpus)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut reports = BTreeMap::new();
            for (g, report) in build_all(&terms)? {
                let path = out.join(format!("{}.json", sanitize(&g.name)));
                g.save(&path)?;
                eprintln!("{}: {} nodes, {} edges -> {}", g.name, g.len(), g.edges().len(), path.display());
                reports.insert(g.name.clone(), report);
            }
            write_json(&out.join("build_report.json"), &reports)?;
        }
        Command::Stats { dag } => print_json(&stats(&OntologyDag::load(&dag)?))?,
        Command::Split { dag, seed, out } => {
            let s = make_split(&OntologyDag::load(&dag)?, seed)?;
            s.save(&out)?;
            eprintln!("train {}, valid {}, test {}", s.train.len(), s.valid.len(), s.test.len());
        }
        Command::Analyze {
            dag,
            split,
            out,
            corpus,
            threshold,
            budget,
            seed,
        } => {
            let (g, s) = load_pair(&dag, &split)?;
            let sel = graphex_core::pipeline::SelectionConfig::default();
            let threshold = threshold.unwrap_or(sel.threshold);
            let train_only = g.with_visible_definitions(&s.train_set());
            let profile = distance_similarity_profile(&train_only, &s, budget.unwrap_or(sel.pair_budget), seed);
            let selected = !select_graphs(std::slice::from_ref(&profile), threshold).is_empty();
            let consistency = match corpus {
                Some(c) => Some(curation_consistency(&read_jsonl::<RawTerm>(&c)?)),
                None => None,
            };
            #[derive(Serialize)]
            struct Report<'a, P, C> {
                graph: &'a str,
                threshold: f64,
                selected: bool,
                profile: P,
                consistency: C,
            }
            let report = Report {
                graph: &g.name,
                threshold,
                selected,
                profile,
                consistency,
            };
            write_json(&out, &report)?;
            eprintln!("{}: {}", g.name, if selected { "selected" } else { "not selected" });
        }
        Command::TrainStage1 {
            dag,
            split,
            out,
            bootstrap,
            common,
        } => {
            let settings = common.settings()?;
            let (g, s) = load_pair(&dag, &split)?;
            let walks = sample_walks(&g, &settings.walk_config(common.seed))?;
            let cfg = settings.stage1_config(common.seed);
            let (emb, reports) = match bootstrap {
                Some(ck) => {
                    let vocab = Vocabulary::load(&vocab_path(&ck))?;
                    let (m, _) = Baseline::load(&ck)?;
                    let t = m
                        .as_transformer()
                        .ok_or_else(|| Error::Config(format!("{} is not a transformer checkpoint", ck.display())))?;
                    let train_only = g.with_visible_definitions(&s.train_set());
                    let boot = bootstrap_test_definitions(t, &train_only, &s, &vocab)?;
                    train_stage1(&train_only, &vocab, &walks, &boot, &cfg)?
                }
                None => {
                    log::warn!("no --bootstrap: held-out nodes use their curated definitions; the snapshot is not usable with --use-dg");
                    let vocab = build_vocab(&g, &s, settings.min_count)?;
                    train_stage1(&g, &vocab, &walks, &BTreeMap::new(), &cfg)?
                }
            };
            emb.save(&out)?;
            for (side, r) in ["terminology", "definition"].iter().zip(&reports) {
                eprintln!("{side}: {} epochs, final loss {:.4}", r.epoch_loss.len(), r.epoch_loss.last().copied().unwrap_or(f64::NAN));
            }
        }
        Command::TrainBaseline {
            kind,
            dag,
            split,
            out,
            common,
        } => {
            let settings = common.settings()?;
            let (g, s) = load_pair(&dag, &split)?;
            let bc = settings.baseline_config(kind.into(), common.seed);
            bc.validate()?;
            let view = train_valid_view(&g, &s);
            let vocab = build_vocab(&g.with_visible_definitions(&s.train_set()), &s, settings.min_count)?;
            let mut m = Baseline::new(&bc, vocab.len())?;
            let tr = make_examples(&view, &vocab, &s.train)?;
            let va = make_examples(&view, &vocab, &s.valid)?;
            let report = m.fit(&tr, &va, &bc.train)?;
            m.checkpoint(&bc)?.save(&out)?;
            vocab.save(&vocab_path(&out))?;
            print_json(&report)?;
        }
        Command::TrainStage2 { inputs, out, common } => {
            let settings = common.settings()?;
            let (g, s) = load_pair(&inputs.dag, &inputs.split)?;
            let emb_path = inputs
                .emb
                .as_ref()
                .ok_or_else(|| Error::Config("train-stage2 needs --emb".into()))?;
            let emb = NodeEmbeddingSet::load(emb_path)?;
            let local = local_provider(inputs.local.as_deref())?;
            let sc = settings.stage2_config(inputs.use_tg, inputs.use_dg, common.seed);
            if sc.use_dg {
                stage2::require_bootstrap(&emb, &s)?;
            }
            let vocab = build_vocab(&g.with_visible_definitions(&s.train_set()), &s, settings.min_count)?;
            let shape = Stage2Shape {
                config: sc.clone(),
                local_dim: local.dim(),
                graph_dim: emb.hidden_dim() * 2,
            };
            let mut m = Stage2Model::new(shape, vocab.len())?;
            let view = train_valid_view(&g, &s);
            let mut tr = make_examples(&view, &vocab, &s.train)?;
            let mut va = make_examples(&view, &vocab, &s.valid)?;
            m.attach(&mut tr, &g, &emb, &local)?;
            m.attach(&mut va, &g, &emb, &local)?;
            let report = train(&mut m, &tr, &va, &sc.train)?;
            m.checkpoint()?.save(&out)?;
            vocab.save(&vocab_path(&out))?;
            print_json(&report)?;
        }
        Command::Generate { model, inputs, out } => {
            let (g, s) = load_pair(&inputs.dag, &inputs.split)?;
            let ck = Checkpoint::load(&model)?;
            let vocab = Vocabulary::load(&vocab_path(&model))?;
            let mut ex = make_examples(&g, &vocab, &s.test)?;
            let records = if ck.kind == stage2::CHECKPOINT_KIND {
                let m = Stage2Model::from_checkpoint(&ck)?;
                let cfg = &m.shape.config;
                if (cfg.use_tg, cfg.use_dg) != (inputs.use_tg, inputs.use_dg) {
                    return Err(Error::Config(format!(
                        "checkpoint was trained with use_tg={} use_dg={}",
                        cfg.use_tg, cfg.use_dg
                    ))
                    .into());
                }
                let emb_path = inputs.emb.as_ref().ok_or_else(|| Error::Config("stage-2 checkpoints need --emb".into()))?;
                let emb = NodeEmbeddingSet::load(emb_path)?;
                if cfg.use_dg {
                    stage2::require_bootstrap(&emb, &s)?;
                }
                let local = local_provider(inputs.local.as_deref())?;
                m.attach(&mut ex, &g, &emb, &local)?;
                graphex_core::models::generate_records(&m, &g, &vocab, &ex, cfg.decode, cfg.seed)?
            } else {
                let (m, bc) = Baseline::from_checkpoint(&ck)?;
                if inputs.use_tg || inputs.use_dg {
                    return Err(Error::Config("baseline checkpoints take neither --use-tg nor --use-dg".into()).into());
                }
                m.generate(&g, &vocab, &ex, bc.decode, bc.seed)?
            };
            write_generations(&out, &records)?;
            eprintln!("{} generations -> {}", records.len(), out.display());
        }
        Command::Evaluate {
            gen,
            out,
            model,
            synonyms,
            nist_order,
        } => {
            let records = read_generations(&gen)?;
            let label = match model {
                Some(m) => m,
                None => gen
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .ok_or_else(|| anyhow!("cannot derive a model label from {}", gen.display()))?,
            };
            let mut opts = MetricOptions {
                synonyms,
                ..MetricOptions::default()
            };
            if let Some(n) = nist_order {
                opts.nist_order = n;
            }
            let mut report = score_run(&label, &records, &opts)?;
            if let Ok(kind) = BaselineKind::parse(&label) {
                report.notes.extend(baseline_notes(kind));
            }
            report.save(&out)?;
            println!(
                "{label}: BLEU1 {:.4} BLEU2 {:.4} BLEU3 {:.4} BLEU4 {:.4} METEOR {:.4} NIST {:.4}",
                report.bleu[0], report.bleu[1], report.bleu[2], report.bleu[3], report.meteor, report.nist
            );
        }
        Command::Linkpred {
            dag,
            emb,
            scorer,
            out,
            common,
        } => {
            let settings = common.settings()?;
            let g = OntologyDag::load(&dag)?;
            let scorer = match scorer {
                ScorerArg::Dot => Scorer::Dot,
                ScorerArg::Distance => Scorer::Distance,
            };
            let mut shallow = settings.downstream.shallow.clone();
            shallow.seed = common.seed;
            let value = match emb {
                Some(p) => {
                    log::warn!("scoring frozen vectors: if they were trained on the full graph the test edges were seen");
                    let e = NodeEmbeddingSet::load(&p)?;
                    let vectors = NodeVectors::new(e.term_ids.clone(), e.g_t_all())?;
                    let split = make_link_split(&g, common.seed)?;
                    let shallow_vecs = train_shallow(&g, &split, &shallow)?;
                    serde_json::json!({
                        "stage1_terminology": link_prediction_eval(&g, &vectors, &split, scorer)?,
                        "shallow": link_prediction_eval(&g, &shallow_vecs, &split, scorer)?,
                        "scorer": scorer,
                        "notes": ["stage-1 vectors scored frozen"],
                    })
                }
                None => {
                    let split = make_split(&g, common.seed)?;
                    let vocab = build_vocab(&g.with_visible_definitions(&split.train_set()), &split, settings.min_count)?;
                    let report = link_prediction(
                        &g,
                        &vocab,
                        &settings.walk_config(common.seed),
                        &settings.stage1_config(common.seed),
                        &shallow,
                    )?;
                    serde_json::to_value(report)?
                }
            };
            match out {
                Some(p) => write_json(&p, &value)?,
                None => print_json(&value)?,
            }
        }
        Command::Granularity {
            dags,
            emb,
            task,
            seed,
            hidden,
            epochs,
            out,
        } => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dags)
                .with_context(|| format!("reading {}", dags.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json") && p.file_name().is_some_and(|n| n != "build_report.json"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::Config(format!("no DAG snapshots in {}", dags.display())).into());
            }
            let graphs = files.iter().map(|p| OntologyDag::load(p)).collect::<Result<Vec<_>, _>>()?;
            let vectors = LocalTable::load(&emb)?.to_node_vectors()?;
            let mut cfg = MlpConfig {
                seed,
                ..MlpConfig::default()
            };
            if let Some(h) = hidden {
                cfg.hidden = h;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let task = match task {
                TaskArg::Rel => GranularityTask::Relative,
                TaskArg::Abs => GranularityTask::Absolute,
            };
            let report = granularity_benchmark(&graphs, &vectors, task, &cfg)?;
            match out {
                Some(p) => write_json(&p, &report)?,
                None => print_json(&report)?,
            }
        }
        Command::Pipeline { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let result = run_pipeline(&cfg);
            let ledger_path = cfg.out_dir.join(graphex_core::pipeline::LEDGER_FILE);
            if ledger_path.exists() {
                let ledger = graphex_core::pipeline::RunLedger::load(&ledger_path)?;
                let mut units: Vec<(String, u64)> = ledger
                    .steps
                    .iter()
                    .filter_map(|r| Some((r.dag.clone()?, r.seed?)))
                    .collect();
                units.dedup();
                units.sort();
                units.dedup();
                for (dag, seed) in units {
                    println!("## {dag}, seed {seed}\n");
                    println!("{}", report_table(&ledger, &cfg.out_dir, &dag, seed, TableFormat::Markdown)?);
                }
            }
            let ledger = result?;
            let reused = ledger.steps.iter().filter(|r| r.reused).count();
            eprintln!("{} steps, {} reused -> {}", ledger.steps.len(), reused, cfg.out_dir.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_map_to_two() {
        let e = anyhow::Error::from(Error::Config("x".into()));
        assert_eq!(exit_code(&e), 2);
        let wrapped = anyhow::Error::from(Error::Step {
            step: "s".into(),
            source: Box::new(Error::Config("x".into())),
        })
        .context("outer");
        assert_eq!(exit_code(&wrapped), 2);
        assert_eq!(exit_code(&anyhow::Error::from(Error::Invalid("y".into()))), 3);
        assert_eq!(exit_code(&anyhow!("plain")), 3);
    }

    #[test]
    fn sidecar_vocab_path() {
        assert_eq!(vocab_path(Path::new("m/x.ckpt.json")), PathBuf::from("m/x.ckpt.json.vocab"));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
