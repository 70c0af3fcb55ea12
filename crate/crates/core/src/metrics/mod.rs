//! Generation scoring: BLEU1-4, METEOR and NIST.

pub mod bleu;
pub mod meteor;
pub mod nist;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use bleu::{sentence_bleu, CorpusBleu};
pub use meteor::{Meteor, SynonymTable};
pub use nist::InfoWeights;

/// Row order of the results table.
pub const MODEL_ORDER: [&str; 6] = [
    "Seq2Seq",
    "CVAE",
    "Transformer",
    "Our Model w/o TG",
    "Our Model w/o DG",
    "Our Model",
];

pub const TOKENIZER_VERSION: &str = "graphex-tokenize/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Beam(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub node_id: String,
    pub terminology: String,
    pub reference: Vec<String>,
    pub generated: Vec<String>,
    pub token_log_probs: Vec<f64>,
    pub decode: DecodeMode,
    /// True when decoding stopped on EOS rather than the length cap.
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub node_id: String,
    pub bleu: [f64; 4],
    pub meteor: f64,
    pub nist: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub tokenizer: String,
    pub smoothing: String,
    pub nist_order: usize,
    pub synonyms: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub bleu: [f64; 4],
    pub meteor: f64,
    pub nist: f64,
    pub count: usize,
    pub examples: Vec<ExampleScore>,
    pub config: MetricConfig,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct MetricOptions {
    pub synonyms: Option<PathBuf>,
    pub nist_order: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            synonyms: None,
            nist_order: nist::DEFAULT_ORDER,
        }
    }
}

fn as_strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

/// Scores a run. Records are ordered by node id first so the result does not
/// depend on input order.
pub fn score_run(model: &str, records: &[GenerationRecord], opts: &MetricOptions) -> Result<MetricReport> {
    if records.is_empty() {
        return Err(Error::Invalid(format!("no generations to score for {model}")));
    }
    let table = opts.synonyms.as_deref().map(SynonymTable::load).transpose()?;
    let meteor = Meteor::new(table);

    let mut sorted: Vec<&GenerationRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.node_id.cmp(&b.node_id));
    let cands: Vec<Vec<&str>> = sorted.iter().map(|r| as_strs(&r.generated)).collect();
    let refs: Vec<Vec<&str>> = sorted.iter().map(|r| as_strs(&r.reference)).collect();
    let info = InfoWeights::from_references(refs.iter().map(Vec::as_slice), opts.nist_order);

    let examples: Vec<ExampleScore> = (0..sorted.len())
        .into_par_iter()
        .map(|i| {
            let (c, r) = (&cands[i], &refs[i]);
            ExampleScore {
                node_id: sorted[i].node_id.clone(),
                bleu: [1, 2, 3, 4].map(|n| sentence_bleu(c, r, n)),
                meteor: meteor.score(c, r),
                nist: info.sentence(c, r),
            }
        })
        .collect();

    let mut corpus = CorpusBleu::default();
    for (c, r) in cands.iter().zip(&refs) {
        corpus.add(c, r);
    }
    let pairs: Vec<(&[&str], &[&str])> = cands.iter().zip(&refs).map(|(c, r)| (c.as_slice(), r.as_slice())).collect();
    let meteor_mean = examples.iter().map(|e| e.meteor).sum::<f64>() / examples.len() as f64;

    Ok(MetricReport {
        model: model.to_string(),
        bleu: [1, 2, 3, 4].map(|n| corpus.score(n)),
        meteor: meteor_mean,
        nist: info.corpus(&pairs),
        count: examples.len(),
        examples,
        config: MetricConfig {
            tokenizer: TOKENIZER_VERSION.into(),
            smoothing: format!("sentence add-epsilon {}; corpus none", bleu::EPSILON),
            nist_order: opts.nist_order,
            synonyms: opts.synonyms.clone(),
        },
        notes: Vec::new(),
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    node_id: &'a str,
    bleu1: f64,
    bleu2: f64,
    bleu3: f64,
    bleu4: f64,
    meteor: f64,
    nist: f64,
}

impl MetricReport {
    /// Writes `<stem>.json` and a per-example `<stem>.csv`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let json = stem.with_extension("json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
        let csv_path = stem.with_extension("csv");
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_error(&csv_path, e))?;
        for e in &self.examples {
            w.serialize(CsvRow {
                node_id: &e.node_id,
                bleu1: e.bleu[0],
                bleu2: e.bleu[1],
                bleu3: e.bleu[2],
                bleu4: e.bleu[3],
                meteor: e.meteor,
                nist: e.nist,
            })
            .map_err(|e| csv_error(&csv_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Position of a model label in [`MODEL_ORDER`]; unknown labels sort last.
pub fn table_rank(model: &str) -> usize {
    MODEL_ORDER.iter().position(|m| *m == model).unwrap_or(MODEL_ORDER.len())
}

pub fn write_generations(path: &Path, records: &[GenerationRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_generations(path: &Path) -> Result<Vec<GenerationRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, reference: &str, generated: &str) -> GenerationRecord {
        GenerationRecord {
            node_id: id.into(),
            terminology: id.into(),
            reference: reference.split_whitespace().map(String::from).collect(),
            generated: generated.split_whitespace().map(String::from).collect(),
            token_log_probs: vec![],
            decode: DecodeMode::Greedy,
            finished: true,
        }
    }

    #[test]
    fn perfect_run() {
        let recs = vec![rec("a", "a b c d e", "a b c d e"), rec("b", "x y z w", "x y z w")];
        let r = score_run("Transformer", &recs, &MetricOptions::default()).unwrap();
        assert_eq!(r.bleu, [1.0; 4]);
        assert_eq!(r.count, 2);
    }

    #[test]
    fn empty_run_errors() {
        assert!(score_run("x", &[], &MetricOptions::default()).is_err());
    }

    #[test]
    fn order_invariant() {
        let recs = vec![rec("a", "a b c", "a c"), rec("b", "x y z w", "x y q w"), rec("c", "m n", "n m")];
        let mut rev = recs.clone();
        rev.reverse();
        let o = MetricOptions::default();
        assert_eq!(score_run("m", &recs, &o).unwrap(), score_run("m", &rev, &o).unwrap());
    }

    #[test]
    fn persisted_report_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![rec("a", "a b c", "a c")];
        let r = score_run("CVAE", &recs, &MetricOptions::default()).unwrap();
        r.save(&dir.path().join("cvae")).unwrap();
        let back = MetricReport::load(&dir.path().join("cvae.json")).unwrap();
        assert_eq!(back, r);
        assert!(dir.path().join("cvae.csv").exists());
    }

    #[test]
    fn table_order() {
        assert!(table_rank("Seq2Seq") < table_rank("Our Model"));
        assert_eq!(table_rank("Our Model w/o DG"), 4);
    }
}
