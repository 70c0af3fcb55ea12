//! No-graph baselines: attention GRU encoder-decoder, its latent-variable
//! extension and the plain transformer. All map terminology to definition
//! over the same examples and splits as the graph-fused model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dag::{DataSplit, OntologyDag};
use crate::error::{Error, Result};
use crate::metrics::{score_run, DecodeMode, GenerationRecord, MetricOptions, MetricReport};
use crate::models::rnn::{Cvae, CvaeConfig, RnnConfig, Seq2Seq};
use crate::models::transformer::{CondTransformer, TransformerConfig};
use crate::models::{generate_records, make_examples, train, Checkpoint, Example, TrainConfig, TrainReport};
use crate::text::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Seq2seq,
    Cvae,
    Transformer,
}

impl BaselineKind {
    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::Seq2seq => "Seq2Seq",
            BaselineKind::Cvae => "CVAE",
            BaselineKind::Transformer => "Transformer",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "seq2seq" => BaselineKind::Seq2seq,
            "cvae" => BaselineKind::Cvae,
            "transformer" => BaselineKind::Transformer,
            _ => return Err(Error::Config(format!("unknown baseline {s:?} (seq2seq, cvae, transformer)"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub word_dim: usize,
    pub hidden_dim: usize,
    /// Required for the CVAE, rejected otherwise.
    pub latent_dim: Option<usize>,
    pub kl_anneal_epochs: usize,
    pub transformer: TransformerConfig,
    pub train: TrainConfig,
    pub decode: DecodeMode,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind) -> Self {
        Self {
            kind,
            word_dim: 768,
            hidden_dim: 768,
            latent_dim: (kind == BaselineKind::Cvae).then_some(64),
            kl_anneal_epochs: 10,
            transformer: TransformerConfig::default(),
            train: TrainConfig::default(),
            decode: DecodeMode::Greedy,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.word_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("baseline dimensions must be positive".into()));
        }
        match (self.kind, self.latent_dim) {
            (BaselineKind::Cvae, None) | (BaselineKind::Cvae, Some(0)) => {
                Err(Error::Config("the CVAE needs a positive latent_dim".into()))
            }
            (BaselineKind::Seq2seq | BaselineKind::Transformer, Some(_)) => {
                Err(Error::Config(format!("latent_dim applies only to the CVAE, not {:?}", self.kind)))
            }
            _ => Ok(()),
        }
    }

    fn rnn(&self) -> RnnConfig {
        RnnConfig {
            word_dim: self.word_dim,
            hidden_dim: self.hidden_dim,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Baseline {
    Seq2seq(Seq2Seq),
    Cvae(Cvae),
    Transformer(CondTransformer),
}

pub const CHECKPOINT_KIND: &str = "graphex-baseline";

/// Notes attached to every baseline report.
pub fn baseline_notes(kind: BaselineKind) -> Vec<String> {
    match kind {
        BaselineKind::Seq2seq | BaselineKind::Cvae => {
            vec!["recurrent cells are GRUs, not LSTMs".into()]
        }
        BaselineKind::Transformer => Vec::new(),
    }
}

impl Baseline {
    pub fn new(cfg: &BaselineConfig, vocab: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.kind {
            BaselineKind::Seq2seq => Baseline::Seq2seq(Seq2Seq::new(cfg.rnn(), vocab, cfg.seed)),
            BaselineKind::Cvae => Baseline::Cvae(Cvae::new(
                CvaeConfig {
                    rnn: cfg.rnn(),
                    latent_dim: cfg.latent_dim.unwrap_or_default(),
                    kl_anneal_epochs: cfg.kl_anneal_epochs,
                },
                vocab,
                cfg.seed,
            )?),
            BaselineKind::Transformer => {
                Baseline::Transformer(CondTransformer::new(cfg.transformer.clone(), Vec::new(), vocab, cfg.seed)?)
            }
        })
    }

    pub fn kind(&self) -> BaselineKind {
        match self {
            Baseline::Seq2seq(_) => BaselineKind::Seq2seq,
            Baseline::Cvae(_) => BaselineKind::Cvae,
            Baseline::Transformer(_) => BaselineKind::Transformer,
        }
    }

    pub fn fit(&mut self, train_ex: &[Example], valid_ex: &[Example], cfg: &TrainConfig) -> Result<TrainReport> {
        match self {
            Baseline::Seq2seq(m) => train(m, train_ex, valid_ex, cfg),
            Baseline::Cvae(m) => train(m, train_ex, valid_ex, cfg),
            Baseline::Transformer(m) => train(m, train_ex, valid_ex, cfg),
        }
    }

    /// Decodes every example. The CVAE draws its prior sample from `seed`.
    pub fn generate(
        &self,
        g: &OntologyDag,
        vocab: &Vocabulary,
        examples: &[Example],
        mode: DecodeMode,
        seed: u64,
    ) -> Result<Vec<GenerationRecord>> {
        match self {
            Baseline::Seq2seq(m) => generate_records(m, g, vocab, examples, mode, seed),
            Baseline::Cvae(m) => generate_records(m, g, vocab, examples, mode, seed),
            Baseline::Transformer(m) => generate_records(m, g, vocab, examples, mode, seed),
        }
    }

    pub fn checkpoint(&self, cfg: &BaselineConfig) -> Result<Checkpoint> {
        match self {
            Baseline::Seq2seq(m) => Checkpoint::new(CHECKPOINT_KIND, cfg, m),
            Baseline::Cvae(m) => Checkpoint::new(CHECKPOINT_KIND, cfg, m),
            Baseline::Transformer(m) => Checkpoint::new(CHECKPOINT_KIND, cfg, m),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, BaselineConfig)> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::format("checkpoint", format!("expected {CHECKPOINT_KIND}, found {}", ck.kind)));
        }
        let cfg: BaselineConfig = ck.config()?;
        let mut m = Self::new(&cfg, ck.vocab_size)?;
        match &mut m {
            Baseline::Seq2seq(x) => ck.restore(x)?,
            Baseline::Cvae(x) => ck.restore(x)?,
            Baseline::Transformer(x) => ck.restore(x)?,
        }
        Ok((m, cfg))
    }

    pub fn load(path: &Path) -> Result<(Self, BaselineConfig)> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// The plain transformer, if this is one.
    pub fn as_transformer(&self) -> Option<&CondTransformer> {
        match self {
            Baseline::Transformer(m) => Some(m),
            _ => None,
        }
    }
}

/// Trains on the training nodes with early stopping on the validation nodes.
pub fn train_baseline(
    cfg: &BaselineConfig,
    g: &OntologyDag,
    split: &DataSplit,
    vocab: &Vocabulary,
) -> Result<(Baseline, TrainReport)> {
    let mut m = Baseline::new(cfg, vocab.len())?;
    let train_ex = make_examples(g, vocab, &split.train)?;
    let valid_ex = make_examples(g, vocab, &split.valid)?;
    let rep = m.fit(&train_ex, &valid_ex, &cfg.train)?;
    Ok((m, rep))
}

/// Generates for `nodes` and scores against their curated definitions.
pub fn generate_baseline(
    model: &Baseline,
    cfg: &BaselineConfig,
    g: &OntologyDag,
    vocab: &Vocabulary,
    nodes: &[usize],
    metrics: &MetricOptions,
) -> Result<(Vec<GenerationRecord>, MetricReport)> {
    let ex = make_examples(g, vocab, nodes)?;
    let records = model.generate(g, vocab, &ex, cfg.decode, cfg.seed)?;
    let mut report = score_run(cfg.kind.label(), &records, metrics)?;
    report.notes.extend(baseline_notes(cfg.kind));
    Ok((records, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latent_dim_required_iff_cvae() {
        assert!(BaselineConfig::new(BaselineKind::Cvae).validate().is_ok());
        assert!(BaselineConfig::new(BaselineKind::Seq2seq).validate().is_ok());
        let mut c = BaselineConfig::new(BaselineKind::Cvae);
        c.latent_dim = None;
        assert!(c.validate().is_err());
        let mut s = BaselineConfig::new(BaselineKind::Transformer);
        s.latent_dim = Some(8);
        assert!(s.validate().is_err());
        assert!(BaselineKind::parse("CVAE").is_ok());
        assert!(BaselineKind::parse("lstm").is_err());
    }
}
