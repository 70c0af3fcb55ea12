use std::time::Instant;

use graphex_core::baselines::*;
use graphex_core::dag::{DataSplit, OntologyDag, TermNode};
use graphex_core::metrics::{DecodeMode, MetricOptions};
use graphex_core::models::transformer::TransformerConfig;
use graphex_core::models::{make_examples, TrainConfig};
use graphex_core::text::Vocabulary;

pub fn five_pairs() -> (OntologyDag, Vocabulary) {
    let items = [
        ("aorta", "main artery leaving the heart ."),
        ("vein", "vessel carrying blood toward the heart ."),
        ("capillary", "smallest vessel joining arteries and veins ."),
        ("valve", "flap that keeps blood moving one way ."),
        ("ventricle", "lower chamber that pumps blood out ."),
    ];
    let nodes: Vec<TermNode> = items
        .iter()
        .enumerate()
        .map(|(i, (t, d))| TermNode::new(i, &format!("M:{i}"), t, Some(d)))
        .collect();
    let g = OntologyDag::new("mem", nodes, vec![(0, 1), (0, 2), (0, 3), (3, 4)]).unwrap();
    let toks: Vec<Vec<String>> = g
        .nodes()
        .iter()
        .flat_map(|n| [n.terminology.clone(), n.definition_tokens.clone().unwrap()])
        .collect();
    let vocab = Vocabulary::build(toks.iter().map(|t| t.as_slice()), 1).unwrap();
    (g, vocab)
}

fn small(kind: BaselineKind) -> BaselineConfig {
    let mut c = BaselineConfig::new(kind);
    c.word_dim = 32;
    c.hidden_dim = 32;
    if kind == BaselineKind::Cvae {
        c.latent_dim = Some(8);
        c.kl_anneal_epochs = 20;
    }
    c.transformer = TransformerConfig {
        d_model: 32,
        heads: 2,
        ff_dim: 64,
        enc_layers: 1,
        dec_layers: 1,
    };
    c.train = TrainConfig {
        epochs: 600,
        batch_size: 5,
        lr: 1e-2,
        dropout: 0.0,
        patience: 600,
        target_loss: Some(0.005),
        ..TrainConfig::default()
    };
    c.seed = 1;
    c
}

fn all_split() -> DataSplit {
    DataSplit {
        train: (0..5).collect(),
        valid: vec![],
        test: (0..5).collect(),
        seed: 0,
    }
}

#[test]
fn every_baseline_memorizes_five_pairs() {
    let (g, vocab) = five_pairs();
    for kind in [BaselineKind::Seq2seq, BaselineKind::Cvae, BaselineKind::Transformer] {
        let t = Instant::now();
        let cfg = small(kind);
        let (m, rep) = train_baseline(&cfg, &g, &all_split(), &vocab).unwrap();
        let (records, report) = generate_baseline(&m, &cfg, &g, &vocab, &[0, 1, 2, 3, 4], &MetricOptions::default()).unwrap();
        println!(
            "{kind:?}: {} epochs, final loss {:.5}, bleu4 {:.3}, {:.1}s",
            rep.train_loss.len(),
            rep.final_train_loss(),
            report.bleu[3],
            t.elapsed().as_secs_f64()
        );
        assert!(rep.final_train_loss() < 0.01, "{kind:?} loss {}", rep.final_train_loss());
        for r in &records {
            assert_eq!(r.generated, r.reference, "{kind:?} {}", r.node_id);
        }
    }
}

#[test]
fn checkpoints_restore_identical_generations() {
    let (g, vocab) = five_pairs();
    let dir = tempfile::tempdir().unwrap();
    for kind in [BaselineKind::Seq2seq, BaselineKind::Cvae, BaselineKind::Transformer] {
        let mut cfg = small(kind);
        cfg.train.epochs = 3;
        let (m, _) = train_baseline(&cfg, &g, &all_split(), &vocab).unwrap();
        let path = dir.path().join(format!("{kind:?}.json"));
        m.checkpoint(&cfg).unwrap().save(&path).unwrap();
        let (back, back_cfg) = Baseline::load(&path).unwrap();
        assert_eq!(back_cfg, cfg);
        assert_eq!(back.kind(), kind);
        let ex = make_examples(&g, &vocab, &[0, 1, 2, 3, 4]).unwrap();
        let a = m.generate(&g, &vocab, &ex, DecodeMode::Greedy, 9).unwrap();
        let b = back.generate(&g, &vocab, &ex, DecodeMode::Greedy, 9).unwrap();
        assert_eq!(a, b, "{kind:?}");
    }
}

#[test]
fn cvae_generation_is_seeded() {
    let (g, vocab) = five_pairs();
    let mut cfg = small(BaselineKind::Cvae);
    cfg.train.epochs = 2;
    let (m, _) = train_baseline(&cfg, &g, &all_split(), &vocab).unwrap();
    let ex = make_examples(&g, &vocab, &[0, 1, 2, 3, 4]).unwrap();
    let a = m.generate(&g, &vocab, &ex, DecodeMode::Greedy, 5).unwrap();
    assert_eq!(a, m.generate(&g, &vocab, &ex, DecodeMode::Greedy, 5).unwrap());
}

#[test]
fn one_token_vocabulary_forces_output() {
    let nodes = vec![TermNode::new(0, "A", "x", Some("x x"))];
    let g = OntologyDag::new("one", nodes, vec![]).unwrap();
    let toks = vec![vec!["x".to_string()]];
    let vocab = Vocabulary::build(toks.iter().map(|t| t.as_slice()), 1).unwrap();
    let ex = make_examples(&g, &vocab, &[0]).unwrap();
    for kind in [BaselineKind::Seq2seq, BaselineKind::Cvae, BaselineKind::Transformer] {
        let m = Baseline::new(&small(kind), vocab.len()).unwrap();
        let r = &m.generate(&g, &vocab, &ex, DecodeMode::Greedy, 0).unwrap()[0];
        assert!(r.generated.iter().all(|t| t == "x"), "{kind:?}");
        assert!(r.finished || r.generated.len() == 64);
    }
}

#[test]
fn report_notes_recurrent_substitution() {
    let (g, vocab) = five_pairs();
    let mut cfg = small(BaselineKind::Seq2seq);
    cfg.train.epochs = 1;
    let (m, _) = train_baseline(&cfg, &g, &all_split(), &vocab).unwrap();
    let (_, report) = generate_baseline(&m, &cfg, &g, &vocab, &[1, 2], &MetricOptions::default()).unwrap();
    assert_eq!(report.model, "Seq2Seq");
    assert!(report.notes.iter().any(|n| n.contains("GRU")));
}
