use graphex_core::dag::{DataSplit, OntologyDag, TermNode};
use graphex_core::metrics::{DecodeMode, MetricOptions};
use graphex_core::models::transformer::{CondTransformer, Slot, TransformerConfig};
use graphex_core::models::{greedy, make_examples, mean_loss, train, Checkpoint, Example, SeqModel, TrainConfig};
use graphex_core::stage1::{DefinitionSource, NodeEmbeddingSet};
use graphex_core::stage2::*;
use graphex_core::text::Vocabulary;
use graphex_core::Error;
use graphex_nn::gradcheck::check_gradients;
use graphex_nn::Tape;
use ndarray::{Array1, Array2};

fn tiny(layers: usize, d: usize) -> TransformerConfig {
    TransformerConfig {
        d_model: d,
        heads: 2,
        ff_dim: 2 * d,
        enc_layers: layers,
        dec_layers: layers,
    }
}

fn cfg(use_tg: bool, use_dg: bool, t: TransformerConfig) -> Stage2Config {
    Stage2Config {
        transformer: t,
        use_tg,
        use_dg,
        train: TrainConfig {
            dropout: 0.0,
            ..TrainConfig::default()
        },
        decode: DecodeMode::Greedy,
        seed: 4,
    }
}

fn shape(use_tg: bool, use_dg: bool, local_dim: Option<usize>) -> Stage2Shape {
    Stage2Shape {
        config: cfg(use_tg, use_dg, tiny(1, 16)),
        local_dim,
        graph_dim: 6,
    }
}

fn toy() -> (OntologyDag, Vocabulary, NodeEmbeddingSet) {
    let names = ["heart", "left heart", "right heart", "heart valve", "left valve"];
    let defs = ["a pump", "a left pump", "a right pump", "a pump door", "a left pump door"];
    let nodes: Vec<TermNode> = (0..5).map(|i| TermNode::new(i, &format!("T:{i}"), names[i], Some(defs[i]))).collect();
    let g = OntologyDag::new("toy", nodes, vec![(0, 1), (0, 2), (0, 3), (3, 4)]).unwrap();
    let toks: Vec<Vec<String>> = g
        .nodes()
        .iter()
        .flat_map(|n| [n.terminology.clone(), n.definition_tokens.clone().unwrap()])
        .collect();
    let vocab = Vocabulary::build(toks.iter().map(|t| t.as_slice()), 1).unwrap();
    let f = |r: usize, c: usize, k: f64| Array2::from_shape_fn((r, c), |(i, j)| ((i * 7 + j * 3) as f64 * k).sin());
    let emb = NodeEmbeddingSet {
        term_ids: g.nodes().iter().map(|n| n.term_id.clone()).collect(),
        w: f(5, 3, 0.3),
        u: f(5, 3, 0.7),
        w_def: f(5, 3, 1.1),
        u_def: f(5, 3, 1.9),
        sources: vec![DefinitionSource::Curated; 5],
    };
    (g, vocab, emb)
}

#[test]
fn prefix_slot_count_follows_flags() {
    for (tg, dg) in [(false, false), (true, false), (false, true), (true, true)] {
        let m = Stage2Model::new(shape(tg, dg, None), 20).unwrap();
        assert_eq!(m.prefix_slots(), 1 + tg as usize + dg as usize);
    }
}

#[test]
fn local_only_prefix_is_one_slot_conditioned_transformer() {
    let (g, vocab, emb) = toy();
    let m = Stage2Model::new(shape(false, false, None), vocab.len()).unwrap();
    let plain = CondTransformer::new(tiny(1, 16), vec![Slot::LocalTrainable], vocab.len(), 4).unwrap();
    let mut ex = make_examples(&g, &vocab, &[0, 1, 2]).unwrap();
    m.attach(&mut ex, &g, &emb, &LocalProvider::Trainable).unwrap();
    assert!(ex.iter().all(|e| e.cond == vec![None]));
    assert_eq!(m.params().to_serialized(), plain.params().to_serialized());
    assert_eq!(mean_loss(&m, &ex, 0).unwrap(), mean_loss(&plain, &ex, 0).unwrap());
}

#[test]
fn zero_output_projection_gives_log_vocab() {
    let (g, vocab, emb) = toy();
    let mut m = Stage2Model::new(shape(true, true, None), vocab.len()).unwrap();
    let out = m.net.output_layer();
    m.params_mut().get_mut(out.weight).fill(0.0);
    m.params_mut().get_mut(out.bias.unwrap()).fill(0.0);
    let mut ex = make_examples(&g, &vocab, &[0, 1, 2, 3, 4]).unwrap();
    m.attach(&mut ex, &g, &emb, &LocalProvider::Trainable).unwrap();
    let per_token = mean_loss(&m, &ex, 0).unwrap();
    assert!((per_token - (vocab.len() as f64).ln()).abs() < 1e-12);
}

#[test]
fn loss_decomposes_over_batches() {
    let (g, vocab, emb) = toy();
    let m = Stage2Model::new(shape(true, true, None), vocab.len()).unwrap();
    let mut ex = make_examples(&g, &vocab, &[0, 1, 2, 3, 4]).unwrap();
    m.attach(&mut ex, &g, &emb, &LocalProvider::Trainable).unwrap();
    let whole = stage2_loss(&m, &ex).unwrap();
    let parts = stage2_loss(&m, &ex[..2]).unwrap() + stage2_loss(&m, &ex[2..]).unwrap();
    assert!((whole - parts).abs() < 1e-9 * whole);
}

#[test]
fn gradients_match_finite_differences() {
    let (g, vocab, emb) = toy();
    let table = LocalTable::parse("4\nT:0\t0.1 -0.2 0.3 0.5\nT:1\t1 0 -1 0.25\n").unwrap();
    let provider = LocalProvider::LookupFile(table);
    let shape = Stage2Shape {
        config: cfg(true, true, tiny(2, 32)),
        local_dim: Some(4),
        graph_dim: 6,
    };
    let mut m = Stage2Model::new(shape, vocab.len()).unwrap();
    let mut ex = make_examples(&g, &vocab, &[1, 3]).unwrap();
    // node 3 misses the lookup file and exercises the fallback path
    m.attach(&mut ex, &g, &emb, &provider).unwrap();
    let grads = {
        let mut tape = Tape::new(m.params());
        let mut ctx = graphex_core::models::LossCtx::eval(0);
        let a = m.example_loss(&mut tape, &ex[0], &mut ctx).unwrap();
        let b = m.example_loss(&mut tape, &ex[1], &mut ctx).unwrap();
        let l = tape.add(a, b);
        tape.backward(l)
    };
    let shadow = m.clone();
    let checks = check_gradients(m.params_mut(), &grads, 6, 1e-5, |p| {
        let mut model = shadow.clone();
        *model.params_mut() = p.clone();
        stage2_loss(&model, &ex).unwrap()
    });
    let worst = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    for c in &checks {
        assert!(c.rel_error < 1e-4, "{}: {}", c.name, c.rel_error);
    }
    assert!(checks.len() > 40, "{}", checks.len());
    println!("stage-2 worst block relative error {worst:.2e}");
}

#[test]
fn local_embed_providers() {
    let (_, vocab, _) = toy();
    let m = Stage2Model::new(shape(false, false, None), vocab.len()).unwrap();
    let tok = vocab.lookup("heart");
    let single = m.local_embed(&LocalProvider::Trainable, "T:0", &[tok]).unwrap();
    assert_eq!(single.provider, "trainable");
    assert_eq!(single.vector, m.params().get(m.net.embedding()).row(tok).to_owned());
    let toks = [vocab.lookup("left"), tok];
    let a = m.local_embed(&LocalProvider::Trainable, "T:1", &toks).unwrap();
    let b = m.local_embed(&LocalProvider::Trainable, "T:9", &toks).unwrap();
    assert_eq!(a.vector, b.vector);

    let table = LocalTable::parse("2\nT:1\t0.125 -3\nT:2\t0.125 -3\n").unwrap();
    let p = LocalProvider::LookupFile(table);
    let hit = m.local_embed(&p, "T:1", &toks).unwrap();
    assert_eq!(hit.provider, "lookup-file");
    assert_eq!(hit.vector.to_vec(), vec![0.125, -3.0]);
    assert_eq!(m.local_embed(&p, "T:2", &[tok]).unwrap().vector, hit.vector);
    let miss = m.local_embed(&p, "T:4", &toks).unwrap();
    assert_eq!(miss.provider, "trainable");
    assert_eq!(miss.vector, a.vector);
}

#[test]
fn mismatched_conditioning_is_fatal() {
    let (g, vocab, emb) = toy();
    let m = Stage2Model::new(shape(true, true, None), vocab.len()).unwrap();
    let mut ex = make_examples(&g, &vocab, &[0]).unwrap();
    let table = LocalTable::parse("2\nT:0\t1 2\n").unwrap();
    assert!(matches!(
        m.attach(&mut ex, &g, &emb, &LocalProvider::LookupFile(table)),
        Err(Error::Dimension(_))
    ));
    m.attach(&mut ex, &g, &emb, &LocalProvider::Trainable).unwrap();
    ex[0].cond[1] = Some(Array1::zeros(5));
    assert!(matches!(mean_loss(&m, &ex, 0), Err(Error::Dimension(_))));
}

#[test]
fn memorizes_one_pair_and_checkpoint_round_trips() {
    let (g, vocab, emb) = toy();
    let mut m = Stage2Model::new(shape(true, true, None), vocab.len()).unwrap();
    let mut ex = make_examples(&g, &vocab, &[4]).unwrap();
    m.attach(&mut ex, &g, &emb, &LocalProvider::Trainable).unwrap();
    let tc = TrainConfig {
        epochs: 300,
        batch_size: 1,
        lr: 3e-3,
        dropout: 0.0,
        patience: 300,
        target_loss: Some(0.01),
        ..TrainConfig::default()
    };
    let rep = train(&mut m, &ex, &[], &tc).unwrap();
    assert!(rep.final_train_loss() < 0.01);
    let out = greedy(&m, &ex[0], 64, 0).unwrap();
    assert_eq!(out.tokens, ex[0].tgt);
    assert_eq!(greedy(&m, &ex[0], 64, 0).unwrap(), out);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s2.json");
    m.checkpoint().unwrap().save(&path).unwrap();
    let back = Stage2Model::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(back.shape, m.shape);
    assert_eq!(back.params().to_serialized(), m.params().to_serialized());
    assert_eq!(greedy(&back, &ex[0], 64, 0).unwrap(), out);
}

#[test]
fn one_token_vocabulary_forces_output() {
    let names = vec![vec!["x".to_string()]];
    let vocab = Vocabulary::build(names.iter().map(|t| t.as_slice()), 1).unwrap();
    let nodes = vec![TermNode::new(0, "A", "x", Some("x"))];
    let g = OntologyDag::new("one", nodes, vec![]).unwrap();
    let emb = NodeEmbeddingSet {
        term_ids: vec!["A".into()],
        w: Array2::ones((1, 3)),
        u: Array2::ones((1, 3)),
        w_def: Array2::ones((1, 3)),
        u_def: Array2::ones((1, 3)),
        sources: vec![DefinitionSource::Curated],
    };
    let m = Stage2Model::new(shape(true, true, None), vocab.len()).unwrap();
    let mut ex = make_examples(&g, &vocab, &[0]).unwrap();
    m.attach(&mut ex, &g, &emb, &LocalProvider::Trainable).unwrap();
    let out = greedy(&m, &ex[0], 64, 0).unwrap();
    assert!(out.tokens.iter().all(|&t| t == 4));
    assert!(out.finished || out.tokens.len() == 64);
}

#[test]
fn definition_embedding_requires_bootstrap() {
    let (g, vocab, mut emb) = toy();
    let split = DataSplit {
        train: vec![0, 1, 2],
        valid: vec![3],
        test: vec![4],
        seed: 0,
    };
    let err = run_ablation(
        &g,
        &split,
        &vocab,
        &emb,
        &LocalProvider::Trainable,
        &cfg(true, true, tiny(1, 16)),
        &MetricOptions::default(),
    )
    .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("bootstrap") && msg.contains("--use-dg"), "{msg}");
    emb.sources[3] = DefinitionSource::Bootstrap;
    emb.sources[4] = DefinitionSource::Substituted;
    let mut c = cfg(true, true, tiny(1, 16));
    c.train.epochs = 2;
    let run = run_ablation(&g, &split, &vocab, &emb, &LocalProvider::Trainable, &c, &MetricOptions::default()).unwrap();
    assert_eq!(run.report.model, "Our Model");
    assert_eq!(run.records.len(), 1);
    assert_eq!(run.records[0].node_id, "T:4");
    // without DG the curated held-out sources are irrelevant
    emb.sources[3] = DefinitionSource::Curated;
    let mut c = cfg(true, false, tiny(1, 16));
    c.train.epochs = 1;
    let run = run_ablation(&g, &split, &vocab, &emb, &LocalProvider::Trainable, &c, &MetricOptions::default()).unwrap();
    assert_eq!(run.report.model, "Our Model w/o DG");
}

#[test]
fn example_conditioning_order() {
    let (g, vocab, emb) = toy();
    let m = Stage2Model::new(shape(true, true, None), vocab.len()).unwrap();
    let mut ex: Vec<Example> = make_examples(&g, &vocab, &[2]).unwrap();
    m.attach(&mut ex, &g, &emb, &LocalProvider::Trainable).unwrap();
    assert_eq!(ex[0].cond[1].as_ref().unwrap(), &emb.g_t(2));
    assert_eq!(ex[0].cond[2].as_ref().unwrap(), &emb.g_d(2));
}
