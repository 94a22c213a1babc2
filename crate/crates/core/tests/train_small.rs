//! End-to-end training on a small synthetic dataset: determinism, the
//! zero-learning-rate identity, the frozen-path/tape-path scoring
//! equivalence, and a small overfit run.

use nrnf_core::config::RunConfig;
use nrnf_core::eval::{encode_all_news, encode_user_frozen, score_impression, training_sample_auc};
use nrnf_core::model::{score_candidate, encode_user, ModelConfig, NewsCache, NrnfModel};
use nrnf_core::pipeline::{ingest, split_history, Dataset};
use nrnf_core::synth::{generate, GeneratorConfig};
use nrnf_core::trainer::{effective_threshold, train};
use nrnf_tensor::rng;
use nrnf_tensor::tape::Tape;

fn small_run() -> RunConfig {
    let mut cfg = RunConfig::bench();
    cfg.model.heads = 2;
    cfg.model.head_dim = 4;
    cfg.model.word_emb_dim = 12;
    cfg.data.title_len = 8;
    cfg.data.body_len = 16;
    cfg.data.pos_cap = 10;
    cfg.data.neg_cap = 6;
    cfg.train.epochs = 1;
    cfg.train.threads = 2;
    cfg.gen = GeneratorConfig {
        users: 20,
        news: 80,
        sessions: 300,
        topics: 4,
        topic_vocab: 25,
        common_vocab: 30,
        title_tokens_min: 4,
        title_tokens_max: 7,
        body_tokens_min: 10,
        body_tokens_max: 16,
        seed: 5,
        ..Default::default()
    };
    cfg
}

fn small_dataset(cfg: &RunConfig) -> Dataset {
    let generated = generate(&cfg.gen).unwrap();
    ingest(&generated.news, &generated.impressions, &cfg.data).unwrap()
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let mut cfg = small_run();
    cfg.train.learning_rate = 0.0;
    let ds = small_dataset(&cfg);
    let init: NrnfModel<f64> = NrnfModel::new(
        ModelConfig::from_run(&cfg, ds.vocab.size()),
        cfg.train.seed,
    );
    let outcome = train::<f64>(&ds, &cfg).unwrap();
    for (a, b) in init.params.iter().zip(outcome.model.params.iter()) {
        assert_eq!(a.tensor.data, b.tensor.data, "parameter {} moved at lr 0", a.name);
    }
}

#[test]
fn fixed_seed_reproduces_epoch_losses_exactly() {
    let cfg = small_run();
    let ds = small_dataset(&cfg);
    let a = train::<f32>(&ds, &cfg).unwrap();
    let b = train::<f32>(&ds, &cfg).unwrap();
    assert_eq!(a.logs[0].train_loss, b.logs[0].train_loss);
    assert_eq!(a.logs[0].val_auc, b.logs[0].val_auc);
    for (pa, pb) in a.model.params.iter().zip(b.model.params.iter()) {
        assert_eq!(pa.tensor.data, pb.tensor.data);
    }
}

#[test]
fn training_reduces_loss() {
    let mut cfg = small_run();
    cfg.train.epochs = 3;
    cfg.train.patience = 0;
    let ds = small_dataset(&cfg);
    let outcome = train::<f32>(&ds, &cfg).unwrap();
    let first = outcome.logs.first().unwrap().train_loss;
    let last = outcome.logs.last().unwrap().train_loss;
    assert!(last < first, "loss should fall: {first} -> {last}");
    assert!(first.is_finite() && last > 0.0);
}

#[test]
fn frozen_scoring_matches_tape_scoring() {
    let cfg = small_run();
    let ds = small_dataset(&cfg);
    let outcome = train::<f64>(&ds, &cfg).unwrap();
    let model = &outcome.model;
    let threshold = effective_threshold(&cfg);

    let news_vectors = encode_all_news(model, &ds.news, 2).unwrap();
    let imp = &ds.test[0];
    let history = split_history(
        &ds.histories[imp.impression],
        threshold,
        model.cfg.pos_cap,
        model.cfg.neg_cap,
    );
    let (u_p, u_n) = encode_user_frozen(model, &history, &news_vectors).unwrap();
    let frozen = score_impression(model, &u_p, &u_n, &imp.candidates, &news_vectors);

    // same scores through the recording path in eval mode
    let mut tape = Tape::new(&model.params, false, true);
    let mut cache = NewsCache::new();
    let mut no_dropout = rng::stream(0, &[0]);
    let user = encode_user(&mut tape, model, &history, &ds.news, &mut cache, &mut no_dropout)
        .unwrap();
    for (i, &cand) in imp.candidates.iter().enumerate() {
        let r = cache.encode(&mut tape, model, &ds.news, cand, &mut no_dropout).unwrap().r;
        let s = score_candidate(&mut tape, model, r, &user).unwrap();
        let tape_score = tape.scalar_value(s.y);
        assert!(
            (tape_score - frozen[i]).abs() < 1e-9,
            "candidate {i}: tape {tape_score} vs frozen {}",
            frozen[i]
        );
    }
}

#[test]
fn thread_count_changes_nothing_in_f64() {
    // chunked merging is order-stable; in f64 the grads are identical to
    // the last bit for this small batch
    let mut cfg1 = small_run();
    cfg1.train.threads = 1;
    let mut cfg2 = small_run();
    cfg2.train.threads = 2;
    let ds = small_dataset(&cfg1);
    let a = train::<f64>(&ds, &cfg1).unwrap();
    let b = train::<f64>(&ds, &cfg2).unwrap();
    assert!((a.logs[0].train_loss - b.logs[0].train_loss).abs() < 1e-12);
}

#[test]
fn divergence_aborts_naming_the_batch() {
    // an absurd learning rate with clipping effectively disabled blows the
    // parameters up; the next batch's non-finite loss must abort
    let mut cfg = small_run();
    cfg.train.learning_rate = 1e8;
    cfg.train.grad_clip = 1e30;
    cfg.train.epochs = 3;
    cfg.train.batch_size = 4;
    let ds = small_dataset(&cfg);
    match train::<f32>(&ds, &cfg) {
        Err(nrnf_core::CoreError::Numeric(msg)) => {
            assert!(msg.contains("batch"), "error should name the batch: {msg}");
        }
        Err(other) => panic!("expected a numeric abort, got {other}"),
        Ok(_) => panic!("expected divergence at lr 1e8"),
    }
}

#[test]
fn small_overfit_reaches_high_training_auc() {
    let mut cfg = small_run();
    cfg.train.epochs = 60;
    cfg.train.patience = 0;
    cfg.train.learning_rate = 5e-3;
    cfg.train.batch_size = 8;
    let mut ds = small_dataset(&cfg);
    // late sessions have non-empty histories, which ranking needs
    let keep = ds.train.len() - 24;
    ds.train.drain(..keep);
    ds.val.clear();
    let outcome = train::<f32>(&ds, &cfg).unwrap();
    let auc = training_sample_auc(
        &outcome.model,
        &ds,
        &ds.train,
        effective_threshold(&cfg),
        2,
    )
    .unwrap();
    assert!(auc >= 0.95, "overfit AUC {auc}");
}
