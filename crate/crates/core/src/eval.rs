//! Frozen-parameter evaluation: encode news once, score impressions, and
//! macro-average the ranking metrics.

use nrnf_tensor::rng;
use nrnf_tensor::tape::Tape;
use nrnf_tensor::Scalar;

use crate::metrics::{aggregate, MetricsRecord, RankedImpression};
use crate::model::{NewsCache, NrnfModel};
use crate::pipeline::{split_history, Dataset};
use crate::records::{EvalImpression, NewsRecord, TrainingSample, UserHistory};
use crate::Result;

/// Deterministic chunked parallel map: results keep input order regardless
/// of thread count.
pub fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let threads = threads.max(1).min(items.len().max(1));
    if threads <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let mut out: Vec<Vec<R>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (c, slice) in items.chunks(chunk).enumerate() {
            let f = &f;
            handles.push(scope.spawn(move || {
                slice
                    .iter()
                    .enumerate()
                    .map(|(i, t)| f(c * chunk + i, t))
                    .collect::<Vec<R>>()
            }));
        }
        out = handles.into_iter().map(|h| h.join().expect("worker panic")).collect();
    });
    out.into_iter().flatten().collect()
}

/// Encodes every news article once with dropout off.
pub fn encode_all_news<S: Scalar>(
    model: &NrnfModel<S>,
    news: &[NewsRecord],
    threads: usize,
) -> Result<Vec<Vec<S>>> {
    let encoded = parallel_map(news, threads, |idx, _| -> Result<Vec<S>> {
        let mut tape = Tape::new(&model.params, false, false);
        let mut cache = NewsCache::new();
        let mut rng = rng::stream(0, &[0]);
        let parts = cache.encode(&mut tape, model, news, idx, &mut rng)?;
        Ok(tape.data(parts.r).to_vec())
    });
    encoded.into_iter().collect()
}

/// Encodes one user's views from precomputed news vectors, dropout off.
/// Returns (u_p, u_n) as plain vectors.
pub fn encode_user_frozen<S: Scalar>(
    model: &NrnfModel<S>,
    history: &UserHistory,
    news_vectors: &[Vec<S>],
) -> Result<(Vec<S>, Vec<S>)> {
    use crate::model::{encode_view, ViewKind};
    let mut tape = Tape::new(&model.params, false, false);
    let mut rng = rng::stream(0, &[0]);
    let d = model.cfg.d_model();

    let pos_nodes = history
        .positive
        .iter()
        .map(|&ni| tape.constant(news_vectors[ni].clone(), vec![d]))
        .collect::<nrnf_tensor::Result<Vec<_>>>()?;
    let u_p = encode_view(&mut tape, model, &pos_nodes, ViewKind::Positive, &mut rng)?;

    let u_n = if model.cfg.negative_view && !history.negative.is_empty() {
        let neg_nodes = history
            .negative
            .iter()
            .map(|&ni| tape.constant(news_vectors[ni].clone(), vec![d]))
            .collect::<nrnf_tensor::Result<Vec<_>>>()?;
        encode_view(&mut tape, model, &neg_nodes, ViewKind::Negative, &mut rng)?
    } else {
        tape.constant(vec![S::ZERO; d], vec![d])?
    };
    Ok((tape.data(u_p).to_vec(), tape.data(u_n).to_vec()))
}

fn dot_f64<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.to_f64() * y.to_f64()).sum()
}

/// Scores one impression's candidates against a user's frozen vectors.
pub fn score_impression<S: Scalar>(
    model: &NrnfModel<S>,
    u_p: &[S],
    u_n: &[S],
    candidates: &[usize],
    news_vectors: &[Vec<S>],
) -> Vec<f64> {
    let (w_p, w_n) = (model.w_p(), model.w_n());
    candidates
        .iter()
        .map(|&ni| {
            let r_c = &news_vectors[ni];
            let y_p = dot_f64(r_c, u_p);
            if model.cfg.negative_view {
                w_p * y_p + w_n * dot_f64(r_c, u_n)
            } else {
                w_p * y_p
            }
        })
        .collect()
}

/// Full evaluation of a split at the given dwell threshold.
pub fn evaluate_split<S: Scalar>(
    model: &NrnfModel<S>,
    ds: &Dataset,
    impressions: &[EvalImpression],
    threshold: f64,
    threads: usize,
) -> Result<MetricsRecord> {
    let news_vectors = encode_all_news(model, &ds.news, threads)?;
    let ranked = parallel_map(impressions, threads, |_, imp| -> Result<RankedImpression> {
        let history = split_history(
            &ds.histories[imp.impression],
            threshold,
            model.cfg.pos_cap,
            model.cfg.neg_cap,
        );
        let (u_p, u_n) = encode_user_frozen(model, &history, &news_vectors)?;
        let scores = score_impression(model, &u_p, &u_n, &imp.candidates, &news_vectors);
        Ok(RankedImpression { scores, labels: imp.labels.clone() })
    });
    let ranked: Vec<RankedImpression> = ranked.into_iter().collect::<Result<_>>()?;
    Ok(aggregate(&ranked))
}

/// AUC over training samples, each scored as its own (Q+1)-way impression.
pub fn training_sample_auc<S: Scalar>(
    model: &NrnfModel<S>,
    ds: &Dataset,
    samples: &[TrainingSample],
    threshold: f64,
    threads: usize,
) -> Result<f64> {
    let news_vectors = encode_all_news(model, &ds.news, threads)?;
    let ranked = parallel_map(samples, threads, |_, s| -> Result<RankedImpression> {
        let history = split_history(
            &ds.histories[s.impression],
            threshold,
            model.cfg.pos_cap,
            model.cfg.neg_cap,
        );
        let (u_p, u_n) = encode_user_frozen(model, &history, &news_vectors)?;
        let mut candidates = vec![s.positive];
        candidates.extend(&s.negatives);
        let scores = score_impression(model, &u_p, &u_n, &candidates, &news_vectors);
        let mut labels = vec![false; candidates.len()];
        labels[0] = true;
        Ok(RankedImpression { scores, labels })
    });
    let ranked: Vec<RankedImpression> = ranked.into_iter().collect::<Result<_>>()?;
    Ok(aggregate(&ranked).auc)
}
