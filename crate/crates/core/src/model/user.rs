//! User encoder: the positive and negative clicked-news views, each a
//! news-level Transformer over position-tagged news embeddings followed by
//! additive attention pooling. An empty view is exactly the zero vector.

use rand_chacha::ChaCha8Rng;

use nrnf_tensor::tape::{NodeId, Tape};
use nrnf_tensor::{Result, Scalar, TensorError};

use crate::records::{NewsRecord, UserHistory};

use super::blocks::{additive_attention, mean_pool, transformer_stack};
use super::news::NewsCache;
use super::{NrnfModel, ViewParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewKind {
    Positive,
    Negative,
}

/// The user embedding pair with empty-view flags.
#[derive(Debug, Clone, Copy)]
pub struct UserVectors {
    pub u_p: NodeId,
    pub u_n: NodeId,
    pub positive_empty: bool,
    pub negative_empty: bool,
}

fn view_params<S: Scalar>(model: &NrnfModel<S>, kind: ViewKind) -> &ViewParams {
    match kind {
        ViewKind::Positive => &model.idx.view_p,
        ViewKind::Negative => &model.idx.view_n,
    }
}

/// Encodes one view from already-encoded news embeddings (most recent
/// last). Adds learned news-position embeddings, runs the view's
/// Transformer, then pools. Zero news means a zero vector.
pub fn encode_view<S: Scalar>(
    tape: &mut Tape<S>,
    model: &NrnfModel<S>,
    news_vectors: &[NodeId],
    kind: ViewKind,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId> {
    let d = model.cfg.d_model();
    if news_vectors.is_empty() {
        return tape.constant(vec![S::ZERO; d], vec![d]);
    }
    let cap = match kind {
        ViewKind::Positive => model.cfg.pos_cap,
        ViewKind::Negative => model.cfg.neg_cap,
    };
    if news_vectors.len() > cap {
        return Err(TensorError::Dimension {
            op: "encode_view",
            detail: format!("{} news exceeds the view cap {cap}", news_vectors.len()),
        });
    }
    let vp = view_params(model, kind);
    let n = news_vectors.len();
    let seq = tape.stack_rows(news_vectors)?;
    let positions: Vec<usize> = (0..n).collect();
    let pos = tape.embedding_lookup(vp.pos, &positions)?;
    let seq = tape.add(seq, pos)?;
    let mask = vec![true; n];
    let h = transformer_stack(
        tape, seq, &mask, &vp.blocks, model.cfg.head_dim, model.cfg.dropout, rng,
    )?;
    if model.cfg.news_attention {
        additive_attention(tape, h, &mask, &vp.news_attn)
    } else {
        mean_pool(tape, h, &mask)
    }
}

/// Splits are done by the caller ([`crate::pipeline::split_history`]); this
/// encodes both views with the shared news encoder. With the negative view
/// disabled, u_n is the zero vector regardless of history.
pub fn encode_user<S: Scalar>(
    tape: &mut Tape<S>,
    model: &NrnfModel<S>,
    history: &UserHistory,
    news: &[NewsRecord],
    cache: &mut NewsCache,
    rng: &mut ChaCha8Rng,
) -> Result<UserVectors> {
    let d = model.cfg.d_model();
    let mut pos_vecs = Vec::with_capacity(history.positive.len());
    for &ni in &history.positive {
        pos_vecs.push(cache.encode(tape, model, news, ni, rng)?.r);
    }
    let u_p = encode_view(tape, model, &pos_vecs, ViewKind::Positive, rng)?;

    let (u_n, negative_empty) = if model.cfg.negative_view && !history.negative.is_empty() {
        let mut neg_vecs = Vec::with_capacity(history.negative.len());
        for &ni in &history.negative {
            neg_vecs.push(cache.encode(tape, model, news, ni, rng)?.r);
        }
        (encode_view(tape, model, &neg_vecs, ViewKind::Negative, rng)?, false)
    } else {
        (tape.constant(vec![S::ZERO; d], vec![d])?, true)
    };

    Ok(UserVectors {
        u_p,
        u_n,
        positive_empty: history.positive.is_empty(),
        negative_empty,
    })
}
