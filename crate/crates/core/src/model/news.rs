//! News encoder: title/body word sequences through Transformers, additive
//! pooling, and interactive title↔body cross-attention, aggregated as
//! r = r_t + r_b + c_t + c_b.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;

use nrnf_tensor::tape::{NodeId, Tape};
use nrnf_tensor::{Result, Scalar, TensorError};

use crate::config::NewsMode;
use crate::records::NewsRecord;

use super::blocks::{additive_attention, additive_attention_with_query, mean_pool, transformer_stack};
use super::{NrnfModel, SideParams};

/// The unified news embedding with its components retained.
#[derive(Debug, Clone, Copy)]
pub struct NewsParts {
    pub r: NodeId,
    pub r_t: Option<NodeId>,
    pub r_b: Option<NodeId>,
    pub c_t: Option<NodeId>,
    pub c_b: Option<NodeId>,
}

/// Word ids to embeddings: out[i] = word_emb[id_i] + pos_emb[i], still at
/// embedding width. The mask flags the true (pre-padding) positions.
pub fn embed_sequence<S: Scalar>(
    tape: &mut Tape<S>,
    model: &NrnfModel<S>,
    side: &SideParams,
    ids: &[u32],
    true_len: usize,
) -> Result<(NodeId, Vec<bool>)> {
    let max_len = model.params.get(side.pos).tensor.shape[0];
    if ids.len() != max_len {
        return Err(TensorError::Dimension {
            op: "embed_sequence",
            detail: format!("sequence length {} vs position table {max_len}", ids.len()),
        });
    }
    let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    let words = tape.embedding_lookup(model.idx.word_emb, &idx)?;
    let pos = tape.param(side.pos)?;
    let embedded = tape.add(words, pos)?;
    let mask: Vec<bool> = (0..ids.len()).map(|i| i < true_len).collect();
    Ok((embedded, mask))
}

fn encode_side<S: Scalar>(
    tape: &mut Tape<S>,
    model: &NrnfModel<S>,
    side: &SideParams,
    ids: &[u32],
    true_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(NodeId, NodeId, Vec<bool>)> {
    let (embedded, mask) = embed_sequence(tape, model, side, ids, true_len)?;
    let embedded = tape.dropout(embedded, model.cfg.dropout, rng)?;
    let proj_w = tape.param(model.idx.proj_w)?;
    let proj_b = tape.param(model.idx.proj_b)?;
    let x = tape.matmul(embedded, proj_w)?;
    let x = tape.add_row_broadcast(x, proj_b)?;
    let h = transformer_stack(
        tape, x, &mask, &side.blocks, model.cfg.head_dim, model.cfg.dropout, rng,
    )?;
    let pooled = if model.cfg.word_attention {
        additive_attention(tape, h, &mask, &side.word_attn)?
    } else {
        mean_pool(tape, h, &mask)?
    };
    Ok((h, pooled, mask))
}

/// Encodes one news record into its embedding and components. Empty bodies
/// contribute zero vectors and a zero interactive query.
pub fn encode_news<S: Scalar>(
    tape: &mut Tape<S>,
    model: &NrnfModel<S>,
    rec: &NewsRecord,
    rng: &mut ChaCha8Rng,
) -> Result<NewsParts> {
    let cfg = &model.cfg;
    if rec.title_len == 0 {
        return Err(TensorError::DegenerateInput {
            op: "encode_news",
            detail: format!("news {} has an empty title", rec.news_id),
        });
    }
    let d = cfg.d_model();

    match cfg.news_mode {
        NewsMode::TitleOnly => {
            let (_, r_t, _) =
                encode_side(tape, model, &model.idx.title, &rec.title_ids, rec.title_len, rng)?;
            Ok(NewsParts { r: r_t, r_t: Some(r_t), r_b: None, c_t: None, c_b: None })
        }
        NewsMode::BodyOnly => {
            if rec.body_len == 0 {
                let zero = tape.constant(vec![S::ZERO; d], vec![d])?;
                return Ok(NewsParts { r: zero, r_t: None, r_b: Some(zero), c_t: None, c_b: None });
            }
            let (_, r_b, _) =
                encode_side(tape, model, &model.idx.body, &rec.body_ids, rec.body_len, rng)?;
            Ok(NewsParts { r: r_b, r_t: None, r_b: Some(r_b), c_t: None, c_b: None })
        }
        NewsMode::TitleBody => {
            let (h_t, r_t, mask_t) =
                encode_side(tape, model, &model.idx.title, &rec.title_ids, rec.title_len, rng)?;

            if rec.body_len == 0 {
                let zero = tape.constant(vec![S::ZERO; d], vec![d])?;
                if !cfg.interactive {
                    return Ok(NewsParts {
                        r: tape.add(r_t, zero)?,
                        r_t: Some(r_t),
                        r_b: Some(zero),
                        c_t: None,
                        c_b: None,
                    });
                }
                let zero_q = tape.constant(vec![S::ZERO; d], vec![d])?;
                let c_t = additive_attention_with_query(
                    tape, zero_q, h_t, &mask_t, &model.idx.inter_title,
                )?;
                let sum = tape.add(r_t, zero)?;
                let sum = tape.add(sum, c_t)?;
                let r = tape.add(sum, zero)?;
                return Ok(NewsParts {
                    r,
                    r_t: Some(r_t),
                    r_b: Some(zero),
                    c_t: Some(c_t),
                    c_b: Some(zero),
                });
            }

            let (h_b, r_b, mask_b) =
                encode_side(tape, model, &model.idx.body, &rec.body_ids, rec.body_len, rng)?;

            if !cfg.interactive {
                let r = tape.add(r_t, r_b)?;
                return Ok(NewsParts { r, r_t: Some(r_t), r_b: Some(r_b), c_t: None, c_b: None });
            }

            let c_b =
                additive_attention_with_query(tape, r_t, h_b, &mask_b, &model.idx.inter_body)?;
            // The prose form queries the title words with the body summary;
            // the literal flag reproduces the published duplicate instead.
            let c_t = if cfg.literal_interactive_title {
                additive_attention_with_query(tape, r_t, h_b, &mask_b, &model.idx.inter_title)?
            } else {
                additive_attention_with_query(tape, r_b, h_t, &mask_t, &model.idx.inter_title)?
            };
            let sum = tape.add(r_t, r_b)?;
            let sum = tape.add(sum, c_t)?;
            let r = tape.add(sum, c_b)?;
            Ok(NewsParts { r, r_t: Some(r_t), r_b: Some(r_b), c_t: Some(c_t), c_b: Some(c_b) })
        }
    }
}

/// Per-tape memo of encoded news, keyed by news index. A news appearing
/// several times in one sample (history and candidate, duplicates in a
/// view) shares one encoding node, so gradients accumulate through every
/// use.
#[derive(Default)]
pub struct NewsCache {
    map: HashMap<usize, NewsParts>,
}

impl NewsCache {
    pub fn new() -> Self {
        Self { map: HashMap::new() }
    }

    pub fn encode<S: Scalar>(
        &mut self,
        tape: &mut Tape<S>,
        model: &NrnfModel<S>,
        news: &[NewsRecord],
        idx: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<NewsParts> {
        if let Some(parts) = self.map.get(&idx) {
            return Ok(*parts);
        }
        let parts = encode_news(tape, model, &news[idx], rng)?;
        self.map.insert(idx, parts);
        Ok(parts)
    }
}
