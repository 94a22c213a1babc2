//! Shared attention machinery: the Transformer encoder block and the two
//! additive-attention pooling forms.

use rand_chacha::ChaCha8Rng;

use nrnf_tensor::tape::{NodeId, Tape};
use nrnf_tensor::{Result, Scalar};

use super::{AttnParams, BlockParams, QueryAttnParams};

/// Multi-head self-attention with a key padding mask, residual connections,
/// layer norm, and a two-layer position-wise feed-forward net (hidden 4d,
/// relu). Masked rows come out exactly zero.
pub fn transformer_block<S: Scalar>(
    tape: &mut Tape<S>,
    x: NodeId,
    mask: &[bool],
    bp: &BlockParams,
    head_dim: usize,
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId> {
    let scale = S::from_f64(1.0 / (head_dim as f64).sqrt());

    let mut head_outputs = Vec::with_capacity(bp.wq.len());
    for h in 0..bp.wq.len() {
        let wq = tape.param(bp.wq[h])?;
        let wk = tape.param(bp.wk[h])?;
        let wv = tape.param(bp.wv[h])?;
        let q = tape.matmul(x, wq)?;
        let k = tape.matmul(x, wk)?;
        let v = tape.matmul(x, wv)?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, scale)?;
        let weights = tape.softmax_rows(scores, Some(mask))?;
        head_outputs.push(tape.matmul(weights, v)?);
    }
    let ctx = tape.concat_cols(&head_outputs)?;
    let wo = tape.param(bp.wo)?;
    let bo = tape.param(bp.bo)?;
    let proj = tape.matmul(ctx, wo)?;
    let proj = tape.add_row_broadcast(proj, bo)?;
    let proj = tape.dropout(proj, dropout, rng)?;

    let res1 = tape.add(x, proj)?;
    let g1 = tape.param(bp.ln1_gamma)?;
    let b1 = tape.param(bp.ln1_beta)?;
    let normed1 = tape.layer_norm(res1, g1, b1)?;

    let f1w = tape.param(bp.ff1_w)?;
    let f1b = tape.param(bp.ff1_b)?;
    let f2w = tape.param(bp.ff2_w)?;
    let f2b = tape.param(bp.ff2_b)?;
    let h1 = tape.matmul(normed1, f1w)?;
    let h1 = tape.add_row_broadcast(h1, f1b)?;
    let h1 = tape.relu(h1)?;
    let h2 = tape.matmul(h1, f2w)?;
    let h2 = tape.add_row_broadcast(h2, f2b)?;
    let h2 = tape.dropout(h2, dropout, rng)?;

    let res2 = tape.add(normed1, h2)?;
    let g2 = tape.param(bp.ln2_gamma)?;
    let b2 = tape.param(bp.ln2_beta)?;
    let normed2 = tape.layer_norm(res2, g2, b2)?;

    tape.zero_masked_rows(normed2, mask)
}

/// Runs the configured number of blocks in sequence.
pub fn transformer_stack<S: Scalar>(
    tape: &mut Tape<S>,
    x: NodeId,
    mask: &[bool],
    blocks: &[BlockParams],
    head_dim: usize,
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId> {
    let mut h = x;
    for bp in blocks {
        h = transformer_block(tape, h, mask, bp, head_dim, dropout, rng)?;
    }
    Ok(h)
}

/// Additive attention pooling with a learned query folded into the bias:
/// score_i = vᵀ·tanh(W·k_i + b), masked softmax, weighted sum of keys.
pub fn additive_attention<S: Scalar>(
    tape: &mut Tape<S>,
    keys: NodeId,
    mask: &[bool],
    p: &AttnParams,
) -> Result<NodeId> {
    let w = tape.param(p.w)?;
    let b = tape.param(p.b)?;
    let proj = tape.matmul(keys, w)?;
    let proj = tape.add_row_broadcast(proj, b)?;
    finish_attention(tape, keys, mask, proj, p.v)
}

/// Additive attention scored against a runtime query vector:
/// score_i = vᵀ·tanh(W·k_i + b + U·query).
pub fn additive_attention_with_query<S: Scalar>(
    tape: &mut Tape<S>,
    query: NodeId,
    keys: NodeId,
    mask: &[bool],
    p: &QueryAttnParams,
) -> Result<NodeId> {
    let w = tape.param(p.w)?;
    let u = tape.param(p.u)?;
    let b = tape.param(p.b)?;
    let d = tape.data(query).len();
    let q_row = tape.reshape(query, vec![1, d])?;
    let q_proj = tape.matmul(q_row, u)?;
    let a = tape.shape(q_proj)[1];
    let q_vec = tape.reshape(q_proj, vec![a])?;
    let proj = tape.matmul(keys, w)?;
    let proj = tape.add_row_broadcast(proj, b)?;
    let proj = tape.add_row_broadcast(proj, q_vec)?;
    finish_attention(tape, keys, mask, proj, p.v)
}

fn finish_attention<S: Scalar>(
    tape: &mut Tape<S>,
    keys: NodeId,
    mask: &[bool],
    proj: NodeId,
    v: usize,
) -> Result<NodeId> {
    let l = tape.shape(keys)[0];
    let d = tape.shape(keys)[1];
    let act = tape.tanh(proj)?;
    let vn = tape.param(v)?;
    let scores = tape.matmul(act, vn)?;
    let scores = tape.reshape(scores, vec![l])?;
    let weights = tape.softmax_rows(scores, Some(mask))?;
    let wrow = tape.reshape(weights, vec![1, l])?;
    let pooled = tape.matmul(wrow, keys)?;
    tape.reshape(pooled, vec![d])
}

/// Mean of the unmasked rows; the pooling used when attention is ablated.
pub fn mean_pool<S: Scalar>(tape: &mut Tape<S>, keys: NodeId, mask: &[bool]) -> Result<NodeId> {
    tape.masked_mean_rows(keys, mask)
}
