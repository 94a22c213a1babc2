//! Click prediction and the (Q+1)-way softmax training loss.

use rand_chacha::ChaCha8Rng;

use nrnf_tensor::tape::{NodeId, Tape};
use nrnf_tensor::{Result, Scalar};

use crate::records::{NewsRecord, UserHistory};

use super::news::NewsCache;
use super::user::{encode_user, UserVectors};
use super::NrnfModel;

/// The combined click score with its two relevance components.
#[derive(Debug, Clone, Copy)]
pub struct CandidateScore {
    pub y: NodeId,
    pub y_p: NodeId,
    pub y_n: NodeId,
}

/// ŷ_p = r_c·u_p, ŷ_n = r_c·u_n, ŷ = w_p·ŷ_p + w_n·ŷ_n. With the negative
/// view disabled the score reduces to the positive term.
pub fn score_candidate<S: Scalar>(
    tape: &mut Tape<S>,
    model: &NrnfModel<S>,
    r_c: NodeId,
    user: &UserVectors,
) -> Result<CandidateScore> {
    let y_p = tape.dot(r_c, user.u_p)?;
    let y_n = tape.dot(r_c, user.u_n)?;
    let w_p = tape.param(model.idx.w_p)?;
    let weighted_p = tape.mul(w_p, y_p)?;
    let y = if model.cfg.negative_view {
        let w_n = tape.param(model.idx.w_n)?;
        let weighted_n = tape.mul(w_n, y_n)?;
        tape.add(weighted_p, weighted_n)?
    } else {
        weighted_p
    };
    Ok(CandidateScore { y, y_p, y_n })
}

/// Loss of one training sample: −log of the clicked candidate's posterior
/// under a softmax over the clicked and Q non-clicked scores, computed with
/// a stabilized log-sum-exp.
pub fn sample_loss<S: Scalar>(
    tape: &mut Tape<S>,
    model: &NrnfModel<S>,
    news: &[NewsRecord],
    history: &UserHistory,
    positive: usize,
    negatives: &[usize],
    cache: &mut NewsCache,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId> {
    let user = encode_user(tape, model, history, news, cache, rng)?;

    let r_pos = cache.encode(tape, model, news, positive, rng)?.r;
    let pos_score = score_candidate(tape, model, r_pos, &user)?.y;

    let mut scores = Vec::with_capacity(negatives.len() + 1);
    scores.push(pos_score);
    for &ni in negatives {
        let r_neg = cache.encode(tape, model, news, ni, rng)?.r;
        scores.push(score_candidate(tape, model, r_neg, &user)?.y);
    }
    let stacked = tape.stack_scalars(&scores)?;
    let lse = tape.logsumexp(stacked)?;
    tape.sub(lse, pos_score)
}
