//! The NRNF model: shared news encoder, per-view user encoders, and the
//! weighted two-score click predictor.

pub mod blocks;
pub mod news;
pub mod score;
pub mod user;

use rand_chacha::ChaCha8Rng;

use nrnf_tensor::rng::{self, stage};
use nrnf_tensor::{ParamSet, Scalar};

use crate::config::{NewsMode, RunConfig};

pub use news::{encode_news, NewsCache, NewsParts};
pub use score::{sample_loss, score_candidate};
pub use user::{encode_user, encode_view, UserVectors, ViewKind};

/// Everything the forward pass needs to know about geometry and variants.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub word_emb_dim: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub attn_dim: usize,
    pub blocks: usize,
    pub dropout: f64,
    pub title_len: usize,
    pub body_len: usize,
    pub pos_cap: usize,
    pub neg_cap: usize,
    pub news_mode: NewsMode,
    pub word_attention: bool,
    pub news_attention: bool,
    pub interactive: bool,
    pub literal_interactive_title: bool,
    pub share_view_params: bool,
    pub negative_view: bool,
}

impl ModelConfig {
    pub fn from_run(cfg: &RunConfig, vocab_size: usize) -> Self {
        Self {
            vocab_size,
            word_emb_dim: cfg.model.word_emb_dim,
            heads: cfg.model.heads,
            head_dim: cfg.model.head_dim,
            attn_dim: cfg.model.attn_dim(),
            blocks: cfg.model.blocks,
            dropout: cfg.model.dropout,
            title_len: cfg.data.title_len,
            body_len: cfg.data.body_len,
            pos_cap: cfg.data.pos_cap,
            neg_cap: cfg.data.neg_cap,
            news_mode: cfg.model.news_mode,
            word_attention: cfg.model.word_attention,
            news_attention: cfg.model.news_attention,
            interactive: cfg.model.interactive,
            literal_interactive_title: cfg.model.literal_interactive_title,
            share_view_params: cfg.model.share_view_params,
            negative_view: cfg.model.negative_view,
        }
    }

    pub fn d_model(&self) -> usize {
        self.heads * self.head_dim
    }
}

/// Additive attention with the learned query folded into the bias.
#[derive(Debug, Clone)]
pub struct AttnParams {
    pub w: usize,
    pub b: usize,
    pub v: usize,
}

/// Additive attention scored against a runtime query vector.
#[derive(Debug, Clone)]
pub struct QueryAttnParams {
    pub w: usize,
    pub u: usize,
    pub b: usize,
    pub v: usize,
}

/// One Transformer encoder block's parameters (per-head projections).
#[derive(Debug, Clone)]
pub struct BlockParams {
    pub wq: Vec<usize>,
    pub wk: Vec<usize>,
    pub wv: Vec<usize>,
    pub wo: usize,
    pub bo: usize,
    pub ln1_gamma: usize,
    pub ln1_beta: usize,
    pub ff1_w: usize,
    pub ff1_b: usize,
    pub ff2_w: usize,
    pub ff2_b: usize,
    pub ln2_gamma: usize,
    pub ln2_beta: usize,
}

/// A word-sequence side of the news encoder: position table, Transformer
/// stack, word-level pooling attention.
#[derive(Debug, Clone)]
pub struct SideParams {
    pub pos: usize,
    pub blocks: Vec<BlockParams>,
    pub word_attn: AttnParams,
}

/// One user view: news-position table, news-level Transformer stack,
/// news-level pooling attention.
#[derive(Debug, Clone)]
pub struct ViewParams {
    pub pos: usize,
    pub blocks: Vec<BlockParams>,
    pub news_attn: AttnParams,
}

/// Handles of every parameter in the set.
#[derive(Debug, Clone)]
pub struct ModelIndex {
    pub word_emb: usize,
    pub proj_w: usize,
    pub proj_b: usize,
    pub title: SideParams,
    pub body: SideParams,
    /// Title-aware body attention (produces c_b).
    pub inter_body: QueryAttnParams,
    /// Body-aware title attention (produces c_t).
    pub inter_title: QueryAttnParams,
    pub view_p: ViewParams,
    pub view_n: ViewParams,
    pub w_p: usize,
    pub w_n: usize,
}

pub struct NrnfModel<S: Scalar> {
    pub cfg: ModelConfig,
    pub params: ParamSet<S>,
    pub idx: ModelIndex,
}

fn init_block<S: Scalar>(
    params: &mut ParamSet<S>,
    prefix: &str,
    d: usize,
    heads: usize,
    head_dim: usize,
    rng: &mut ChaCha8Rng,
) -> BlockParams {
    let mut wq = Vec::with_capacity(heads);
    let mut wk = Vec::with_capacity(heads);
    let mut wv = Vec::with_capacity(heads);
    for h in 0..heads {
        wq.push(params.add_xavier(&format!("{prefix}.h{h}.wq"), d, head_dim, rng));
        wk.push(params.add_xavier(&format!("{prefix}.h{h}.wk"), d, head_dim, rng));
        wv.push(params.add_xavier(&format!("{prefix}.h{h}.wv"), d, head_dim, rng));
    }
    let ffn = 4 * d;
    BlockParams {
        wq,
        wk,
        wv,
        wo: params.add_xavier(&format!("{prefix}.wo"), d, d, rng),
        bo: params.add_zeros(&format!("{prefix}.bo"), vec![d]),
        ln1_gamma: params.add_ones(&format!("{prefix}.ln1.gamma"), vec![d]),
        ln1_beta: params.add_zeros(&format!("{prefix}.ln1.beta"), vec![d]),
        ff1_w: params.add_xavier(&format!("{prefix}.ff1.w"), d, ffn, rng),
        ff1_b: params.add_zeros(&format!("{prefix}.ff1.b"), vec![ffn]),
        ff2_w: params.add_xavier(&format!("{prefix}.ff2.w"), ffn, d, rng),
        ff2_b: params.add_zeros(&format!("{prefix}.ff2.b"), vec![d]),
        ln2_gamma: params.add_ones(&format!("{prefix}.ln2.gamma"), vec![d]),
        ln2_beta: params.add_zeros(&format!("{prefix}.ln2.beta"), vec![d]),
    }
}

fn init_attn<S: Scalar>(
    params: &mut ParamSet<S>,
    prefix: &str,
    d: usize,
    a: usize,
    rng: &mut ChaCha8Rng,
) -> AttnParams {
    AttnParams {
        w: params.add_xavier(&format!("{prefix}.w"), d, a, rng),
        b: params.add_uniform(&format!("{prefix}.b"), vec![a], 0.1, rng),
        v: params.add_xavier(&format!("{prefix}.v"), a, 1, rng),
    }
}

fn init_query_attn<S: Scalar>(
    params: &mut ParamSet<S>,
    prefix: &str,
    d: usize,
    a: usize,
    rng: &mut ChaCha8Rng,
) -> QueryAttnParams {
    QueryAttnParams {
        w: params.add_xavier(&format!("{prefix}.w"), d, a, rng),
        u: params.add_xavier(&format!("{prefix}.u"), d, a, rng),
        b: params.add_zeros(&format!("{prefix}.b"), vec![a]),
        v: params.add_xavier(&format!("{prefix}.v"), a, 1, rng),
    }
}

fn init_side<S: Scalar>(
    params: &mut ParamSet<S>,
    prefix: &str,
    max_len: usize,
    emb: usize,
    d: usize,
    heads: usize,
    head_dim: usize,
    attn_dim: usize,
    n_blocks: usize,
    rng: &mut ChaCha8Rng,
) -> SideParams {
    let pos = params.add_uniform(&format!("{prefix}.pos"), vec![max_len.max(1), emb], 0.1, rng);
    let blocks = (0..n_blocks)
        .map(|b| init_block(params, &format!("{prefix}.block{b}"), d, heads, head_dim, rng))
        .collect();
    let word_attn = init_attn(params, &format!("{prefix}.attn"), d, attn_dim, rng);
    SideParams { pos, blocks, word_attn }
}

fn init_view<S: Scalar>(
    params: &mut ParamSet<S>,
    prefix: &str,
    cap: usize,
    d: usize,
    heads: usize,
    head_dim: usize,
    attn_dim: usize,
    n_blocks: usize,
    rng: &mut ChaCha8Rng,
) -> ViewParams {
    let pos = params.add_uniform(&format!("{prefix}.pos"), vec![cap.max(1), d], 0.1, rng);
    let blocks = (0..n_blocks)
        .map(|b| init_block(params, &format!("{prefix}.block{b}"), d, heads, head_dim, rng))
        .collect();
    let news_attn = init_attn(params, &format!("{prefix}.attn"), d, attn_dim, rng);
    ViewParams { pos, blocks, news_attn }
}

impl<S: Scalar> NrnfModel<S> {
    /// Builds and initializes the full parameter set. Parameters are always
    /// registered in the same order regardless of variant flags, so every
    /// variant shares the checkpoint layout and the same init draws.
    pub fn new(cfg: ModelConfig, seed: u64) -> Self {
        let mut rng = rng::stream(seed, &[stage::INIT]);
        let mut params = ParamSet::new();
        let (d, emb, a) = (cfg.d_model(), cfg.word_emb_dim, cfg.attn_dim);

        let word_emb =
            params.add_uniform("word_emb", vec![cfg.vocab_size, emb], 0.1, &mut rng);
        let proj_w = params.add_xavier("proj.w", emb, d, &mut rng);
        let proj_b = params.add_zeros("proj.b", vec![d]);

        let title = init_side(
            &mut params, "title", cfg.title_len, emb, d, cfg.heads, cfg.head_dim, a,
            cfg.blocks, &mut rng,
        );
        let body = init_side(
            &mut params, "body", cfg.body_len, emb, d, cfg.heads, cfg.head_dim, a,
            cfg.blocks, &mut rng,
        );
        let inter_body = init_query_attn(&mut params, "inter.body", d, a, &mut rng);
        let inter_title = init_query_attn(&mut params, "inter.title", d, a, &mut rng);

        let view_p = init_view(
            &mut params, "view.pos", cfg.pos_cap, d, cfg.heads, cfg.head_dim, a, cfg.blocks,
            &mut rng,
        );
        let view_n = if cfg.share_view_params {
            // The negative view reuses the positive view's parameters except
            // for its own position table sized to the negative cap.
            let pos = params.add_uniform("view.neg.pos", vec![cfg.neg_cap.max(1), d], 0.1, &mut rng);
            ViewParams { pos, blocks: view_p.blocks.clone(), news_attn: view_p.news_attn.clone() }
        } else {
            init_view(
                &mut params, "view.neg", cfg.neg_cap, d, cfg.heads, cfg.head_dim, a,
                cfg.blocks, &mut rng,
            )
        };

        let w_p = params.add_uniform("w_p", vec![1], 0.1, &mut rng);
        let w_n = params.add_uniform("w_n", vec![1], 0.1, &mut rng);

        let idx = ModelIndex {
            word_emb,
            proj_w,
            proj_b,
            title,
            body,
            inter_body,
            inter_title,
            view_p,
            view_n,
            w_p,
            w_n,
        };
        Self { cfg, params, idx }
    }

    pub fn w_p(&self) -> f64 {
        self.params.get(self.idx.w_p).tensor.data[0].to_f64()
    }

    pub fn w_n(&self) -> f64 {
        self.params.get(self.idx.w_n).tensor.data[0].to_f64()
    }
}
